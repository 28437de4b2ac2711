import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmoments.network import (
    DEFAULT_CONNECTIVITY_C,
    Topology,
    build_rgg,
    complete_topology,
    conductance_small,
    connectivity_radius,
    cycle_topology,
    from_edges,
    giant_component,
    induced_subgraph,
    percolation_radius,
    read_edge_list,
    write_edge_list,
    write_positions,
)

from oracles import bfs_components


class TestRadii:
    def test_connectivity_formula(self):
        n, c = 500, 3.0
        assert connectivity_radius(n, c) == pytest.approx(math.sqrt(c * math.log(n) / n))

    def test_doubling_c_scales_by_sqrt2(self):
        assert connectivity_radius(100, 4.0) == pytest.approx(
            math.sqrt(2) * connectivity_radius(100, 2.0)
        )

    def test_percolation_formula(self):
        assert percolation_radius(100, 1.0) == pytest.approx(0.1)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            connectivity_radius(1, 1.0)
        with pytest.raises(ValueError):
            percolation_radius(10, 0.0)

    def test_default_connectivity_calibration(self):
        # the calibrated default keeps N = 1000 instances connected in at
        # least 95 of 100 seeds
        n = 1000
        radius = connectivity_radius(n, DEFAULT_CONNECTIVITY_C)
        connected = 0
        for seed in range(100):
            topo = build_rgg(n, radius, np.random.default_rng(seed))
            if len(giant_component(topo).giant_set) == n:
                connected += 1
        assert connected >= 95

    def test_default_percolation_calibration(self):
        # giant component holds at least 0.8 N at N = 2000 in >= 90% of seeds
        n = 2000
        radius = percolation_radius(n)
        hits = 0
        for seed in range(40):
            topo = build_rgg(n, radius, np.random.default_rng(seed))
            if len(giant_component(topo).giant_set) >= 0.8 * n:
                hits += 1
        assert hits >= 36


class TestRgg:
    def test_full_radius_is_complete(self):
        topo = build_rgg(12, math.sqrt(2.0), np.random.default_rng(0))
        assert all(topo.degree(u) == 11 for u in range(12))

    def test_tiny_radius_is_empty(self):
        topo = build_rgg(12, 1e-9, np.random.default_rng(0))
        assert topo.num_edges == 0

    def test_deterministic_given_seed(self):
        a = build_rgg(50, 0.2, np.random.default_rng(5))
        b = build_rgg(50, 0.2, np.random.default_rng(5))
        assert np.array_equal(a.positions, b.positions)
        assert list(a.edges()) == list(b.edges())

    def test_structure_validates(self):
        for seed in range(10):
            topo = build_rgg(40, 0.25, np.random.default_rng(seed))
            topo.validate()

    def test_radius_bounds(self):
        with pytest.raises(ValueError):
            build_rgg(10, 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            build_rgg(10, 2.0, np.random.default_rng(0))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_radius_monotonicity(self, seed):
        # growing the radius over fixed positions never removes an edge
        rng = np.random.default_rng(seed)
        positions = rng.random((25, 2))
        previous: set = set()
        for radius in (0.05, 0.1, 0.2, 0.4, 0.8):
            pairs = {
                (u, v)
                for u in range(25)
                for v in range(u + 1, 25)
                if math.dist(positions[u], positions[v]) <= radius
            }
            assert previous <= pairs
            previous = pairs


class TestTopology:
    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            from_edges(3, [(0, 0)])

    def test_complete_graph(self):
        topo = complete_topology(5)
        topo.validate()
        assert topo.num_edges == 10

    def test_cycle(self):
        topo = cycle_topology(6)
        assert all(topo.degree(u) == 2 for u in range(6))

    def test_induced_subgraph(self):
        topo = from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        sub, orig = induced_subgraph(topo, [1, 2, 3])
        assert list(orig) == [1, 2, 3]
        assert sorted(sub.edges()) == [(0, 1), (1, 2)]


class TestGiantComponent:
    def test_two_components(self):
        edges = [(0, 1), (1, 2), (2, 3), (3, 4), (5, 6), (6, 7)]
        report = giant_component(from_edges(8, edges))
        assert report.giant_set == frozenset({0, 1, 2, 3, 4})
        assert report.alpha == pytest.approx(3 / 8)

    def test_connected_alpha_zero(self):
        report = giant_component(cycle_topology(9))
        assert report.alpha == 0.0
        assert len(report.giant_set) == 9

    def test_tie_broken_by_smallest_id(self):
        report = giant_component(from_edges(4, [(0, 1), (2, 3)]))
        assert report.giant_set == frozenset({0, 1})

    def test_labels_are_equivalence_classes(self):
        rng = np.random.default_rng(8)
        topo = build_rgg(60, 0.12, rng)
        report = giant_component(topo)
        ids = report.component_ids
        for u, v in topo.edges():
            assert ids[u] == ids[v]
        # labels are the smallest member of each class
        for u in range(60):
            members = np.flatnonzero(ids == ids[u])
            assert ids[u] == members.min()

    def test_matches_bfs_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 300))
            p = rng.random() * 0.05
            edges = [
                (u, v)
                for u in range(n)
                for v in range(u + 1, n)
                if rng.random() < p
            ]
            topo = from_edges(n, edges)
            mine = giant_component(topo).component_ids
            oracle = bfs_components(n, topo.adjacency)
            # same partition: labels agree because both use smallest member
            assert np.array_equal(mine, oracle)


class TestConductance:
    def test_single_edge(self):
        assert conductance_small(from_edges(2, [(0, 1)])) == pytest.approx(1.0)

    def test_k4_vs_c4(self):
        k4 = complete_topology(4)
        c4 = cycle_topology(4)
        phi_k4 = conductance_small(k4)
        phi_c4 = conductance_small(c4)
        assert phi_k4 == pytest.approx(2 / 3)
        assert phi_c4 == pytest.approx(1 / 2)
        assert phi_k4 > phi_c4

    def test_disconnected_zero(self):
        assert conductance_small(from_edges(4, [(0, 1), (2, 3)])) == 0.0

    def test_too_large_rejected(self):
        with pytest.raises(ValueError):
            conductance_small(complete_topology(21))


class TestSerialization:
    def test_edge_list_round_trip(self, tmp_path):
        topo = build_rgg(30, 0.3, np.random.default_rng(4))
        path = tmp_path / "edges.txt"
        write_edge_list(topo, path)
        loaded = read_edge_list(path)
        assert loaded.n_nodes == 30
        assert loaded.radius == pytest.approx(0.3)
        assert sorted(loaded.edges()) == sorted(topo.edges())

    def test_edge_list_no_radius(self, tmp_path):
        topo = complete_topology(4)
        path = tmp_path / "edges.txt"
        write_edge_list(topo, path)
        assert path.read_text().splitlines()[0] == "4 -"
        assert read_edge_list(path).radius is None

    def test_positions_file(self, tmp_path):
        topo = build_rgg(5, 0.5, np.random.default_rng(1))
        path = tmp_path / "pos.txt"
        write_positions(topo, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 5
        u, x, y = lines[2].split()
        assert int(u) == 2
        assert float(x) == pytest.approx(topo.positions[2, 0], abs=1e-9)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nonsense\n")
        with pytest.raises(ValueError):
            read_edge_list(path)
