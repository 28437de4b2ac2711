"""Distributed estimation of scaled frequency moments F_k / N^k.

Sketching maps composed with exponential min-sketches spread over gossip or
slotted-Aloha networks, with exact oracles validating every probabilistic
claim at desk scale.
"""

from .estimators import (
    Dataset,
    ErrorBudget,
    EstimatorState,
    Histogram,
    ams_reference_f2,
    estimate_f2,
    estimate_fk,
    exact_fk,
    exact_nplus,
    percolation_bound_check,
)
from .network import (
    ComponentReport,
    Topology,
    build_rgg,
    complete_topology,
    connectivity_radius,
    conductance_small,
    giant_component,
    percolation_radius,
)
from .protocols import (
    AlohaSchedule,
    GossipSchedule,
    SpreadConfig,
    SpreadReport,
    account_bits,
    aloha_step,
    gossip_step,
    measure_spreading,
)
from .simulator import (
    CapacityError,
    DataModel,
    ExperimentConfig,
    ExperimentReport,
    TrialResult,
    run_experiment,
    run_f2_trial,
    run_fk_trial,
    run_percolation_experiment,
    solve_budget,
)
from .sketch_core import (
    BottomKState,
    QuantConfig,
    QuantizedExp,
    RootOfUnity,
    SharedRandomness,
    SketchVector,
    bottom_k_estimate,
    bottom_k_merge,
    bucket_map_eval,
    draw_truncated_exp,
    harmonic_estimate,
    merge_min,
    root_map_eval,
    sign_map_eval,
)

__version__ = "0.1.0"
