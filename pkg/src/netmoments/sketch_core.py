"""Shared-randomness maps, truncated/quantized exponential draws, and mergeable min-sketch state.

Every node derives the same map values from a common master seed (keyed
hashing), so "shared global randomness" costs no per-node storage.  Sketch
entries are exponential variables truncated by resampling and uniformly
quantized to integer levels; the all-ones level acts as the infinity
sentinel, so elementwise integer minimum is the merge operation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from hashlib import blake2b

import numpy as np

_PHI_DOMAIN = b"phi"  # sign maps and roots-of-unity maps share one draw per (index, value)
_CHI_DOMAIN = b"chi"  # bucket maps

_SNAP_EPS = 1e-15


class ShapeMismatchError(ValueError):
    """Merging sketch state with incompatible dimensions, channel, or quantizer."""


@dataclass(frozen=True)
class SharedRandomness:
    """Seeds for the global map families: r1 outer maps, r2 replicas each,
    plus s1 bucket maps into num_buckets buckets."""

    master_seed: int
    r1: int
    r2: int
    k: int = 2
    num_buckets: int = 1
    s1: int = 1

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must fit in 64 bits")
        if min(self.r1, self.r2, self.s1) < 1:
            raise ValueError("r1, r2 and s1 must all be >= 1")
        if self.k < 2:
            raise ValueError("moment order k must be >= 2")
        if self.num_buckets < 1:
            raise ValueError("num_buckets must be >= 1")

    @property
    def _key(self) -> bytes:
        return self.master_seed.to_bytes(8, "big")


def _map_draw(rand: SharedRandomness, domain: bytes, index: int, value: int) -> int:
    """Uniform 64-bit draw, a pure function of (master_seed, domain, index, value)."""
    msg = domain + index.to_bytes(4, "big") + int(value).to_bytes(8, "big")
    return int.from_bytes(blake2b(msg, digest_size=8, key=rand._key).digest(), "big")


def _check_index(index: int, limit: int, what: str) -> None:
    if not (1 <= index <= limit):
        raise ValueError(f"{what} {index} out of range [1, {limit}]")


def sign_map_eval(rand: SharedRandomness, map_index: int, value: int) -> int:
    """Evaluate the map_index-th sign map on an alphabet value, returning +1 or -1.

    Shares its underlying draw with root_map_eval so that the k=2 root map
    and the sign map agree on every value.
    """
    _check_index(map_index, rand.r1, "map_index")
    return 1 if _map_draw(rand, _PHI_DOMAIN, map_index, value) % 2 == 0 else -1


@dataclass(frozen=True)
class RootOfUnity:
    re: float
    im: float

    def as_complex(self) -> complex:
        return complex(self.re, self.im)


@lru_cache(maxsize=64)
def _roots_table(k: int) -> tuple[RootOfUnity, ...]:
    # Snap near-zero / near-unit coordinates so that e.g. the k-even root -1
    # yields an exactly-zero rate (alpha + 1 == 0) downstream.
    roots = []
    for ell in range(k):
        angle = 2.0 * math.pi * ell / k
        re, im = math.cos(angle), math.sin(angle)
        if abs(re) < _SNAP_EPS:
            re = 0.0
        elif abs(abs(re) - 1.0) < _SNAP_EPS:
            re = math.copysign(1.0, re)
        if abs(im) < _SNAP_EPS:
            im = 0.0
        elif abs(abs(im) - 1.0) < _SNAP_EPS:
            im = math.copysign(1.0, im)
        roots.append(RootOfUnity(re, im))
    return tuple(roots)


def root_map_eval(rand: SharedRandomness, map_index: int, value: int) -> RootOfUnity:
    """Evaluate the map_index-th roots-of-unity map: a uniform k-th root of unity."""
    _check_index(map_index, rand.r1, "map_index")
    ell = _map_draw(rand, _PHI_DOMAIN, map_index, value) % rand.k
    return _roots_table(rand.k)[ell]


def bucket_map_eval(rand: SharedRandomness, bucket_map_index: int, value: int) -> int:
    """Evaluate the bucket_map_index-th bucket map: a uniform bucket in [1, num_buckets]."""
    _check_index(bucket_map_index, rand.s1, "bucket_map_index")
    return 1 + _map_draw(rand, _CHI_DOMAIN, bucket_map_index, value) % rand.num_buckets


@lru_cache(maxsize=32)
def sign_table(rand: SharedRandomness, alphabet_size: int) -> np.ndarray:
    """(r1, M) table of sign_map_eval over the whole alphabet."""
    tbl = np.empty((rand.r1, alphabet_size), dtype=np.int8)
    for i in range(1, rand.r1 + 1):
        for v in range(1, alphabet_size + 1):
            tbl[i - 1, v - 1] = sign_map_eval(rand, i, v)
    tbl.setflags(write=False)
    return tbl


@lru_cache(maxsize=32)
def root_table(rand: SharedRandomness, alphabet_size: int) -> np.ndarray:
    """(r1, M) complex table of root_map_eval over the whole alphabet."""
    tbl = np.empty((rand.r1, alphabet_size), dtype=np.complex128)
    for i in range(1, rand.r1 + 1):
        for v in range(1, alphabet_size + 1):
            tbl[i - 1, v - 1] = root_map_eval(rand, i, v).as_complex()
    tbl.setflags(write=False)
    return tbl


@lru_cache(maxsize=32)
def bucket_table(rand: SharedRandomness, alphabet_size: int) -> np.ndarray:
    """(s1, M) table of bucket_map_eval over the whole alphabet."""
    tbl = np.empty((rand.s1, alphabet_size), dtype=np.int32)
    for t in range(1, rand.s1 + 1):
        for v in range(1, alphabet_size + 1):
            tbl[t - 1, v - 1] = bucket_map_eval(rand, t, v)
    tbl.setflags(write=False)
    return tbl


@dataclass(frozen=True)
class QuantConfig:
    """Truncation length, quantizer resolution, and the relative-error target
    the default resolution rule is derived from."""

    truncation_L: float
    quant_bits: int
    target_mu: float = 0.05

    def __post_init__(self):
        if not (self.truncation_L > 0):
            raise ValueError("truncation_L must be positive")
        if self.quant_bits < 1:
            raise ValueError("quant_bits must be >= 1")
        if not (0.0 < self.target_mu < 1.0):
            raise ValueError("target_mu must lie in (0, 1)")

    @classmethod
    def for_population(cls, n_nodes: int, target_mu: float = 0.05) -> "QuantConfig":
        """Default rule: L = 2 ln n and a cell width of at most target_mu / n,
        so minima of order 1/n carry relative quantization error <= target_mu."""
        if n_nodes < 2:
            raise ValueError("need at least 2 nodes")
        L = 2.0 * math.log(n_nodes)
        bits = math.ceil(math.log2(L * n_nodes / target_mu))
        return cls(truncation_L=L, quant_bits=bits, target_mu=target_mu)

    @property
    def cell_width(self) -> float:
        return self.truncation_L / (1 << self.quant_bits)

    @property
    def infinity_level(self) -> int:
        return 1 << self.quant_bits

    @property
    def bits_per_entry(self) -> int:
        # finite levels plus the sentinel need one extra bit on the wire
        return self.quant_bits + 1

    def quantize(self, value: float) -> int:
        """Floor a raw value in [0, L] to its cell index."""
        return min(int(value / self.cell_width), self.infinity_level - 1)

    def dequantize(self, levels):
        """Cell midpoints; the sentinel level maps to +inf.  Works elementwise."""
        arr = np.asarray(levels)
        out = (arr + 0.5) * self.cell_width
        return np.where(arr >= self.infinity_level, np.inf, out)


@dataclass(frozen=True)
class QuantizedExp:
    """One quantized exponential entry: a cell level, or the infinity sentinel."""

    level: int
    quant: QuantConfig

    def __post_init__(self):
        if not (0 <= self.level <= self.quant.infinity_level):
            raise ValueError("level out of quantizer range")

    @property
    def is_infinite(self) -> bool:
        return self.level == self.quant.infinity_level

    @property
    def value(self) -> float:
        if self.is_infinite:
            return math.inf
        return (self.level + 0.5) * self.quant.cell_width


def draw_truncated_exp(rate: float, quant: QuantConfig, rng: np.random.Generator) -> QuantizedExp:
    """Draw Exp(rate) conditioned on being <= L (by resampling), then quantize.

    A zero rate encodes "this node contributes nothing" and yields the
    infinity sentinel directly.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rate == 0:
        return QuantizedExp(quant.infinity_level, quant)
    scale = 1.0 / rate
    z = rng.exponential(scale)
    while z > quant.truncation_L:
        z = rng.exponential(scale)
    return QuantizedExp(quant.quantize(z), quant)


def truncated_exp_levels(
    rates: np.ndarray, r2: int, quant: QuantConfig, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized draw_truncated_exp: one row of r2 levels per rate entry."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise ValueError("rates must be nonnegative")
    out = np.full((rates.size, r2), quant.infinity_level, dtype=np.int32)
    pos = rates > 0
    n_pos = int(pos.sum())
    if n_pos == 0:
        return out
    scales = 1.0 / rates[pos]
    z = rng.exponential(1.0, size=(n_pos, r2)) * scales[:, None]
    over = z > quant.truncation_L
    while over.any():
        rows = np.broadcast_to(scales[:, None], z.shape)[over]
        z[over] = rng.exponential(1.0, size=rows.size) * rows
        over = z > quant.truncation_L
    levels = np.minimum(
        (z / quant.cell_width).astype(np.int32), quant.infinity_level - 1
    )
    out[pos] = levels
    return out


@dataclass
class SketchVector:
    """An (r1, r2) grid of quantized-exponential levels for one logical channel."""

    levels: np.ndarray
    channel_tag: str
    quant: QuantConfig

    def __post_init__(self):
        self.levels = np.asarray(self.levels)
        if self.levels.ndim != 2:
            raise ShapeMismatchError("levels must be a 2-d (r1, r2) grid")
        if not np.issubdtype(self.levels.dtype, np.integer):
            raise ShapeMismatchError("levels must be integer cell indices")

    @classmethod
    def all_infinite(cls, r1: int, r2: int, channel_tag: str, quant: QuantConfig) -> "SketchVector":
        return cls(
            np.full((r1, r2), quant.infinity_level, dtype=np.int32), channel_tag, quant
        )

    @property
    def r1(self) -> int:
        return self.levels.shape[0]

    @property
    def r2(self) -> int:
        return self.levels.shape[1]

    @property
    def wire_bits(self) -> int:
        return self.levels.size * self.quant.bits_per_entry

    def row_values(self, map_index: int) -> np.ndarray:
        """Dequantized replica row for one outer map (1-indexed)."""
        _check_index(map_index, self.r1, "map_index")
        return self.quant.dequantize(self.levels[map_index - 1])

    def copy(self) -> "SketchVector":
        return SketchVector(self.levels.copy(), self.channel_tag, self.quant)


def merge_min(a: SketchVector, b: SketchVector) -> SketchVector:
    """Elementwise minimum.  The sentinel is the top level, so it absorbs."""
    if a.levels.shape != b.levels.shape:
        raise ShapeMismatchError(
            f"cannot merge grids of shapes {a.levels.shape} and {b.levels.shape}"
        )
    if a.channel_tag != b.channel_tag:
        raise ShapeMismatchError(
            f"cannot merge channels {a.channel_tag!r} and {b.channel_tag!r}"
        )
    if a.quant != b.quant:
        raise ShapeMismatchError("cannot merge grids with different quantizers")
    return SketchVector(np.minimum(a.levels, b.levels), a.channel_tag, a.quant)


def harmonic_estimate(row) -> float:
    """Population estimate r2 / sum(row) from one replica row of dequantized values.

    Any infinity in the row (in particular an all-infinite row, meaning no
    node contributed) drives the sum to infinity and the estimate to 0.
    """
    arr = np.asarray(row, dtype=float)
    total = float(arr.sum())
    if not math.isfinite(total):
        return 0.0
    if total <= 0.0:
        return math.inf
    return arr.size / total


@dataclass
class BottomKState:
    """Per outer map, the r2 smallest finite exponential values seen so far."""

    r2: int
    rows: list[list[float]] = field(default_factory=list)

    def __post_init__(self):
        if self.r2 < 1:
            raise ValueError("r2 must be >= 1")
        for row in self.rows:
            if len(row) > self.r2 or sorted(row) != list(row):
                raise ValueError("rows must be sorted and hold at most r2 values")

    @classmethod
    def from_single_draws(cls, draws: list[float], r2: int) -> "BottomKState":
        """Node-local state: one draw per outer map, infinities dropped."""
        return cls(r2, [[z] if math.isfinite(z) else [] for z in draws])

    @property
    def r1(self) -> int:
        return len(self.rows)


def bottom_k_merge(a: BottomKState, b: BottomKState) -> BottomKState:
    """Keep the r2 smallest values per map across both states.

    Values are merged as sets: equal values collapse, so re-merging a state
    already heard is a no-op and the operation is a true semilattice
    (commutative, associative, idempotent).  Distinct nodes colliding on a
    value has probability zero in the continuous model.
    """
    if a.r1 != b.r1 or a.r2 != b.r2:
        raise ShapeMismatchError("bottom-k states must share r1 and r2")
    merged = []
    for ra, rb in zip(a.rows, b.rows):
        row: list[float] = []
        for v in heapq.merge(ra, rb):
            if not row or v != row[-1]:
                row.append(v)
                if len(row) == a.r2:
                    break
        merged.append(row)
    return BottomKState(a.r2, merged)


def bottom_k_estimate(state: BottomKState, map_index: int) -> float:
    """Population estimate from the r2 retained minima of one map.

    With fewer than r2 finite values the whole population has been seen, so
    the count itself is exact.  Otherwise the estimate is
    (r2 - 1) / (1 - exp(-v)) with v the largest retained value: mapping
    exponentials through 1 - exp(-v) gives uniform order statistics, for
    which this is the classical unbiased population estimator.
    """
    _check_index(map_index, state.r1, "map_index")
    row = state.rows[map_index - 1]
    if len(row) < state.r2:
        return float(len(row))
    v = row[-1]
    return (state.r2 - 1) / -math.expm1(-v)
