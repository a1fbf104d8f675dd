import math
import time
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from utils.rng import ENTITY_OFFSETS, ENTITY_PAST, ENTITY_TYPES, ReplicaRNG
from utils.workers import map_replicas
from .constants import HurstParams
from .errors import DomainError
from .renewal import RenewalTable, build_renewal_table, q_product_sum, q_tail_sum, sample_offsets
from .union_find import count_components
from .urn import draw_types, link_individuals

# Lazy past walks stop this many multiples of n_total to the left of the origin
DEFAULT_WINDOW_FACTOR = 10_000

# Renewal table length used when a caller does not bring one
DEFAULT_TABLE_N = 1 << 15


@dataclass(frozen=True)
class UrnConfig:
    """
    Parameters:
    -----------
    alpha: urn exponent in (0, 1/2)
    n_total: individuals simulated forward (indices 1..n_total)
    window_past: depth W of the past; ancestral lines reaching below -W found fresh classes
    steps_per_unit: discretisation density n of the rescaled walk
    seed: master seed
    """
    alpha: float
    n_total: int
    window_past: Optional[int] = None
    steps_per_unit: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise DomainError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if self.n_total < 1:
            raise DomainError(f"n_total must be positive, got {self.n_total}")
        if self.window_past is not None and self.window_past < 0:
            raise DomainError(f"window_past must be nonnegative, got {self.window_past}")
        if self.steps_per_unit is not None and self.steps_per_unit < 1:
            raise DomainError(f"steps_per_unit must be positive, got {self.steps_per_unit}")

    @property
    def window(self) -> int:
        if self.window_past is None:
            return DEFAULT_WINDOW_FACTOR * self.n_total
        return int(self.window_past)

    @property
    def n(self) -> int:
        return self.n_total if self.steps_per_unit is None else int(self.steps_per_unit)


@dataclass(frozen=True)
class LinearRealization:
    """One urn over the integers, indices 1..n_total

    component_id holds class roots; past individuals share the slot numbering, so two
    individuals are in the same class exactly when their ids agree.
    """
    parent_offset: np.ndarray
    component_id: np.ndarray
    type_: np.ndarray
    S: np.ndarray
    steps_per_unit: int
    window: int
    n_past: int

    @property
    def n_total(self) -> int:
        return self.parent_offset.size

    def same_component(self, i: int, j: int) -> bool:
        return bool(self.component_id[i - 1] == self.component_id[j - 1])

    def components(self) -> int:
        return count_components(self.component_id)


def simulate_linear(cfg: UrnConfig, rng: ReplicaRNG, offsets: Optional[np.ndarray] = None) -> LinearRealization:
    """
    Sample the urn on 1..n_total with a lazily followed past

    Parameters:
    -----------
    cfg: urn configuration
    rng: stream of this replica
    offsets: optional forced parent offsets R_1..R_n (all >= 1), used to pin degenerate cases
    """
    n = cfg.n_total
    if offsets is None:
        offsets = sample_offsets(rng.fork(ENTITY_OFFSETS).uniform_open(n), cfg.alpha)
    else:
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.shape != (n,) or np.any(offsets < 1):
            raise DomainError("forced offsets must be n_total integers >= 1")

    key = rng.fork(ENTITY_PAST).hash_key()
    roots, n_slots, n_past = link_individuals(
        offsets, np.array([-1], dtype=np.int64), np.array([0], dtype=np.int64),
        np.array([0], dtype=np.int64), n, cfg.window, key, cfg.alpha,
    )
    types_all = draw_types(roots, rng.fork(ENTITY_TYPES))
    type_ = types_all[:n]
    S = np.zeros(n + 1, dtype=np.int64)
    S[1:] = np.cumsum(type_, dtype=np.int64)

    return LinearRealization(parent_offset=offsets, component_id=roots[:n], type_=type_, S=S,
                             steps_per_unit=cfg.n, window=cfg.window, n_past=n_past)


def scale_of(n: int, alpha: float, tbl: Optional[RenewalTable] = None) -> float:
    """c(n) from tbl, or from the default-length table for alpha"""
    if tbl is None:
        tbl = build_renewal_table(alpha, DEFAULT_TABLE_N)
    return tbl.scale(n)


def interpolate_walk(S: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of the integer walk S at real positions x"""
    return np.interp(x, np.arange(S.size, dtype=np.float64), S.astype(np.float64))


def rescaled_path(r: LinearRealization, p: HurstParams, t_grid, tbl: Optional[RenewalTable] = None) -> np.ndarray:
    """S^(n)(t) = S(n t)/c(n) on t_grid"""
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    n = r.steps_per_unit
    horizon = r.n_total / n
    if np.any(t < 0.0) or np.any(t > horizon * (1.0 + 1e-12)):
        raise DomainError(f"times must lie in [0, {horizon}]")
    x = np.minimum(t * n, float(r.n_total))
    return interpolate_walk(r.S, x) / scale_of(n, p.alpha, tbl)


def coalescence_with_tail(i: int, j: int, tbl: RenewalTable, tail_tolerance: float = 0.5) -> Tuple[float, float]:
    """(c2 sum_r q_{i+r} q_{j+r}, share of it carried by the analytic tail)"""
    value, tail = q_product_sum(tbl, int(i), int(j), tail_tolerance)
    return tbl.c2 * value, tbl.c2 * tail


def coalescence_exact(i: int, j: int, tbl: RenewalTable, tail_tolerance: float = 0.5) -> float:
    """Probability that ancestral lines started i and j steps right of a barrier meet at or left of it

    Two individuals of the linear urn at distance d coalesce with probability
    coalescence_exact(0, d, tbl).
    """
    return coalescence_with_tail(i, j, tbl, tail_tolerance)[0]


def truncation_bias(tbl: RenewalTable, window: int) -> float:
    """Upper estimate c2 sum_{r > W} q_r^2 of the coalescence mass a window W loses"""
    start = int(window) + 1
    if start > tbl.N:
        return tbl.c2 * q_tail_sum(tbl, start)
    head = math.fsum(tbl.q[start:] ** 2)
    return tbl.c2 * (head + tbl.q2_tail)


def _coalescence_replica(rng: ReplicaRNG, cfg: UrnConfig, pairs) -> np.ndarray:
    r = simulate_linear(cfg, rng)
    return np.array([r.same_component(i, j) for i, j in pairs], dtype=np.float64)


def coalescence_mc(i: int, j: int, cfg: UrnConfig, replicas: int, seed: int) -> Tuple[float, float]:
    """Monte Carlo frequency of i ~ j and its standard error"""
    if min(i, j) < 1 or max(i, j) > cfg.n_total:
        raise DomainError(f"indices must lie in 1..{cfg.n_total}")
    hits = np.array(map_replicas(_coalescence_replica, replicas, seed, cfg, [(i, j)]))[:, 0]
    p_hat = float(hits.mean())
    return p_hat, math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / replicas)


def _endpoint_replica(rng: ReplicaRNG, cfg: UrnConfig) -> float:
    return float(simulate_linear(cfg, rng).S[-1])


def variance_ratio(cfg: UrnConfig, replicas: int, seed: int, tbl: Optional[RenewalTable] = None) -> Tuple[float, float]:
    """Var[S_n]/(c3 n^(2 alpha + 1)) over replicas with a Gaussian-approximation standard error"""
    if replicas < 2:
        raise DomainError("variance needs at least two replicas")
    start_time = time.time()
    values = np.array(map_replicas(_endpoint_replica, replicas, seed, cfg))
    c_sq = scale_of(cfg.n_total, cfg.alpha, tbl) ** 2
    ratio = float(np.var(values, ddof=1) / c_sq)
    logging.info(f"Variance ratio over {replicas} replicas took {time.time() - start_time:.2f}s")
    return ratio, ratio * math.sqrt(2.0 / (replicas - 1))
