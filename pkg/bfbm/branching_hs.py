import math
import time
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.resources import check_budget
from utils.rng import ENTITY_OFFSETS, ENTITY_PAST, ENTITY_TYPES, ReplicaRNG
from utils.workers import map_replicas
from .errors import DomainError
from .linear_hs import DEFAULT_TABLE_N, DEFAULT_WINDOW_FACTOR
from .renewal import RenewalTable, build_renewal_table, q_product_sum, sample_offsets
from .tree import GRID_TOLERANCE, TreeTopology
from .urn import branch_slots, draw_types, link_individuals

# Bytes per owned individual: offset, root, type and walk
_BYTES_PER_INDIVIDUAL = 8 + 8 + 1 + 8


@dataclass(frozen=True)
class TreeUrnRealization:
    """
    Urn on a tree, discretised with n steps per unit time

    Branch b owns the individuals at global indices birth_idx[b]+1 .. i_max; smaller indices
    on its line are the individuals of its ancestors. cum holds, per owned slot, the running
    sum of own types since the birth of the branch, and base[b] is the walk of the parent
    at the birth index.
    """
    tree: TreeTopology
    n: int
    alpha: float
    birth_idx: np.ndarray
    first_slot: np.ndarray
    i_max: int
    roots: np.ndarray
    types: np.ndarray
    cum: np.ndarray
    base: np.ndarray
    scale: float
    window: int
    n_past: int

    def slot(self, b: int, i: int) -> int:
        """Slot of individual (b, i), i >= 1, following the line of b down to its owner"""
        b = self.tree.check_id(b)
        if not 1 <= i <= self.i_max:
            raise DomainError(f"index {i} outside 1..{self.i_max}")
        while self.tree.parent[b] >= 0 and i <= self.birth_idx[b]:
            b = int(self.tree.parent[b])
        return int(self.first_slot[b] + i - self.birth_idx[b] - 1)

    def same_component(self, b: int, i: int, b_other: int, j: int) -> bool:
        return bool(self.roots[self.slot(b, i)] == self.roots[self.slot(b_other, j)])

    def line_sum(self, b: int, k: np.ndarray) -> np.ndarray:
        """Sum of the types of (b, 1) .. (b, k) for integer k in 0..i_max"""
        k = np.asarray(k, dtype=np.int64)
        out = np.zeros(k.shape)
        done = k <= 0
        for a in reversed(self.tree.line(b)):
            mask = ~done & (k > self.birth_idx[a])
            if np.any(mask):
                idx = self.first_slot[a] + k[mask] - self.birth_idx[a] - 1
                out[mask] = self.base[a] + self.cum[idx]
                done |= mask
        return out

    def _interpolated(self, b: int, x: np.ndarray) -> np.ndarray:
        lo = np.minimum(np.floor(x + GRID_TOLERANCE).astype(np.int64), self.i_max)
        hi = np.minimum(lo + 1, self.i_max)
        frac = np.clip(x - lo, 0.0, 1.0)
        low = self.line_sum(b, lo)
        return low + frac * (self.line_sum(b, hi) - low)


def _base_values(tree: TreeTopology, birth_idx: np.ndarray, first_slot: np.ndarray, cum: np.ndarray) -> np.ndarray:
    base = np.zeros(tree.size)
    for b in range(1, tree.size):
        a = int(tree.parent[b])
        k = birth_idx[b]
        while a > 0 and k <= birth_idx[a]:
            a = int(tree.parent[a])
        if k > birth_idx[a]:
            base[b] = base[a] + cum[first_slot[a] + k - birth_idx[a] - 1]
    return base


def simulate_tree_urn(tree: TreeTopology, n: int, alpha: float, window_past: Optional[int],
                      rng: ReplicaRNG, tbl: Optional[RenewalTable] = None) -> TreeUrnRealization:
    """
    Sample the tree-indexed urn

    Every owned individual (b, i) draws an offset R and is joined to the individual R steps
    to the left along the line of b, crossing branch points into the parent as needed.
    """
    if n < 1:
        raise DomainError(f"steps per unit must be positive, got {n}")
    start_time = time.time()
    i_max = int(math.floor(tree.horizon * n + GRID_TOLERANCE))
    window = DEFAULT_WINDOW_FACTOR * i_max if window_past is None else int(window_past)
    birth_idx = np.floor(tree.birth * n + GRID_TOLERANCE).astype(np.int64)
    first_slot, total = branch_slots(birth_idx, i_max)
    check_budget(_BYTES_PER_INDIVIDUAL * total, "tree urn")

    offsets = sample_offsets(rng.fork(ENTITY_OFFSETS).uniform_open(total), alpha)
    key = rng.fork(ENTITY_PAST).hash_key()
    roots, n_slots, n_past = link_individuals(offsets, tree.parent, birth_idx, first_slot,
                                              i_max, window, key, alpha)
    types = draw_types(roots, rng.fork(ENTITY_TYPES))[:total]

    cum = np.empty(total, dtype=np.float64)
    for b in range(tree.size):
        lo = first_slot[b]
        hi = lo + (i_max - birth_idx[b])
        if hi > lo:
            cum[lo:hi] = np.cumsum(types[lo:hi], dtype=np.float64)
    base = _base_values(tree, birth_idx, first_slot, cum)

    if tbl is None:
        tbl = build_renewal_table(alpha, DEFAULT_TABLE_N)
    logging.debug(f"Tree urn with {tree.size} branches and {total} individuals took "
                  f"{time.time() - start_time:.2f}s")
    return TreeUrnRealization(tree=tree, n=int(n), alpha=float(alpha), birth_idx=birth_idx,
                              first_slot=first_slot, i_max=i_max, roots=roots, types=types,
                              cum=cum, base=base, scale=tbl.scale(n), window=window, n_past=n_past)


def branch_walk(r: TreeUrnRealization, b: int, t_grid) -> np.ndarray:
    """
    S_b^(n)(t): the parent walk up to the birth of b, then the interpolated sum along b

    Evaluated segment by segment along the ancestral line, so branches sharing a prefix
    give identical values on it.
    """
    b = r.tree.check_id(b)
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if np.any(t < 0.0) or np.any(t > r.tree.horizon * (1.0 + 1e-12)):
        raise DomainError(f"times must lie in [0, {r.tree.horizon}]")
    line = r.tree.line(b)
    births = [float(r.tree.birth[a]) for a in line] + [math.inf]
    out = np.zeros(t.shape)
    for k, a in enumerate(line):
        start, stop = births[k], births[k + 1]
        active = t > start
        if not np.any(active):
            break
        upper = np.minimum(t[active], stop)
        out[active] += r._interpolated(a, upper * r.n) - r._interpolated(a, np.full(upper.shape, start * r.n))
    return out / r.scale


def branch_coalescence_exact(i: int, j: int, s_index: int, tbl: RenewalTable, tail_tolerance: float = 0.5) -> float:
    """Probability that (b, i) and (b', j) on branches split at index s_index share a class"""
    if i <= s_index or j <= s_index:
        raise DomainError(f"indices {i}, {j} must lie beyond the split index {s_index}")
    value, _ = q_product_sum(tbl, i - s_index, j - s_index, tail_tolerance)
    return tbl.c2 * value


def _walk_replica(rng: ReplicaRNG, tree: TreeTopology, n: int, alpha: float, window: Optional[int],
                  nodes: Sequence[Tuple[int, float]], tbl: RenewalTable) -> np.ndarray:
    r = simulate_tree_urn(tree, n, alpha, window, rng, tbl)
    return np.array([branch_walk(r, b, t)[0] for b, t in nodes])


def tree_urn_endpoints(tree: TreeTopology, n: int, alpha: float, window: Optional[int],
                       nodes: Sequence[Tuple[int, float]], replicas: int, seed: int,
                       tbl: Optional[RenewalTable] = None) -> np.ndarray:
    """Walk values at the nodes, one row per replica on a fixed tree"""
    if tbl is None:
        tbl = build_renewal_table(alpha, DEFAULT_TABLE_N)
    rows = map_replicas(_walk_replica, replicas, seed, tree, n, alpha, window, list(nodes), tbl)
    return np.vstack(rows) if rows else np.empty((0, len(nodes)))


def _pair_replica(rng: ReplicaRNG, tree: TreeTopology, n: int, alpha: float, window: Optional[int],
                  pairs, tbl: RenewalTable) -> np.ndarray:
    r = simulate_tree_urn(tree, n, alpha, window, rng, tbl)
    return np.array([r.same_component(b, i, c, j) for b, i, c, j in pairs], dtype=np.float64)


def branch_coalescence_mc(tree: TreeTopology, pairs: List[Tuple[int, int, int, int]], n: int, alpha: float,
                          window: Optional[int], replicas: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Frequencies of (b, i) ~ (b', j) for each pair and their standard errors"""
    tbl = build_renewal_table(alpha, DEFAULT_TABLE_N)
    hits = np.vstack(map_replicas(_pair_replica, replicas, seed, tree, n, alpha, window, list(pairs), tbl))
    p_hat = hits.mean(axis=0)
    return p_hat, np.sqrt(np.maximum(p_hat * (1.0 - p_hat), 1e-300) / replicas)


def empirical_cross_covariance(realizations, b: int, b_other: int, t1: float, t2: float) -> Tuple[float, float]:
    """
    Monte Carlo Cov[S_b(t1), S_b'(t2)] with its standard error

    realizations is a sequence of TreeUrnRealization.
    """
    if len(realizations) < 2:
        raise DomainError("cross covariance needs at least two replicas")
    x = np.array([branch_walk(r, b, t1)[0] for r in realizations])
    y = np.array([branch_walk(r, b_other, t2)[0] for r in realizations])
    return covariance_with_error(x, y)


def covariance_with_error(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """Sample covariance and the standard error of the mean of centred products"""
    R = x.size
    prod = (x - x.mean()) * (y - y.mean())
    cov = float(prod.sum() / (R - 1))
    return cov, float(prod.std(ddof=1) / math.sqrt(R))
