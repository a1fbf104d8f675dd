import math
import time
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky
from scipy.special import gamma, hyp2f1

from utils.cache_manager import quadrature_cache
from utils.resources import check_budget
from utils.rng import ReplicaRNG
from .constants import HurstParams, make_hurst_params
from .errors import DomainError, FactorizationError
from .quadrature import integrate, power_difference
from .tree import SAME_PATH, TreeTopology, leaves_at, split_time

# Diagonal jitter, in units of t_max^(2H), tried in turn before a factorisation fails
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)

# White-noise sampler defaults, relative to the evaluation time
DEFAULT_PAST_FACTOR = 50.0
DEFAULT_CELLS_PER_UNIT = 200

# Replicas drawn per block by the vectorised samplers
SAMPLE_CHUNK = 1024

COVARIANCE_MODES = ("closed", "kernel", "hs")


@dataclass
class EndpointSample:
    """Joint draws of B_b(t) over (branch, time) nodes; values has one row per replica"""
    nodes: List[Tuple[int, float]]
    values: np.ndarray
    method: str
    info: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.values.shape[1] != len(self.nodes):
            raise DomainError("one value per node is required")

    def covariance(self) -> np.ndarray:
        return np.cov(self.values, rowvar=False, ddof=1)

    def maxima(self) -> np.ndarray:
        return self.values.max(axis=1)


def _check_s(t1: float, t2: float, s: float) -> Tuple[float, float, float]:
    t1, t2, s = float(t1), float(t2), float(s)
    if t1 < 0.0 or t2 < 0.0:
        raise DomainError("times must be nonnegative")
    if not 0.0 <= s <= min(t1, t2) * (1.0 + 1e-12):
        raise DomainError(f"split time {s} must lie in [0, min(t1, t2)]")
    return t1, t2, min(s, t1, t2)


def kernel_K(s, t: float, p: HurstParams):
    """Moving-average kernel K(s, t), vectorised over s"""
    t = float(t)
    if t <= 0.0:
        raise DomainError(f"kernel needs t > 0, got {t}")
    s = np.asarray(s, dtype=np.float64)
    a = p.alpha
    past = np.where(s <= 0.0, power_difference(t, np.maximum(-s, 0.0), a), 0.0)
    present = np.where((s > 0.0) & (s <= t), np.maximum(t - s, 0.0) ** a, 0.0)
    out = (past + present) / p.c_H
    return out if out.ndim else float(out)


def fbm_cov(t1: float, t2: float, p: HurstParams) -> float:
    """Covariance of a single fBM path, 1/2(|t1|^2H + |t2|^2H - |t1 - t2|^2H)"""
    h2 = p.two_H
    return 0.5 * (abs(t1) ** h2 + abs(t2) ** h2 - abs(t1 - t2) ** h2)


def rho_closed(t: float, s: float, p: HurstParams) -> float:
    """Equal-time overlap covariance t^2H - c_rho (t - s)^2H"""
    t, s = float(t), float(s)
    if s < 0.0 or s > t * (1.0 + 1e-12):
        raise DomainError(f"need 0 <= s <= t, got s={s}, t={t}")
    return t ** p.two_H - p.c_rho * max(t - s, 0.0) ** p.two_H


def overlap_integral(t1: float, t2: float, s: float, alpha: float) -> float:
    """int_s^min(t1,t2) (t1 - x)^alpha (t2 - x)^alpha dx in closed form"""
    m = min(t1, t2)
    length = m - s
    if length <= 0.0:
        return 0.0
    d = abs(t1 - t2)
    if d == 0.0:
        return length ** (2.0 * alpha + 1.0) / (2.0 * alpha + 1.0)
    return d ** alpha * length ** (alpha + 1.0) / (alpha + 1.0) * hyp2f1(-alpha, alpha + 1.0, alpha + 2.0, -length / d)


def rho(t1: float, t2: float, s: float, p: HurstParams) -> float:
    """Covariance of two branches at times t1, t2 whose paths separate at s"""
    t1, t2, s = _check_s(t1, t2, s)
    return fbm_cov(t1, t2, p) - overlap_integral(t1, t2, s, p.alpha) / p.c_H ** 2


def _tail_integral(t1: float, t2: float, alpha: float, what: str) -> float:
    """int_0^inf ((t1 + x)^a - x^a)((t2 + x)^a - x^a) dx over x = u/(1 - u)"""
    def mapped(u):
        x = u / (1.0 - u)
        return power_difference(t1, x, alpha) * power_difference(t2, x, alpha) / (1.0 - u) ** 2

    def regular(u):
        # the algebraic weight (1 - u)^(-2a) carries the singular factor
        if u >= 1.0:
            return alpha * alpha * t1 * t2
        return mapped(u) * (1.0 - u) ** (2.0 * alpha)

    head, _ = integrate(mapped, 0.0, 0.5, what=what)
    tail, _ = integrate(regular, 0.5, 1.0, what=what, weight="alg", wvar=(0.0, -2.0 * alpha))
    return head + tail


def _near_integral(t1: float, t2: float, s: float, alpha: float, what: str) -> float:
    """int_0^s (t1 - x)^a (t2 - x)^a dx"""
    if s <= 0.0:
        return 0.0
    m, big = min(t1, t2), max(t1, t2)
    if s >= m:
        value, _ = integrate(lambda x: (big - x) ** alpha, 0.0, m, what=what,
                             weight="alg", wvar=(0.0, alpha))
        return value
    value, _ = integrate(lambda x: (t1 - x) ** alpha * (t2 - x) ** alpha, 0.0, s, what=what)
    return value


def _rho_kernel_quadrature(t1: float, t2: float, s: float, H: float) -> float:
    p = make_hurst_params(H)
    a = p.alpha
    past = _tail_integral(t1, t2, a, "kernel covariance past integral")
    near = _near_integral(t1, t2, s, a, "kernel covariance near integral")
    return (past + near) / p.c_H ** 2


def rho_kernel_quadrature(t1: float, t2: float, s: float, p: HurstParams) -> float:
    """Overlap covariance as the integral of K(., t1) K(., t2) over the shared past"""
    t1, t2, s = _check_s(t1, t2, s)
    if min(t1, t2) == 0.0:
        return 0.0
    return quadrature_cache.get_or_compute(_rho_kernel_quadrature, t1, t2, s, p.H)


def hs_prefactor(alpha: float) -> float:
    """Gamma prefactor of the triple-integral term of the urn covariance"""
    return alpha * (2.0 * alpha + 1.0) * gamma(1.0 - alpha) / (gamma(alpha) * gamma(1.0 - 2.0 * alpha))


def _rho_hs_quadrature(t1: float, t2: float, s: float, H: float) -> float:
    a = H - 0.5
    e = 2.0 * a + 1.0
    boundary = 0.5 * (t1 ** e - (t1 - s) ** e + t2 ** e - (t2 - s) ** e)
    u1, u2 = t1 - s, t2 - s
    if u1 <= 0.0 or u2 <= 0.0:
        return boundary
    triple = _tail_integral(u1, u2, a, "urn covariance triple integral") / a ** 2
    return boundary + hs_prefactor(a) * triple


def rho_hs_quadrature(t1: float, t2: float, s: float, p: HurstParams) -> float:
    """Overlap covariance through the urn-limit representation"""
    t1, t2, s = _check_s(t1, t2, s)
    return quadrature_cache.get_or_compute(_rho_hs_quadrature, t1, t2, s, p.H)


def covariance(t1: float, t2: float, s: float, p: HurstParams, mode: str = "closed") -> float:
    """rho(t1, t2, s) by the requested route"""
    if mode == "closed":
        return rho(t1, t2, s, p)
    if mode == "kernel":
        return rho_kernel_quadrature(t1, t2, s, p)
    if mode == "hs":
        return rho_hs_quadrature(t1, t2, s, p)
    raise DomainError(f"unknown covariance mode {mode!r}, expected one of {COVARIANCE_MODES}")


def covariance_matrix(tree: TreeTopology, nodes: Sequence[Tuple[int, float]], p: HurstParams) -> np.ndarray:
    """Covariance of B_b(t) over the nodes"""
    n = len(nodes)
    cov = np.empty((n, n))
    for i in range(n):
        bi, ti = nodes[i]
        cov[i, i] = fbm_cov(ti, ti, p)
        for j in range(i + 1, n):
            bj, tj = nodes[j]
            s = split_time(tree, bi, bj)
            if s == SAME_PATH or s >= min(ti, tj):
                value = fbm_cov(ti, tj, p)
            else:
                value = rho(ti, tj, s, p)
            cov[i, j] = cov[j, i] = value
    return cov


def factorize(cov: np.ndarray, scale: float) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor with the jitter ladder; returns (L, jitter used)"""
    n = cov.shape[0]
    for eps in JITTER_LADDER:
        try:
            L = cholesky(cov + eps * scale * np.eye(n), lower=True)
        except LinAlgError:
            continue
        if eps > 0.0:
            logging.debug(f"Cholesky needed jitter {eps:g}")
        return L, eps
    raise FactorizationError(f"covariance of size {n} is not positive definite even with jitter {JITTER_LADDER[-1]:g}")


def _draw_blocks(rng: ReplicaRNG, size: int, width: int):
    """Standard normal blocks, each from its own child stream"""
    for block, start in enumerate(range(0, size, SAMPLE_CHUNK)):
        count = min(SAMPLE_CHUNK, size - start)
        yield rng.fork(block).normal((count, width))


def sample_cholesky(tree: TreeTopology, nodes: Sequence[Tuple[int, float]], p: HurstParams,
                    rng: ReplicaRNG, size: int = 1) -> EndpointSample:
    """Exact joint draws from the covariance matrix of the nodes"""
    nodes = [(int(b), float(t)) for b, t in nodes]
    check_budget(8 * (len(nodes) ** 2 + size * len(nodes)), "Cholesky sampler")
    cov = covariance_matrix(tree, nodes, p)
    t_max = max(t for _, t in nodes)
    L, eps = factorize(cov, max(t_max, 1e-300) ** p.two_H)
    values = np.vstack([z @ L.T for z in _draw_blocks(rng, size, len(nodes))])
    return EndpointSample(nodes=nodes, values=values, method="cholesky", info={"jitter": eps})


def endpoint_nodes(tree: TreeTopology, t: float) -> List[Tuple[int, float]]:
    return [(int(b), float(t)) for b in leaves_at(tree, t)]


def _cell_integral_past(a: np.ndarray, b: np.ndarray, t: float, alpha: float) -> np.ndarray:
    e = alpha + 1.0
    return (((t - a) ** e - (t - b) ** e) - ((-a) ** e - (-b) ** e)) / e


def _cell_integral_present(a: np.ndarray, b: np.ndarray, t: float, alpha: float) -> np.ndarray:
    e = alpha + 1.0
    return ((t - a) ** e - (t - b) ** e) / e


def _far_past_variance(t: float, depth: float, p: HurstParams) -> float:
    """Variance carried by the noise left of -depth"""
    if depth <= 0.0:
        return _tail_integral(t, t, p.alpha, "far past variance") / p.c_H ** 2
    value, _ = integrate(lambda x: power_difference(t, x, p.alpha) ** 2, depth, np.inf,
                         what="far past variance")
    return value / p.c_H ** 2


@dataclass(frozen=True)
class WhiteNoiseDesign:
    """Weights of the node values on the noise cells, plus the shared far-past standard deviation"""
    nodes: List[Tuple[int, float]]
    weights: np.ndarray
    far_past_sd: float
    dt: float
    depth: float

    def covariance(self) -> np.ndarray:
        return self.weights @ self.weights.T + self.far_past_sd ** 2


def whitenoise_design(tree: TreeTopology, dt: float, t_eval: float, depth: Optional[float], p: HurstParams,
                      far_past: bool = True) -> WhiteNoiseDesign:
    """
    Cell weights (1/sqrt(width)) int_cell K(u, t_eval) du of the white-noise sampler

    Cells have width dt. Forward cell m along a branch line belongs to the deepest ancestor
    born at or before the start of the cell; the past [-depth, 0] is shared by all branches.
    """
    t = float(t_eval)
    if dt <= 0.0 or t <= 0.0:
        raise DomainError("dt and t_eval must be positive")
    depth = DEFAULT_PAST_FACTOR * t if depth is None else float(depth)
    if depth < 0.0:
        raise DomainError(f"past depth must be nonnegative, got {depth}")
    a = p.alpha
    nodes = endpoint_nodes(tree, t)

    n_past = int(math.ceil(depth / dt - 1e-9)) if depth > 0.0 else 0
    past_edges = -depth + dt * np.arange(n_past + 1)
    past_edges[-1] = 0.0
    pa, pb = past_edges[:-1], past_edges[1:]
    past_w = _cell_integral_past(pa, pb, t, a) / np.sqrt(pb - pa) / p.c_H

    M = int(math.ceil(t / dt - 1e-9))
    edges = np.minimum(dt * np.arange(M + 1), t)
    fa, fb = edges[:-1], edges[1:]
    fwd_w = _cell_integral_present(fa, fb, t, a) / np.sqrt(fb - fa) / p.c_H

    alive = [b for b, _ in nodes]
    first_cell = {b: int(math.ceil(tree.birth[b] / dt - 1e-9)) for b in range(tree.size) if tree.birth[b] <= t}
    offsets = {}
    total = n_past
    for b in sorted(first_cell):
        offsets[b] = total
        total += max(M - first_cell[b], 0)

    check_budget(8 * len(nodes) * total, "white-noise sampler design")
    weights = np.zeros((len(nodes), total))
    weights[:, :n_past] = past_w
    for row, b in enumerate(alive):
        line = tree.line(b)
        for k, owner in enumerate(line):
            start = first_cell[owner]
            stop = first_cell[line[k + 1]] if k + 1 < len(line) else M
            if stop <= start:
                continue
            col = offsets[owner] + (np.arange(start, stop) - first_cell[owner])
            weights[row, col] = fwd_w[start:stop]

    far_sd = math.sqrt(_far_past_variance(t, depth, p)) if far_past else 0.0
    return WhiteNoiseDesign(nodes=nodes, weights=weights, far_past_sd=far_sd, dt=float(dt), depth=depth)


def whitenoise_covariance(tree: TreeTopology, dt: float, t_eval: float, depth: Optional[float],
                          p: HurstParams, far_past: bool = True):
    """(exact covariance of the white-noise sampler, variance deficit per node against rho)"""
    design = whitenoise_design(tree, dt, t_eval, depth, p, far_past)
    cov = design.covariance()
    target = covariance_matrix(tree, design.nodes, p)
    return cov, np.diag(target) - np.diag(cov)


def sample_whitenoise_tree(tree: TreeTopology, dt: Optional[float], t_eval: float, S_past: Optional[float],
                           p: HurstParams, rng: ReplicaRNG, size: int = 1, far_past: bool = True) -> EndpointSample:
    """
    Endpoint draws B_b(t_eval) = sum over the cells of the line of b of weight * Z_cell

    One standard normal per cell; cells on shared ancestry are shared. The noise left of
    -S_past is one more normal shared by all branches unless far_past is False, in which
    case its variance is reported as a deficit.
    """
    dt = t_eval / DEFAULT_CELLS_PER_UNIT if dt is None else float(dt)
    start_time = time.time()
    design = whitenoise_design(tree, dt, t_eval, S_past, p, far_past)
    width = design.weights.shape[1] + 1
    blocks = []
    for z in _draw_blocks(rng, size, width):
        blocks.append(z[:, :-1] @ design.weights.T + design.far_past_sd * z[:, -1:])
    values = np.vstack(blocks)
    target = np.array([fbm_cov(t, t, p) for _, t in design.nodes])
    deficit = float(np.max(target - np.diag(design.covariance())))
    logging.debug(f"White-noise sampler with {width} cells took {time.time() - start_time:.2f}s")
    return EndpointSample(nodes=design.nodes, values=values, method="whitenoise",
                          info={"variance_deficit": deficit, "cells": width, "dt": dt, "depth": design.depth})


def _require_discretized(tree: TreeTopology, K_levels: int, t: float) -> None:
    if tree.kind != "discretized" or tree.levels is None:
        raise DomainError("the GREM sampler needs a tree discretised onto the level grid")
    if tree.K != K_levels or abs(tree.horizon - t) > 1e-12 * max(1.0, t):
        raise DomainError(f"tree was discretised with K={tree.K} on [0, {tree.horizon}], "
                          f"not K={K_levels} on [0, {t}]")


def grem_level_sd(K: int, t: float, p: HurstParams) -> np.ndarray:
    """Standard deviation of the level-0 increment and of the increments of levels 1..K"""
    step = t / K
    rho_levels = np.array([rho_closed(t, min(i * step, t), p) for i in range(K + 1)])
    var = np.empty(K + 1)
    var[0] = rho_levels[0]
    var[1:] = np.diff(rho_levels)
    return np.sqrt(np.maximum(var, 0.0))


@njit(cache=True, nogil=True)
def _grem_ladder(normals, level, parent, first_inc, sd, K):
    B = level.size
    partial = np.empty((B, K + 1))
    for b in range(B):
        lb = level[b]
        if parent[b] < 0:
            partial[b, 0] = sd[0] * normals[0]
        else:
            for i in range(lb + 1):
                partial[b, i] = partial[parent[b], i]
        for i in range(lb + 1, K + 1):
            partial[b, i] = partial[b, i - 1] + sd[i] * normals[first_inc[b] + i - lb - 1]
    out = np.empty(B)
    for b in range(B):
        out[b] = partial[b, K]
    return out


def grem_increment_layout(tree: TreeTopology, K: int) -> Tuple[np.ndarray, int]:
    """Index of the first own increment of every branch and the total count (level 0 first)"""
    own = K - tree.levels
    first = 1 + np.concatenate(([0], np.cumsum(own)[:-1]))
    return first.astype(np.int64), int(1 + own.sum())


def sample_grem_endpoint(tree_disc: TreeTopology, K_levels: int, t: float, p: HurstParams,
                         rng: ReplicaRNG, size: int = 1) -> EndpointSample:
    """Hierarchical draws: one increment per (segment, level), shared along common ancestry"""
    _require_discretized(tree_disc, K_levels, t)
    sd = grem_level_sd(K_levels, t, p)
    first, total = grem_increment_layout(tree_disc, K_levels)
    check_budget(8 * tree_disc.size * (K_levels + 1), "GREM ladder")
    values = np.empty((size, tree_disc.size))
    for r in range(size):
        normals = rng.fork(r).normal(total)
        values[r] = _grem_ladder(normals, tree_disc.levels, tree_disc.parent, first, sd, K_levels)
    nodes = [(b, float(t)) for b in range(tree_disc.size)]
    return EndpointSample(nodes=nodes, values=values, method="grem", info={"K": K_levels})


def grem_covariance(tree_disc: TreeTopology, K: int, t: float, p: HurstParams) -> np.ndarray:
    """Exact covariance of the GREM endpoints: rho(t, t, discretised split time)"""
    _require_discretized(tree_disc, K, t)
    B = tree_disc.size
    cov = np.empty((B, B))
    for i in range(B):
        cov[i, i] = t ** p.two_H
        for j in range(i + 1, B):
            s = min(split_time(tree_disc, i, j), t)
            cov[i, j] = cov[j, i] = rho_closed(t, s, p)
    return cov


def single_split_sample(t: float, s: float, count: int, p: HurstParams, rng: ReplicaRNG) -> np.ndarray:
    """count branches sharing everything up to s and nothing afterwards"""
    shared = rho_closed(t, s, p)
    own = max(t ** p.two_H - shared, 0.0)
    return math.sqrt(shared) * rng.normal() + math.sqrt(own) * rng.normal(count)


def gaussian_condition(cov: np.ndarray, observed: Sequence[int], values) -> Tuple[np.ndarray, np.ndarray]:
    """
    Conditional mean and covariance of the unobserved block given observed values

    values may be one vector or a matrix with one observation per row. The observed block
    is factorised with the jitter ladder.
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0]
    obs = np.zeros(n, dtype=bool)
    obs[list(observed)] = True
    free = ~obs
    S_oo = cov[np.ix_(obs, obs)]
    S_fo = cov[np.ix_(free, obs)]
    S_ff = cov[np.ix_(free, free)]
    scale = max(float(np.max(np.abs(np.diag(S_oo)))), 1e-300)

    factor = None
    for eps in JITTER_LADDER:
        try:
            factor = cho_factor(S_oo + eps * scale * np.eye(S_oo.shape[0]), lower=True)
            break
        except LinAlgError:
            continue
    if factor is None:
        raise FactorizationError("observed block is singular beyond the jitter ladder")

    values = np.asarray(values, dtype=np.float64)
    gain = cho_solve(factor, S_fo.T).T
    mean = values @ gain.T if values.ndim == 2 else gain @ values
    cond_cov = S_ff - gain @ S_fo.T
    return mean, 0.5 * (cond_cov + cond_cov.T)


def conditional_cross_covariance(t1: float, t2: float, s: float, p: HurstParams,
                                 grid: Optional[Sequence[float]] = None, with_predictor: bool = True) -> float:
    """
    Residual covariance of B_b(t1) and B_b'(t2), branches split at s, given shared-past values

    The conditioning set is B at the grid times (all <= s) and, with_predictor, the
    predictors E[B(t_i) | noise up to s], whose covariances are integrals of K(t_i, .) K(t_j, .)
    over the shared past. The cross covariance of the two branches is the closed form, so the
    residual vanishes only when the shared past carries all of it.
    """
    t1, t2, s = _check_s(t1, t2, s)
    if grid is None:
        grid = np.concatenate((-s * np.arange(8, 0, -1) / 8.0, s * np.arange(1, 9) / 8.0)) if s > 0 else []
    grid = [float(u) for u in grid if u != 0.0]
    if any(u > s for u in grid):
        raise DomainError("conditioning grid must lie in the shared past")

    r12 = rho(t1, t2, s, p)
    if with_predictor:
        q11 = rho_kernel_quadrature(t1, t1, s, p)
        q22 = rho_kernel_quadrature(t2, t2, s, p)
        q12 = rho_kernel_quadrature(t1, t2, s, p)
    g = len(grid)
    k = g + (2 if with_predictor else 0)
    n = k + 2
    cov = np.zeros((n, n))
    for a in range(g):
        for b in range(a, g):
            cov[a, b] = cov[b, a] = fbm_cov(grid[a], grid[b], p)
        for col, t in ((k, t1), (k + 1, t2)):
            cov[a, col] = cov[col, a] = fbm_cov(grid[a], t, p)
        if with_predictor:
            cov[a, g] = cov[g, a] = fbm_cov(grid[a], t1, p)
            cov[a, g + 1] = cov[g + 1, a] = fbm_cov(grid[a], t2, p)
    if with_predictor:
        # B_b(t_i) is its predictor plus noise after s
        cov[g, g], cov[g + 1, g + 1] = q11, q22
        cov[g, g + 1] = cov[g + 1, g] = q12
        cov[g, k] = cov[k, g] = q11
        cov[g, k + 1] = cov[k + 1, g] = q12
        cov[g + 1, k] = cov[k, g + 1] = q12
        cov[g + 1, k + 1] = cov[k + 1, g + 1] = q22
    cov[k, k], cov[k + 1, k + 1] = t1 ** p.two_H, t2 ** p.two_H
    cov[k, k + 1] = cov[k + 1, k] = r12

    if k == 0:
        return r12
    _, cond = gaussian_condition(cov, range(k), np.zeros(k))
    return float(cond[0, 1])
