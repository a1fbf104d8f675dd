import math
import time
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import ks_2samp

from utils.resources import check_budget
from utils.rng import ENTITY_GAUSSIAN, ENTITY_TREE, ReplicaRNG
from utils.workers import map_replicas
from .constants import HurstParams, iid_benchmark, speed
from .errors import BudgetExceededError, DomainError
from .gaussian_bfbm import (endpoint_nodes, rho_closed, sample_cholesky, sample_grem_endpoint)
from .quadrature import integrate
from .tree import TreeTopology, binary_tree, discretize, sample_yule, single_branch

# Largest node count the dense Cholesky route accepts
CHOLESKY_NODE_LIMIT = 1 << 12

MAX_METHODS = ("grem", "cholesky")
MAX_TREE_KINDS = ("yule", "binary", "single")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class MaxExperiment:
    """
    Parameters:
    -----------
    p: Hurst parameters
    tree_kind: yule, binary or single
    t_list: evaluation times
    replicas: replicas per time
    method: grem or cholesky
    seed: master seed
    K: levels of the discretised tree (default ceil(t))
    direction: shift of the branching events onto the level grid
    """
    p: HurstParams
    tree_kind: str
    t_list: Sequence[float]
    replicas: int
    method: str = "grem"
    seed: int = 0
    K: Optional[int] = None
    direction: str = "left"

    def __post_init__(self):
        if self.tree_kind not in MAX_TREE_KINDS:
            raise DomainError(f"tree kind must be one of {MAX_TREE_KINDS}, got {self.tree_kind!r}")
        if self.method not in MAX_METHODS:
            raise DomainError(f"method must be one of {MAX_METHODS}, got {self.method!r}")
        if self.replicas < 1:
            raise DomainError("at least one replica is required")
        if any(t <= 0.0 for t in self.t_list):
            raise DomainError("evaluation times must be positive")

    def levels(self, t: float) -> int:
        return int(self.K) if self.K is not None else max(1, int(math.ceil(t)))


@dataclass
class MaxResult:
    """Per-time summaries of M(t)/m(t) and the raw rows (t, replica, M, ratio)"""
    summaries: List[Dict[str, object]] = field(default_factory=list)
    rows: List[Tuple[float, int, float, float]] = field(default_factory=list)

    def mean_ratios(self) -> np.ndarray:
        return np.array([s["mean_ratio"] for s in self.summaries])

    def std_ratios(self) -> np.ndarray:
        return np.array([s["std_ratio"] for s in self.summaries])


def _expected_branches(kind: str, t: float) -> float:
    if kind == "yule":
        return math.exp(t)
    if kind == "binary":
        return 2.0 ** t
    return 1.0


def grow_tree(kind: str, t: float, rng: ReplicaRNG) -> TreeTopology:
    if kind == "yule":
        return sample_yule(t, rng.fork(ENTITY_TREE))
    if kind == "binary":
        return binary_tree(t)
    return single_branch(t)


def sample_maximum(rng: ReplicaRNG, exp: MaxExperiment, t: float) -> float:
    """max_b B_b(t) for one tree and one Gaussian draw"""
    tree = grow_tree(exp.tree_kind, t, rng)
    K = exp.levels(t)
    if exp.method == "grem":
        tree_disc = discretize(tree, K, t, exp.direction)
        sample = sample_grem_endpoint(tree_disc, K, t, exp.p, rng.fork(ENTITY_GAUSSIAN))
    else:
        if tree.kind != "single":
            tree = discretize(tree, K, t, exp.direction)
        nodes = endpoint_nodes(tree, t)
        if len(nodes) > CHOLESKY_NODE_LIMIT:
            raise BudgetExceededError(f"{len(nodes)} leaves exceed the Cholesky limit of {CHOLESKY_NODE_LIMIT}",
                                      estimated_bytes=8 * len(nodes) ** 2, available_bytes=8 * CHOLESKY_NODE_LIMIT ** 2)
        sample = sample_cholesky(tree, nodes, exp.p, rng.fork(ENTITY_GAUSSIAN))
    return float(sample.maxima()[0])


def estimate_max(exp: MaxExperiment) -> MaxResult:
    """Monte Carlo law of M(t)/m(t) for every t, with the tree-kind-matched speed m"""
    result = MaxResult()
    for index, t in enumerate(exp.t_list):
        t = float(t)
        if exp.tree_kind == "binary" and not t.is_integer():
            raise DomainError(f"binary trees need integer times, got {t}")
        branches = _expected_branches(exp.tree_kind, t)
        check_budget(int(8 * branches * (exp.levels(t) + 4) * 4), f"maximum at t={t}")
        if exp.method == "cholesky" and branches > CHOLESKY_NODE_LIMIT:
            raise BudgetExceededError(
                f"about {branches:.0f} leaves at t={t} exceed the Cholesky limit of {CHOLESKY_NODE_LIMIT}",
                estimated_bytes=int(8 * branches ** 2), available_bytes=8 * CHOLESKY_NODE_LIMIT ** 2)

        start_time = time.time()
        maxima = np.array(map_replicas(sample_maximum, exp.replicas, exp.seed, exp, t, entity=index))
        m = speed(t, exp.p, exp.tree_kind)
        ratios = maxima / m
        R = ratios.size
        std = float(ratios.std(ddof=1)) if R > 1 else 0.0
        result.summaries.append({
            "t": t,
            "m": m,
            "mean_M": float(maxima.mean()),
            "mean_ratio": float(ratios.mean()),
            "std_ratio": std,
            "se_ratio": std / math.sqrt(R),
            "quantiles": {repr(q): float(v) for q, v in zip(QUANTILES, np.quantile(ratios, QUANTILES))},
            "replicas": R,
            "K": exp.levels(t),
        })
        result.rows.extend((t, r, float(maxima[r]), float(ratios[r])) for r in range(R))
        logging.info(f"Maximum at t={t}: mean ratio {ratios.mean():.4f} over {R} replicas "
                     f"({time.time() - start_time:.2f}s)")
    return result


def delta_f(i: int, K: int, t: float, p: HurstParams) -> float:
    """Ladder step sqrt(2t/K) sqrt(rho(t,t,i t/K) - rho(t,t,(i-1) t/K)); level 0 is sqrt(rho(t,t,0))"""
    if K < 1 or not 0 <= i <= K:
        raise DomainError(f"level {i} outside 0..{K}")
    if i == 0:
        return math.sqrt(rho_closed(t, 0.0, p))
    step = t / K
    increment = rho_closed(t, min(i * step, t), p) - rho_closed(t, (i - 1) * step, p)
    return math.sqrt(2.0 * t / K) * math.sqrt(max(increment, 0.0))


def delta_f_sum(K: int, t: float, p: HurstParams, include_level_zero: bool = False) -> float:
    start = 0 if include_level_zero else 1
    return math.fsum(delta_f(i, K, t, p) for i in range(start, K + 1))


def f_ladder(l: int, K: int, t: float, p: HurstParams) -> Tuple[float, float]:
    """(sum_{i=1}^{l} delta_f_i, its integral approximation 2 t^(H+1/2) sqrt(c_rho H) int_0^(l/K) (1-y)^alpha dy)"""
    if not 0 <= l <= K:
        raise DomainError(f"ladder index {l} outside 0..{K}")
    value = math.fsum(delta_f(i, K, t, p) for i in range(1, l + 1))
    e = p.alpha + 1.0
    integral = (1.0 - (1.0 - l / K) ** e) / e
    return value, 2.0 * t ** (p.H + 0.5) * math.sqrt(p.c_rho * p.H) * integral


def abar(x: float, p: HurstParams) -> float:
    """Derivative of the normalised overlap, c_rho 2H (1-x)^(2H-1)"""
    return p.c_rho * p.two_H * (1.0 - x) ** (p.two_H - 1.0)


def bk_leading_order(p: HurstParams) -> float:
    """sqrt(2 log 2) int_0^1 sqrt(abar), in closed form"""
    return math.sqrt(2.0 * math.log(2.0) * p.c_rho * p.two_H) / (p.H + 0.5)


def bk_functional_quadrature(p: HurstParams) -> float:
    value, _ = integrate(lambda x: math.sqrt(abar(x, p)), 0.0, 1.0, what="leading-order functional")
    return math.sqrt(2.0 * math.log(2.0)) * value


def slepian_envelope(t: float, p: HurstParams, kind: str = "yule") -> Tuple[float, float]:
    """
    Crude (lower, upper) bounds on the speed of the maximum

    upper is the first-moment bound of independent leaves; lower comes from the coupling in
    which all branches share the path up to x t and are independent afterwards, optimised
    over x. Binary trees carry the extra factor sqrt(log 2) in both.
    """
    t = float(t)
    if t <= 0.0:
        raise DomainError(f"time must be positive, got {t}")

    def neg_lower(x):
        return -math.sqrt(max(2.0 * x * t * (t ** p.two_H - rho_closed(t, x * t, p)), 0.0))

    best = minimize_scalar(neg_lower, bounds=(1e-9, 1.0 - 1e-9), method="bounded",
                           options={"xatol": 1e-10})
    factor = math.sqrt(math.log(2.0)) if kind == "binary" else 1.0
    return -best.fun * factor, iid_benchmark(t, p) * factor


def _grem_max_pair(rng: ReplicaRNG, p: HurstParams, t: float, K: int, kind: str) -> Tuple[float, float]:
    tree = grow_tree(kind, t, rng)
    gauss = rng.fork(ENTITY_GAUSSIAN)
    left = sample_grem_endpoint(discretize(tree, K, t, "left"), K, t, p, gauss.fork(0))
    right = sample_grem_endpoint(discretize(tree, K, t, "right"), K, t, p, gauss.fork(1))
    return float(left.maxima()[0]), float(right.maxima()[0])


def bracket_check(p: HurstParams, t: float, K: int, replicas: int, seed: int, kind: str = "yule") -> Dict[str, float]:
    """Mean maximum on left- and right-shifted discretisations of the same trees"""
    pairs = np.array(map_replicas(_grem_max_pair, replicas, seed, p, t, K, kind))
    left, right = pairs[:, 0], pairs[:, 1]
    return {
        "mean_left": float(left.mean()),
        "mean_right": float(right.mean()),
        "se_left": float(left.std(ddof=1) / math.sqrt(replicas)),
        "se_right": float(right.std(ddof=1) / math.sqrt(replicas)),
        "se_difference": float((left - right).std(ddof=1) / math.sqrt(replicas)),
    }


def sampler_agreement(tree_disc: TreeTopology, K: int, t: float, p: HurstParams, replicas: int,
                      seed: int) -> Tuple[float, float]:
    """Two-sample KS statistic and p-value between GREM and Cholesky maxima on one discretised tree"""
    grem = sample_grem_endpoint(tree_disc, K, t, p, ReplicaRNG(seed, (0, 1)), size=replicas).maxima()
    chol = sample_cholesky(tree_disc, endpoint_nodes(tree_disc, t), p, ReplicaRNG(seed, (0, 2)),
                           size=replicas).maxima()
    result = ks_2samp(grem, chol)
    return float(result.statistic), float(result.pvalue)
