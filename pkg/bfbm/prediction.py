import math
import time
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import hyp2f1

from utils.rng import ReplicaRNG
from .constants import HurstParams
from .errors import DomainError, TableTooShortError
from .gaussian_bfbm import factorize, fbm_cov, gaussian_condition
from .quadrature import gauss_legendre, integrate
from .renewal import RenewalTable, mu_pmf, sample_offsets

# Past depth in units of the horizon
DEFAULT_DEPTH_FACTOR = 50.0

# Gauss-Legendre nodes per grid cell when averaging the kernel
CELL_NODES = 16


def _sigma(s_neg: float) -> float:
    s_neg = float(s_neg)
    if not s_neg < 0.0:
        raise DomainError(f"past time must be negative, got {s_neg}")
    return -s_neg


def g_kernel(t: float, s_neg: float, p: HurstParams) -> float:
    """Prediction weight g(t, s) for s < 0 by quadrature of int_0^t xi^alpha/(xi + sigma)"""
    if t <= 0.0:
        raise DomainError(f"horizon must be positive, got {t}")
    sigma = _sigma(s_neg)
    a = p.alpha
    value, _ = integrate(lambda x: 1.0 / (x + sigma), 0.0, float(t), what="prediction kernel",
                         weight="alg", wvar=(a, 0.0))
    return p.c_q * sigma ** (-a) * value


def g_kernel_closed(t: float, s_neg, p: HurstParams):
    """The same kernel through t^(a+1)/((a+1) sigma) 2F1(1, a+1; a+2; -t/sigma); vectorised over s"""
    sigma = -np.asarray(s_neg, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise DomainError("past times must be negative")
    a = p.alpha
    inner = t ** (a + 1.0) / ((a + 1.0) * sigma) * hyp2f1(1.0, a + 1.0, a + 2.0, -t / sigma)
    out = p.c_q * sigma ** (-a) * inner
    return out if out.ndim else float(out)


def euler_reflection_gap(p: HurstParams) -> float:
    """|sin(pi alpha)/pi - 1/(Gamma(alpha) Gamma(1 - alpha))|"""
    return abs(math.sin(math.pi * p.alpha) / math.pi - p.c_q)


def beta_identity_check(xi: float, alpha: float) -> Tuple[float, float]:
    """(int_0^1 (1-x)^(alpha-1) (xi+x)^(-alpha-1) dx, xi^(-alpha)/(alpha + alpha xi))"""
    xi, alpha = float(xi), float(alpha)
    if xi <= 0.0 or not 0.0 < alpha <= 0.5:
        raise DomainError(f"need xi > 0 and alpha in (0, 1/2], got {xi}, {alpha}")
    lhs, _ = integrate(lambda x: (xi + x) ** (-alpha - 1.0), 0.0, 1.0, what="beta identity",
                       weight="alg", wvar=(0.0, alpha - 1.0))
    return lhs, xi ** (-alpha) / (alpha + alpha * xi)


def copy_weight(n: int, k: int, tbl: RenewalTable) -> float:
    """b_{n,-k} = sum_{l=1}^n q_{n-l} mu(k + l): the line of n last leaves (0, n] from l and lands on -k"""
    if n < 1 or k < 1:
        raise DomainError(f"need n, k >= 1, got {n}, {k}")
    if n > tbl.N:
        raise TableTooShortError(f"table of length {tbl.N} cannot reach q_{n - 1}")
    l = np.arange(1, n + 1)
    return math.fsum(tbl.q[n - l] * mu_pmf(k + l, tbl.alpha))


def copy_weight_asymptotic(n: int, k: int, alpha: float) -> float:
    """(alpha c_q / n) xi^(-alpha)/(alpha + alpha xi) with xi = k/n"""
    xi = k / n
    c_q = math.sin(math.pi * alpha) / math.pi
    return alpha * c_q / n * xi ** (-alpha) / (alpha + alpha * xi)


def copy_weight_mc(n: int, k: int, replicas: int, seed: int, alpha: float) -> Tuple[float, float]:
    """Frequency with which the ancestral line of n first enters the past at -k"""
    if n < 1 or k < 1:
        raise DomainError(f"need n, k >= 1, got {n}, {k}")
    rng = ReplicaRNG(seed, (0, 0))
    pos = np.full(replicas, n, dtype=np.int64)
    active = np.ones(replicas, dtype=bool)
    while np.any(active):
        idx = np.nonzero(active)[0]
        step = sample_offsets(rng.uniform_open(idx.size), alpha)
        pos[idx] = np.maximum(pos[idx] - step, -(2 ** 62))
        active[idx] = pos[idx] > 0
    hits = (pos == -k).astype(np.float64)
    p_hat = float(hits.mean())
    return p_hat, math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / replicas)


@dataclass(frozen=True)
class PredictionSetup:
    """
    Parameters:
    -----------
    p: Hurst parameters
    t: prediction horizon
    depth: length D of the observed past [-D, 0) (default 50 t)
    grid: number G of past grid points
    replicas: Monte Carlo replicas of the past path
    tolerance: acceptable mean |a - b| relative to t^H
    """
    p: HurstParams
    t: float
    depth: Optional[float] = None
    grid: int = 2000
    replicas: int = 200
    tolerance: float = 0.05

    def __post_init__(self):
        if self.t <= 0.0:
            raise DomainError(f"horizon must be positive, got {self.t}")
        if self.grid < 2:
            raise DomainError(f"grid needs at least two points, got {self.grid}")
        if self.depth is not None and self.depth <= 0.0:
            raise DomainError(f"past depth must be positive, got {self.depth}")

    @property
    def D(self) -> float:
        return DEFAULT_DEPTH_FACTOR * self.t if self.depth is None else float(self.depth)

    def past_grid(self, G: Optional[int] = None) -> np.ndarray:
        """Strictly increasing negative times -D + k h, k = 0..G-1"""
        G = self.grid if G is None else int(G)
        h = self.D / G
        return -self.D + h * np.arange(G)


def cell_weights(t: float, edges: np.ndarray, p: HurstParams) -> np.ndarray:
    """Average of g(t, .) over each cell [edges[k], edges[k+1]] of the negative axis"""
    x, w = gauss_legendre(CELL_NODES)
    a, b = edges[:-1], edges[1:]
    width = b - a
    out = np.empty(a.size)
    regular = b < 0.0
    if np.any(regular):
        s = a[regular, None] + width[regular, None] * x[None, :]
        out[regular] = g_kernel_closed(t, s, p) @ w
    if not np.all(regular):
        # the cell ending at 0 carries a sigma^(-alpha) singularity; sigma = h v^(1/(1-alpha)) removes it
        h = width[~regular][0]
        e = 1.0 / (1.0 - p.alpha)
        sigma = h * x ** e
        jac = h * e * x ** (e - 1.0)
        out[~regular] = (g_kernel_closed(t, -sigma, p) * jac) @ w / h
    return out


def fbm_cov_matrix(times: np.ndarray, p: HurstParams) -> np.ndarray:
    """fbm_cov over all pairs of times"""
    u = np.abs(times) ** p.two_H
    lag = np.abs(times[:, None] - times[None, :]) ** p.two_H
    return 0.5 * (u[:, None] + u[None, :] - lag)


def _prediction_design(setup: PredictionSetup, G: int):
    p, t = setup.p, setup.t
    grid = setup.past_grid(G)
    edges = np.append(grid, 0.0)
    w = cell_weights(t, edges, p)
    # sum_k w_k (B(u_{k+1}) - B(u_k)) with B(0) = 0, as coefficients on B(u_k)
    d = -w.copy()
    d[1:] += w[:-1]

    nodes = np.append(grid, t)
    cov = fbm_cov_matrix(nodes, p)
    gain, _ = gaussian_condition(cov, range(G), np.eye(G))
    gain = gain[:, 0]
    return grid, cov[:G, :G], gain, d


def prediction_check(setup: PredictionSetup, rng: ReplicaRNG, G: Optional[int] = None) -> Dict[str, object]:
    """
    Compare the conditional mean of B_t given the past grid (a) with sum_k g ΔB_k (b)

    Both are linear in the past vector, so besides the Monte Carlo mean of |a - b| the
    report carries its exact expectation sqrt(2 v/pi), v = e' Sigma e.
    """
    G = setup.grid if G is None else int(G)
    start_time = time.time()
    grid, cov_past, gain, d = _prediction_design(setup, G)
    e = gain - d
    v = float(e @ cov_past @ e)
    exact = math.sqrt(2.0 * max(v, 0.0) / math.pi)

    L, _ = factorize(cov_past, setup.D ** setup.p.two_H)
    x = rng.normal((setup.replicas, G)) @ L.T
    a = x @ gain
    b = x @ d
    mc = float(np.mean(np.abs(a - b)))
    scale = setup.t ** setup.p.H
    logging.info(f"Prediction check G={G} took {time.time() - start_time:.2f}s")
    return {
        "grid": G,
        "depth": setup.D,
        "mean_abs_discrepancy": mc,
        "exact_mean_abs_discrepancy": exact,
        "relative": exact / scale,
        "relative_mc": mc / scale,
        "passed": exact / scale < setup.tolerance,
    }


def prediction_refinement(setup: PredictionSetup, doublings: int, seed: int) -> List[Dict[str, object]]:
    """Reports on grids G/2^doublings, ..., G/2, G"""
    sizes = [max(2, setup.grid >> d) for d in range(doublings, -1, -1)]
    return [prediction_check(setup, ReplicaRNG(seed, (level, 0)), G) for level, G in enumerate(sizes)]


def predicted_mean(t: float, past_times: np.ndarray, past_values: np.ndarray, p: HurstParams) -> float:
    """sum_k g ΔB_k for a path observed at increasing negative times, with B(0) = 0"""
    edges = np.append(np.asarray(past_times, dtype=np.float64), 0.0)
    if np.any(np.diff(edges) <= 0.0):
        raise DomainError("past times must be strictly increasing and negative")
    increments = np.diff(np.append(np.asarray(past_values, dtype=np.float64), 0.0))
    return float(cell_weights(t, edges, p) @ increments)
