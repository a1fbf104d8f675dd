import math
import time
import logging
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy.integrate import quad
from scipy.special import gamma

from utils.cache_manager import renewal_cache
from .constants import c_of_n
from .errors import DomainError, TableTooShortError

# Offsets at or above this value leave every window the lab can simulate
OFFSET_CAP = 2 ** 62
_LOG_OFFSET_CAP = math.log(OFFSET_CAP)

# Tables at least this long use the blocked, multi-threaded recursion
BLOCKED_THRESHOLD = 1 << 15
BLOCK_SIZE = 4096


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must lie in (0, 1/2), got {alpha}")
    return alpha


def mu_tail(n: int, alpha: float) -> float:
    """P(R >= n) = n^(-alpha)"""
    if n < 1:
        raise DomainError(f"offset tail needs n >= 1, got {n}")
    return float(n) ** (-alpha)


def mu_pmf(n, alpha: float):
    """P(R = n) = n^(-alpha) - (n+1)^(-alpha), vectorised over n >= 1"""
    n = np.asarray(n, dtype=np.float64)
    if np.any(n < 1):
        raise DomainError("offset pmf needs n >= 1")
    # n^-a (1 - (1 + 1/n)^-a) keeps the difference accurate for large n
    out = n ** (-alpha) * -np.expm1(-alpha * np.log1p(1.0 / n))
    return out if out.ndim else float(out)


def doney_ratio(n, alpha: float):
    """n P(R = n) / P(R > n); bounded for the pure power law"""
    n = np.asarray(n, dtype=np.float64)
    return n * mu_pmf(n, alpha) / (n + 1.0) ** (-alpha)


def sample_offset(u: float, alpha: float) -> int:
    """Inverse-transform draw R = floor(u^(-1/alpha)) from a uniform u in (0, 1]"""
    if not 0.0 < u <= 1.0:
        raise DomainError(f"uniform variate must lie in (0, 1], got {u}")
    exponent = -math.log(u) / alpha
    if exponent >= _LOG_OFFSET_CAP:
        return OFFSET_CAP
    return int(math.floor(math.exp(exponent)))


def sample_offsets(u: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorised sample_offset; values past the cap are clipped to OFFSET_CAP"""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u > 1.0):
        raise DomainError("uniform variates must lie in (0, 1]")
    exponent = -np.log(u) / alpha
    out = np.full(u.shape, OFFSET_CAP, dtype=np.int64)
    ok = exponent < _LOG_OFFSET_CAP
    out[ok] = np.floor(np.exp(exponent[ok])).astype(np.int64)
    return out


@njit(cache=True, nogil=True)
def _renewal_recursion(mu, q, start, stop):
    # q_n = sum_{k=1}^{n} mu_k q_{n-k}, Kahan-compensated
    for n in range(start, stop):
        s = 0.0
        c = 0.0
        for k in range(1, n + 1):
            y = mu[k] * q[n - k] - c
            tmp = s + y
            c = (tmp - s) - y
            s = tmp
        q[n] = min(max(s, 0.0), 1.0)


@njit(cache=True, parallel=True)
def _far_part(mu, q, a, b):
    out = np.zeros(b - a)
    for m in prange(b - a):
        n = a + m
        s = 0.0
        c = 0.0
        for j in range(a):
            y = mu[n - j] * q[j] - c
            tmp = s + y
            c = (tmp - s) - y
            s = tmp
        out[m] = s
    return out


@njit(cache=True, nogil=True)
def _near_part(mu, q, far, a, b):
    for n in range(a, b):
        s = far[n - a]
        c = 0.0
        for j in range(a, n):
            y = mu[n - j] * q[j] - c
            tmp = s + y
            c = (tmp - s) - y
            s = tmp
        q[n] = min(max(s, 0.0), 1.0)


def renewal_sequence(alpha: float, N: int, blocked: bool = None) -> np.ndarray:
    """q_0..q_N for the pure power-law offsets"""
    alpha = _check_alpha(alpha)
    if N < 1:
        raise DomainError(f"renewal table needs N >= 1, got {N}")
    if blocked is None:
        blocked = N >= BLOCKED_THRESHOLD

    mu = np.zeros(N + 1)
    mu[1:] = mu_pmf(np.arange(1, N + 1), alpha)
    q = np.zeros(N + 1)
    q[0] = 1.0

    if not blocked:
        _renewal_recursion(mu, q, 1, N + 1)
        return q

    first = min(BLOCK_SIZE, N + 1)
    _renewal_recursion(mu, q, 1, first)
    for a in range(first, N + 1, BLOCK_SIZE):
        b = min(a + BLOCK_SIZE, N + 1)
        far = _far_part(mu, q, a, b)
        _near_part(mu, q, far, a, b)
    return q


@dataclass(frozen=True)
class RenewalTable:
    """Renewal sequence q_0..q_N with the urn constants built from sum q_l^2

    c_tail is the constant of the matched power law q_l ~ c_tail l^(alpha-1) used beyond N;
    it tends to c_q as N grows.
    """
    alpha: float
    q: np.ndarray
    N: int
    q2_sum: float
    q2_tail: float
    c_tail: float
    c1: float
    c2: float
    c3: float

    def scale(self, n: float) -> float:
        return c_of_n(n, self)

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "N": self.N,
            "q2_sum": self.q2_sum,
            "q2_tail": self.q2_tail,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
        }


def urn_constants(alpha: float, q2_sum: float):
    """(c1, c2, c3) from the squared renewal sum"""
    c2 = 1.0 / q2_sum
    c1 = c2 * gamma(1.0 - 2.0 * alpha) / (gamma(alpha) * gamma(1.0 - alpha) ** 3)
    c3 = c1 / (alpha * (2.0 * alpha + 1.0))
    return c1, c2, c3


def _build_renewal_table(alpha: float, N: int) -> RenewalTable:
    start_time = time.time()
    q = renewal_sequence(alpha, N)
    q.setflags(write=False)

    c_tail = q[N] * float(N) ** (1.0 - alpha)
    # sum_{l > N} c_tail^2 l^(2a-2), integrated from the cell midpoint N + 1/2
    q2_tail = c_tail ** 2 * (N + 0.5) ** (2.0 * alpha - 1.0) / (1.0 - 2.0 * alpha)
    q2_sum = math.fsum(q * q) + q2_tail
    c1, c2, c3 = urn_constants(alpha, q2_sum)

    logging.info(f"Renewal table alpha={alpha} N={N} took {time.time() - start_time:.2f}s "
                 f"(tail share {q2_tail / q2_sum:.3e})")
    return RenewalTable(alpha=alpha, q=q, N=N, q2_sum=q2_sum, q2_tail=q2_tail,
                        c_tail=c_tail, c1=c1, c2=c2, c3=c3)


def build_renewal_table(alpha: float, N: int) -> RenewalTable:
    """Renewal table with tail-corrected sum q_l^2 and the urn constants, cached per (alpha, N)"""
    alpha = _check_alpha(alpha)
    N = int(N)
    if N < 1:
        raise DomainError(f"renewal table needs N >= 1, got {N}")
    return renewal_cache.get_or_compute(_build_renewal_table, alpha, N)


def q_tail_sum(tbl: RenewalTable, start: int, i: int = 0, j: int = 0) -> float:
    """Asymptotic estimate of sum_{r >= start} q_{i+r} q_{j+r}, for i + start and j + start beyond N"""
    a = tbl.alpha
    lower = start - 0.5
    if min(i, j) + lower <= 0:
        raise DomainError("tail sum must start beyond the origin")
    value, _ = quad(lambda x: (i + x) ** (a - 1.0) * (j + x) ** (a - 1.0), lower, np.inf,
                    epsabs=0.0, epsrel=1e-10, limit=200)
    return tbl.c_tail ** 2 * value


def q_product_sum(tbl: RenewalTable, i: int, j: int, tail_tolerance: float = 0.5):
    """c2-free sum_{r >= 0} q_{i+r} q_{j+r}: exact part from the table plus an analytic tail

    Returns (value, tail). Raises TableTooShortError when the tail carries more than
    tail_tolerance of the value.
    """
    if i < 0 or j < 0:
        raise DomainError("coalescence indices must be nonnegative")
    m = max(i, j)
    if m > tbl.N:
        raise TableTooShortError(f"table of length {tbl.N} cannot reach index {m}")
    r_max = tbl.N - m
    head = math.fsum(tbl.q[i:i + r_max + 1] * tbl.q[j:j + r_max + 1])
    tail = q_tail_sum(tbl, r_max + 1, i, j)
    value = head + tail
    if tail > tail_tolerance * value:
        raise TableTooShortError(
            f"tail is {tail / value:.2%} of the coalescence sum; extend the table beyond N={tbl.N}"
        )
    return value, tail
