import math
from dataclasses import dataclass

from scipy.special import gamma

from .errors import DomainError


@dataclass(frozen=True)
class HurstParams:
    """Hurst parameter with every closed-form constant derived from it

    Parameters:
    -----------
    H: Hurst parameter in (1/2, 1)
    alpha: H - 1/2, the tail exponent of the urn offsets
    c_H: normaliser of the moving-average kernel
    c_rho: prefactor of (t - s)^(2H) in the same-time overlap covariance
    c_q: 1/(Gamma(alpha) Gamma(1 - alpha)), the renewal-density constant
    """
    H: float
    alpha: float
    c_H: float
    c_rho: float
    c_q: float

    @property
    def two_H(self) -> float:
        return 2.0 * self.H


def make_hurst_params(H: float) -> HurstParams:
    """Build the constants for a Hurst parameter in (1/2, 1)"""
    H = float(H)
    if not math.isfinite(H) or not 0.5 < H < 1.0:
        raise DomainError(f"Hurst parameter must lie in (1/2, 1), got {H}")

    alpha = H - 0.5
    c_H_sq = -(2.0 ** (-2.0 * H)) * gamma(-H) * gamma(H + 0.5) / math.sqrt(math.pi)
    c_rho = math.sqrt(math.pi) * 2.0 ** (2.0 * H - 1.0) / (gamma(1.0 - H) * gamma(H + 0.5))
    c_q = 1.0 / (gamma(alpha) * gamma(1.0 - alpha))

    return HurstParams(H=H, alpha=alpha, c_H=math.sqrt(c_H_sq), c_rho=c_rho, c_q=c_q)


def params_from_alpha(alpha: float) -> HurstParams:
    """Same as make_hurst_params, indexed by the urn exponent alpha = H - 1/2"""
    return make_hurst_params(float(alpha) + 0.5)


def _check_time(t: float) -> float:
    t = float(t)
    if t < 0.0:
        raise DomainError(f"time must be nonnegative, got {t}")
    return t


def m_yule(t: float, p: HurstParams) -> float:
    """Leading order of the maximum over a rate-one Yule tree"""
    t = _check_time(t)
    return t ** (p.H + 0.5) * math.sqrt(2.0) / (p.c_H * (p.H + 0.5))


def m_yule_gamma_form(t: float, p: HurstParams) -> float:
    """The same speed written through Gamma functions instead of c_H"""
    t = _check_time(t)
    H = p.H
    inner = math.sqrt(math.pi) * 2.0 ** (2.0 * H + 1.0) * H / (
        gamma(1.0 - H) * gamma(H + 0.5) * (H + 0.5) ** 2
    )
    return t ** (H + 0.5) * math.sqrt(inner)


def m_binary(t: float, p: HurstParams) -> float:
    """Leading order of the maximum over the deterministic binary tree"""
    return m_yule(t, p) * math.sqrt(math.log(2.0))


def iid_benchmark(t: float, p: HurstParams) -> float:
    """Speed of e^t independent fBM particles, sqrt(2) t^(H+1/2)"""
    t = _check_time(t)
    return math.sqrt(2.0) * t ** (p.H + 0.5)


def speed(t: float, p: HurstParams, kind: str) -> float:
    """Tree-kind-matched leading order: m_yule for Yule trees, m_binary otherwise"""
    if kind == "binary":
        return m_binary(t, p)
    return m_yule(t, p)


def c_of_n(n: float, tbl) -> float:
    """Scaling c(n) = sqrt(c3 n^(2 alpha + 1)) of the urn walk, with c3 taken from a renewal table"""
    n = float(n)
    if n <= 0.0:
        raise DomainError(f"scaling needs n > 0, got {n}")
    return math.sqrt(tbl.c3 * n ** (2.0 * tbl.alpha + 1.0))
