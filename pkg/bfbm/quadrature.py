import math
import warnings
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import roots_legendre

from .errors import QuadratureError

# Absolute target per integral
DEFAULT_EPSABS = 1e-10
DEFAULT_EPSREL = 1e-10
DEFAULT_LIMIT = 400

# Achieved error beyond this is a failure, below it a QUADPACK warning is tolerated
FAILURE_TOLERANCE = 1e-7


def integrate(func: Callable[[float], float], a: float, b: float, what: str = "integral",
              epsabs: float = DEFAULT_EPSABS, epsrel: float = DEFAULT_EPSREL,
              limit: int = DEFAULT_LIMIT, weight: Optional[str] = None, wvar=None,
              points=None, failure_tolerance: float = FAILURE_TOLERANCE) -> Tuple[float, float]:
    """
    Adaptive Gauss-Kronrod quadrature through QUADPACK

    Returns (value, estimated error). Raises QuadratureError carrying the achieved
    estimate when the error estimate exceeds failure_tolerance (relative to max(1, |value|)).
    """
    if a == b:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=limit)
        if weight is not None:
            kwargs.update(weight=weight, wvar=wvar)
        if points is not None:
            kwargs.update(points=points)
        value, error = quad(func, a, b, **kwargs)[:2]
    if not math.isfinite(value) or error > failure_tolerance * max(1.0, abs(value)):
        raise QuadratureError(f"{what} did not converge: estimate {value!r}, error {error!r}",
                              estimate=value, error=error)
    return float(value), float(error)


@lru_cache(maxsize=16)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]"""
    x, w = roots_legendre(order)
    return 0.5 * (x + 1.0), 0.5 * w


def power_difference(t: float, x, alpha: float):
    """(x + t)^alpha - x^alpha without cancellation for large x"""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        far = x ** alpha * np.expm1(alpha * np.log1p(t / np.where(x > 0, x, 1.0)))
    near = (x + t) ** alpha - x ** alpha
    out = np.where(x > 4.0 * t, far, near)
    return out if out.ndim else float(out)
