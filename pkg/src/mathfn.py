"""
Standard normal special functions used by every estimator.

All functions accept a scalar or a numpy array. Scalar input returns a
plain float, array input returns an array of the same shape.
"""

__all__ = ["MILLS_SWITCH", "inv_mills", "norm_cdf", "norm_pdf", "norm_quantile"]

import math

import numpy as np
from scipy import special

from hserrors import DomainError

# Below this point phi/Phi is replaced by the scaled complementary error function
MILLS_SWITCH = -5.0

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _finite(x, name="x"):
    values = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name} must be finite")
    return values


def _out(values, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


def norm_pdf(x):
    values = _finite(x)
    return _out(_INV_SQRT_2PI * np.exp(-0.5 * values * values), x)


def norm_cdf(x):
    values = _finite(x)
    return _out(special.ndtr(values), x)


def norm_quantile(p):
    values = np.asarray(p, dtype=float)
    if not np.all((values > 0.0) & (values < 1.0)):
        raise DomainError("p must lie strictly between 0 and 1")
    return _out(special.ndtri(values), p)


def inv_mills(x):
    """
    Inverse Mills ratio phi(x)/Phi(x).

    The direct ratio is used for x >= MILLS_SWITCH. Below it the ratio is
    rewritten as sqrt(2/pi)/erfcx(-x/sqrt(2)), which stays finite and
    accurate where Phi underflows.
    """
    values = _finite(x)
    result = np.empty_like(values)
    tail = values < MILLS_SWITCH
    body = ~tail
    result[body] = (
        _INV_SQRT_2PI
        * np.exp(-0.5 * values[body] ** 2)
        / special.ndtr(values[body])
    )
    result[tail] = _SQRT_2_OVER_PI / special.erfcx(-values[tail] / math.sqrt(2.0))
    return _out(result, x)
