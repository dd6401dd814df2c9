"""
Augmented inverse probability weighting estimators.

Point estimates, influence values and variance estimates for the mean of a
potential outcome, its mean among the other arm, and the average effect.
"""

__all__ = [
    "AipwResult",
    "TargetParameter",
    "aipw_ate",
    "aipw_estimate",
    "aipw_mean_y0",
    "aipw_mean_y1",
    "aipw_tau01",
    "aipw_tau10",
    "variance_hat",
]

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from glmfit import Dataset, NuisanceFit
from hserrors import ConfigError, ContractError, DataError


class TargetParameter(Enum):
    MEAN_Y1 = "mean_y1"
    MEAN_Y0 = "mean_y0"
    MEAN_Y1_GIVEN_T0 = "mean_y1_given_t0"
    MEAN_Y0_GIVEN_T1 = "mean_y0_given_t1"
    ATE = "ate"

    @property
    def arm(self):
        """Potential outcome arm of the target; None for the effect."""
        if self in (TargetParameter.MEAN_Y1, TargetParameter.MEAN_Y1_GIVEN_T0):
            return 1
        if self in (TargetParameter.MEAN_Y0, TargetParameter.MEAN_Y0_GIVEN_T1):
            return 0
        return None

    @property
    def conditional(self):
        return self in (
            TargetParameter.MEAN_Y1_GIVEN_T0,
            TargetParameter.MEAN_Y0_GIVEN_T1,
        )

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(target.value for target in cls)
            raise ConfigError(
                f"Unknown target '{value}'; expected one of {names}"
            ) from None


@dataclass(frozen=True)
class AipwResult:
    target: TargetParameter
    estimate: float
    psi: np.ndarray
    v_hat: float
    n: int
    n_t: int

    @property
    def standard_error(self):
        return math.sqrt(self.v_hat / self.n)


def _arm_terms(data: Dataset, fit: NuisanceFit, arm):
    if fit.n != data.n:
        raise ContractError(f"Nuisance fit has {fit.n} rows, data has {data.n}")
    if fit.arm != arm:
        raise ContractError(
            f"Nuisance fit of arm {fit.arm} used for an arm {arm} target"
        )
    rows = data.t == arm
    weights = fit.weight_propensity
    if np.any(weights[rows] <= 0.0):
        raise ContractError(
            f"Arm {arm} propensities must be positive on rows of the arm"
        )
    residual = np.where(rows, data.y - fit.m_hat, 0.0)
    if not np.all(np.isfinite(residual)):
        raise DataError(f"Outcome is missing on rows with treatment {arm}")
    weighted = np.zeros(data.n)
    weighted[rows] = residual[rows] / weights[rows]
    return rows, residual, weights, weighted


def variance_hat(data: Dataset, fit: NuisanceFit, tau_hat: float) -> float:
    """Weighted squared arm residuals plus the spread of the outcome regression."""
    rows, residual, weights, _ = _arm_terms(data, fit, fit.arm)
    first = np.zeros(data.n)
    first[rows] = residual[rows] ** 2 / weights[rows] ** 2
    return float(np.mean(first) + np.mean((fit.m_hat - tau_hat) ** 2))


def _aipw_mean(data, fit, target):
    _, _, _, weighted = _arm_terms(data, fit, target.arm)
    term = weighted + fit.m_hat
    estimate = float(np.mean(term))
    return AipwResult(
        target=target,
        estimate=estimate,
        psi=term - estimate,
        v_hat=variance_hat(data, fit, estimate),
        n=data.n,
        n_t=data.n_treated,
    )


def aipw_mean_y1(data: Dataset, fit: NuisanceFit) -> AipwResult:
    return _aipw_mean(data, fit, TargetParameter.MEAN_Y1)


def aipw_mean_y0(data: Dataset, fit0: NuisanceFit) -> AipwResult:
    return _aipw_mean(data, fit0, TargetParameter.MEAN_Y0)


def _aipw_ratio(data, fit, target):
    """
    Mean of the arm's potential outcome among rows of the other arm.

    The influence values follow the delta method for the ratio of the
    numerator mean to the share of the other arm.
    """
    rows, _, weights, weighted = _arm_terms(data, fit, target.arm)
    other = (~rows).astype(float)
    share = float(np.mean(other))
    if share == 0.0:
        raise DataError(
            f"No rows with treatment {1 - target.arm}; {target.value} is undefined"
        )
    numerator = other * fit.m_hat + weighted * (1.0 - weights)
    estimate = float(np.mean(numerator)) / share
    psi = (numerator - estimate * other) / share
    return AipwResult(
        target=target,
        estimate=estimate,
        psi=psi,
        v_hat=float(np.mean(psi**2)),
        n=data.n,
        n_t=data.n_treated,
    )


def aipw_tau10(data: Dataset, fit: NuisanceFit) -> AipwResult:
    return _aipw_ratio(data, fit, TargetParameter.MEAN_Y1_GIVEN_T0)


def aipw_tau01(data: Dataset, fit0: NuisanceFit) -> AipwResult:
    return _aipw_ratio(data, fit0, TargetParameter.MEAN_Y0_GIVEN_T1)


def aipw_ate(first: AipwResult, second: AipwResult) -> AipwResult:
    """Difference of the arm means with the combined influence values."""
    if (
        first.target is not TargetParameter.MEAN_Y1
        or second.target is not TargetParameter.MEAN_Y0
    ):
        raise ContractError("The effect combines a mean_y1 and a mean_y0 result")
    if first.n != second.n:
        raise ContractError("Arm results come from different samples")
    psi = first.psi - second.psi
    return AipwResult(
        target=TargetParameter.ATE,
        estimate=first.estimate - second.estimate,
        psi=psi,
        v_hat=float(np.mean(psi**2)),
        n=first.n,
        n_t=first.n_t,
    )


_ESTIMATORS = {
    TargetParameter.MEAN_Y1: aipw_mean_y1,
    TargetParameter.MEAN_Y0: aipw_mean_y0,
    TargetParameter.MEAN_Y1_GIVEN_T0: aipw_tau10,
    TargetParameter.MEAN_Y0_GIVEN_T1: aipw_tau01,
}


def aipw_estimate(data: Dataset, fit: NuisanceFit, target) -> AipwResult:
    target = TargetParameter.parse(target)
    if target is TargetParameter.ATE:
        raise ContractError("The effect needs one fit per arm; use aipw_ate")
    return _ESTIMATORS[target](data, fit)
