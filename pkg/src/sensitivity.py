"""
Sensitivity of AIPW estimates to unobserved confounding.

Under a probit treatment model whose latent error correlates with the
outcome error at rho, the AIPW estimate is biased by rho * sigma times a
mean inverse Mills ratio. This module estimates sigma (naive or corrected
for the truncation the treatment induces), the bias, per-rho confidence
intervals and their union over a range of rho, the effect envelope over two
independent ranges and the rho ranges compatible with ordering constraints
on the observable arm means.
"""

__all__ = [
    "AteReport",
    "BiasEstimate",
    "IntervalReport",
    "RhoBounds",
    "RhoInterval",
    "SensitivitySpec",
    "SigmaMode",
    "bias_hat",
    "confidence_interval",
    "derive_rho_bounds",
    "estimate_ate",
    "feasible_rho_range",
    "rho_grid",
    "sigma_corrected",
    "sigma_naive",
    "uncertainty_interval",
]

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from aipw import (
    AipwResult,
    TargetParameter,
    aipw_ate,
    aipw_mean_y0,
    aipw_mean_y1,
    aipw_tau01,
    aipw_tau10,
)
from glmfit import Dataset, NuisanceFit
from hserrors import (
    ConfigError,
    ContractError,
    DataError,
    InvalidRhoError,
    NumericalError,
)
from hslogger import logger
from mathfn import inv_mills, norm_quantile

DENOMINATOR_FLOOR = 1e-8


class SigmaMode(Enum):
    NAIVE = "naive"
    CORRECTED = "corrected"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"Unknown sigma estimator '{value}'; expected naive or corrected"
            ) from None


@dataclass(frozen=True)
class SensitivitySpec:
    rho_min: float = 0.0
    rho_max: float = 0.0
    grid_size: int = 101
    sigma_mode: SigmaMode = SigmaMode.CORRECTED
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "sigma_mode", SigmaMode.parse(self.sigma_mode))
        if not -1.0 < self.rho_min <= self.rho_max < 1.0:
            raise ConfigError(
                f"Rho range must satisfy -1 < min <= max < 1, got "
                f"[{self.rho_min}, {self.rho_max}]"
            )
        if self.rho_min < self.rho_max and self.grid_size < 2:
            raise ConfigError(
                f"A rho range needs at least 2 grid points, got {self.grid_size}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"Alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def single(cls, rho, sigma_mode=SigmaMode.CORRECTED, alpha=0.05):
        return cls(rho, rho, 1, sigma_mode, alpha)

    @property
    def grid(self):
        if self.rho_min == self.rho_max:
            return np.array([float(self.rho_min)])
        return np.linspace(self.rho_min, self.rho_max, self.grid_size)


@dataclass(frozen=True)
class BiasEstimate:
    rho: float
    sigma_hat: float
    lambda_bar: float
    b_hat: float
    corrected: bool = False


@dataclass(frozen=True)
class RhoInterval:
    rho: float
    point: float
    ci_lower: float
    ci_upper: float
    sigma_hat: float
    b_hat: float


@dataclass(frozen=True)
class IntervalReport:
    target: TargetParameter
    estimate: float
    per_rho: tuple
    ui_lower: float
    ui_upper: float
    unconfounded: tuple
    invalid_rho: tuple = ()
    sigma_mode: SigmaMode = SigmaMode.CORRECTED
    alpha: float = 0.05


@dataclass(frozen=True)
class AteReport:
    estimate: float
    v_hat: float
    n: int
    unconfounded: tuple
    ui_lower: float
    ui_upper: float
    point_min: float
    point_max: float
    rho1: np.ndarray
    rho0: np.ndarray
    points: np.ndarray
    half_width: float
    treated: IntervalReport
    control: IntervalReport


@dataclass(frozen=True)
class RhoBounds:
    grid: np.ndarray
    middle1: np.ndarray
    middle0: np.ndarray
    treated_mean: float
    control_mean: float
    rho1: Optional[tuple]
    rho0: Optional[tuple]


def _arm_residuals(data: Dataset, fit: NuisanceFit):
    if fit.n != data.n:
        raise ContractError(f"Nuisance fit has {fit.n} rows, data has {data.n}")
    rows = data.t == fit.arm
    if int(rows.sum()) < 2:
        raise DataError(f"Sigma needs at least 2 rows with treatment {fit.arm}")
    residual = data.y[rows] - fit.m_hat[rows]
    if not np.all(np.isfinite(residual)):
        raise DataError(f"Outcome is missing on rows with treatment {fit.arm}")
    return rows, residual


def sigma_naive(data: Dataset, fit: NuisanceFit) -> float:
    """Root mean squared outcome residual over the rows of the fit's arm."""
    _, residual = _arm_residuals(data, fit)
    return math.sqrt(float(np.mean(residual**2)))


def sigma_corrected(data: Dataset, fit: NuisanceFit, rho: float) -> float:
    """
    Residual scale deflated for truncation of the latent treatment error.

    Raises InvalidRhoError when the deflation factor is not positive.
    """
    rows, residual = _arm_residuals(data, fit)
    index = fit.arm_index[rows]
    ratio = inv_mills(index)
    denominator = (
        1.0 - rho**2 * float(np.mean(index * ratio)) - rho**2 * float(np.mean(ratio**2))
    )
    if denominator <= DENOMINATOR_FLOOR:
        raise InvalidRhoError(rho, denominator)
    return math.sqrt(float(np.mean(residual**2)) / denominator)


def _target_share(fit, target):
    if not target.conditional:
        return 1.0
    if math.isnan(fit.treated_fraction):
        raise ContractError("Conditional targets need the treated fraction of the fit")
    if target is TargetParameter.MEAN_Y1_GIVEN_T0:
        return 1.0 - fit.treated_fraction
    return fit.treated_fraction


def bias_hat(
    fit: NuisanceFit, rho, sigma_hat, target, corrected=False
) -> BiasEstimate:
    """
    Confounding bias of the AIPW estimate of `target` at `rho`.

    Arm 1 targets use the mean of lambda(g); arm 0 targets mirror the sign
    and the index, so positive rho0 lowers the identified mean of Y(0).
    Conditional targets divide by the share of the other arm.
    """
    target = TargetParameter.parse(target)
    if target.arm is None:
        raise ContractError("Bias is defined per arm; the effect combines two biases")
    if fit.arm != target.arm:
        raise ContractError(f"Nuisance fit of arm {fit.arm} used for {target.value}")
    share = _target_share(fit, target)
    if share == 0.0:
        raise DataError(f"{target.value} is undefined without rows of the other arm")
    lambda_bar = float(np.mean(inv_mills(fit.arm_index))) / share
    sign = 1.0 if target.arm == 1 else -1.0
    return BiasEstimate(
        rho=float(rho),
        sigma_hat=float(sigma_hat),
        lambda_bar=lambda_bar,
        b_hat=sign * rho * sigma_hat * lambda_bar,
        corrected=corrected,
    )


def confidence_interval(aipw: AipwResult, bias: BiasEstimate, alpha=0.05):
    """Bias-shifted normal interval, returned as (lower, point, upper)."""
    if aipw.v_hat < 0.0:
        raise ContractError("Variance estimate must be nonnegative")
    point = aipw.estimate - bias.b_hat
    z = float(norm_quantile(1.0 - alpha / 2.0))
    half_width = z * math.sqrt(aipw.v_hat / aipw.n)
    return point - half_width, point, point + half_width


def _sigma(data, fit, rho, mode):
    if mode is SigmaMode.NAIVE:
        return sigma_naive(data, fit)
    return sigma_corrected(data, fit, rho)


def uncertainty_interval(
    data: Dataset,
    fit: NuisanceFit,
    aipw: AipwResult,
    spec: SensitivitySpec,
    target,
) -> IntervalReport:
    """Union of the per-rho confidence intervals over the grid of `spec`."""
    target = TargetParameter.parse(target)
    if aipw.target is not target:
        raise ContractError(
            f"AIPW result for {aipw.target.value} used for {target.value}"
        )
    corrected = spec.sigma_mode is SigmaMode.CORRECTED
    rows = []
    invalid = []
    for rho in spec.grid:
        rho = float(rho)
        try:
            sigma = _sigma(data, fit, rho, spec.sigma_mode)
        except InvalidRhoError:
            invalid.append(rho)
            continue
        bias = bias_hat(fit, rho, sigma, target, corrected)
        lower, point, upper = confidence_interval(aipw, bias, spec.alpha)
        rows.append(RhoInterval(rho, point, lower, upper, sigma, bias.b_hat))

    if invalid:
        logger.warning(
            f"{target.value}: {len(invalid)} of {len(spec.grid)} rho values are "
            f"incompatible with the data and were excluded "
            f"(from {min(invalid):g} to {max(invalid):g})"
        )
    if not rows:
        raise NumericalError(
            f"{target.value}: every rho in [{spec.rho_min:g}, {spec.rho_max:g}] is "
            f"incompatible with the data"
        )

    zero = BiasEstimate(0.0, 0.0, 0.0, 0.0, corrected)
    return IntervalReport(
        target=target,
        estimate=aipw.estimate,
        per_rho=tuple(rows),
        ui_lower=min(row.ci_lower for row in rows),
        ui_upper=max(row.ci_upper for row in rows),
        unconfounded=confidence_interval(aipw, zero, spec.alpha),
        invalid_rho=tuple(invalid),
        sigma_mode=spec.sigma_mode,
        alpha=spec.alpha,
    )


def estimate_ate(
    data: Dataset,
    fit1: NuisanceFit,
    fit0: NuisanceFit,
    spec1: SensitivitySpec,
    spec0: SensitivitySpec,
    alpha=0.05,
) -> AteReport:
    """
    Average effect with independent sensitivity parameters for each arm.

    Each (rho1, rho0) pair shifts the plain AIPW difference by the
    difference of the arm biases; the interval half-width comes from the
    combined influence values and does not depend on rho.
    """
    first = aipw_mean_y1(data, fit1)
    second = aipw_mean_y0(data, fit0)
    ate = aipw_ate(first, second)
    treated = uncertainty_interval(data, fit1, first, spec1, TargetParameter.MEAN_Y1)
    control = uncertainty_interval(data, fit0, second, spec0, TargetParameter.MEAN_Y0)

    half_width = float(norm_quantile(1.0 - alpha / 2.0)) * math.sqrt(ate.v_hat / ate.n)
    rho1 = np.array([row.rho for row in treated.per_rho])
    rho0 = np.array([row.rho for row in control.per_rho])
    points = np.subtract.outer(
        np.array([row.point for row in treated.per_rho]),
        np.array([row.point for row in control.per_rho]),
    )
    report = AteReport(
        estimate=ate.estimate,
        v_hat=ate.v_hat,
        n=ate.n,
        unconfounded=(
            ate.estimate - half_width,
            ate.estimate,
            ate.estimate + half_width,
        ),
        ui_lower=float(points.min()) - half_width,
        ui_upper=float(points.max()) + half_width,
        point_min=float(points.min()),
        point_max=float(points.max()),
        rho1=rho1,
        rho0=rho0,
        points=points,
        half_width=half_width,
        treated=treated,
        control=control,
    )
    logger.info(
        f"Effect {report.estimate:.4g}, unconfounded interval "
        f"[{report.unconfounded[0]:.4g}, {report.unconfounded[2]:.4g}], "
        f"uncertainty interval [{report.ui_lower:.4g}, {report.ui_upper:.4g}]"
    )
    return report


def rho_grid(limit=0.99, step=0.01):
    """Symmetric grid on [-limit, limit] with the given step, containing 0."""
    if not 0.0 < limit < 1.0:
        raise ConfigError(f"Rho limit must lie in (0, 1), got {limit}")
    if not 0.0 < step <= limit:
        raise ConfigError(f"Rho step must lie in (0, {limit}], got {step}")
    half = np.arange(step, limit + step / 2.0, step)
    return np.round(np.concatenate([-half[::-1], [0.0], half]), 12)


def _crossing(rho_out, rho_in, middle_out, middle_in, lower, upper):
    bound = lower if middle_out <= lower else upper
    if not np.isfinite(middle_out) or middle_in == middle_out:
        return rho_in
    step = (bound - middle_out) * (rho_in - rho_out)
    return rho_out + step / (middle_in - middle_out)


def feasible_rho_range(grid, middle, lower, upper):
    """
    Contiguous rho range where lower < middle(rho) < upper.

    Endpoints inside the grid are refined by linear interpolation of the
    crossing. Several satisfying runs resolve to the run that contains 0,
    else to the widest one. Returns None when no grid point qualifies.
    """
    grid = np.asarray(grid, dtype=float)
    middle = np.asarray(middle, dtype=float)
    satisfied = np.isfinite(middle) & (middle > lower) & (middle < upper)
    if not satisfied.any():
        return None

    runs = []
    start = None
    for i, ok in enumerate(satisfied):
        if ok and start is None:
            start = i
        if not ok and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(grid) - 1))

    containing = [run for run in runs if grid[run[0]] <= 0.0 <= grid[run[1]]]
    if containing:
        first, last = containing[0]
    else:
        first, last = max(runs, key=lambda run: grid[run[1]] - grid[run[0]])
    if len(runs) > 1:
        logger.warning(
            f"Ordering constraints hold on {len(runs)} separate rho ranges; "
            f"keeping [{grid[first]:g}, {grid[last]:g}]"
        )

    low = float(grid[first])
    if first > 0:
        low = float(
            _crossing(
                grid[first - 1],
                grid[first],
                middle[first - 1],
                middle[first],
                lower,
                upper,
            )
        )
    high = float(grid[last])
    if last < len(grid) - 1:
        high = float(
            _crossing(
                grid[last + 1],
                grid[last],
                middle[last + 1],
                middle[last],
                lower,
                upper,
            )
        )
    return low, high


def _middle_curve(data, fit, result, target, grid, sigma_mode):
    curve = np.full(len(grid), np.nan)
    corrected = sigma_mode is SigmaMode.CORRECTED
    for i, rho in enumerate(grid):
        try:
            sigma = _sigma(data, fit, float(rho), sigma_mode)
        except InvalidRhoError:
            continue
        bias = bias_hat(fit, float(rho), sigma, target, corrected)
        curve[i] = result.estimate - bias.b_hat
    return curve


def derive_rho_bounds(
    data: Dataset,
    fit1: NuisanceFit,
    fit0: NuisanceFit,
    grid,
    sigma_mode=SigmaMode.CORRECTED,
) -> RhoBounds:
    """
    Rho ranges under which the cross-arm means stay between the observed arm means.

    The bias-corrected estimate of E(Y(1)|T=0) as a function of rho1, and of
    E(Y(0)|T=1) as a function of rho0, must lie strictly above the outcome
    mean of treated rows and strictly below that of control rows.
    """
    sigma_mode = SigmaMode.parse(sigma_mode)
    grid = np.asarray(grid, dtype=float)
    treated = data.t == 1
    if treated.all() or not treated.any():
        raise DataError("Rho bounds need both treated and control rows")
    treated_mean = float(np.mean(data.y[treated]))
    control_mean = float(np.mean(data.y[~treated]))
    if not (np.isfinite(treated_mean) and np.isfinite(control_mean)):
        raise DataError("Rho bounds need the outcome observed on every row")
    if treated_mean >= control_mean:
        logger.warning(
            f"Treated mean {treated_mean:.4g} is not below control mean "
            f"{control_mean:.4g}; no rho satisfies the ordering constraints"
        )

    middle1 = _middle_curve(
        data,
        fit1,
        aipw_tau10(data, fit1),
        TargetParameter.MEAN_Y1_GIVEN_T0,
        grid,
        sigma_mode,
    )
    middle0 = _middle_curve(
        data,
        fit0,
        aipw_tau01(data, fit0),
        TargetParameter.MEAN_Y0_GIVEN_T1,
        grid,
        sigma_mode,
    )
    bounds = RhoBounds(
        grid=grid,
        middle1=middle1,
        middle0=middle0,
        treated_mean=treated_mean,
        control_mean=control_mean,
        rho1=feasible_rho_range(grid, middle1, treated_mean, control_mean),
        rho0=feasible_rho_range(grid, middle0, treated_mean, control_mean),
    )
    for name, found in (("rho1", bounds.rho1), ("rho0", bounds.rho0)):
        if found is None:
            logger.warning(f"No {name} on the grid satisfies the ordering constraints")
        else:
            logger.info(f"Plausible {name} range: [{found[0]:.4g}, {found[1]:.4g}]")
    return bounds
