"""
Nuisance model estimation.

Lasso-penalized linear and probit regressions solved with scikit-learn's
coordinate descent on internally standardized columns, data-driven penalty
selection and unpenalized refits on the selected columns. `fit_nuisance` bundles the
outcome regression and the propensity model one estimator needs.
"""

__all__ = [
    "STRATEGIES",
    "Dataset",
    "DesignMatrix",
    "LinearFit",
    "NuisanceFit",
    "NuisanceOptions",
    "ProbitFit",
    "fit_nuisance",
    "lasso_linear",
    "lasso_probit",
    "nuisance_error",
    "refit_linear",
    "refit_probit",
]

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg, special
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Lasso, LinearRegression
from sklearn.model_selection import KFold, StratifiedKFold

from hserrors import ConfigError, ContractError, ConvergenceError, DataError
from hslogger import logger
from mathfn import inv_mills, norm_cdf, norm_quantile

STRATEGIES = ("refit", "lasso")

COORDINATE_TOLERANCE = 1e-7
SOLVER_TOLERANCE = 1e-10
SCORE_TOLERANCE = 1e-8
MAX_SWEEPS = 100_000
MAX_NEWTON_STEPS = 100
COEFFICIENT_CAP = 1e4
PATH_LENGTH = 50
LOADING_UPDATES = 15
LOADING_TOLERANCE = 1e-5
INITIAL_RESIDUAL_COLUMNS = 5

_ZERO_VARIANCE = 1e-10
_MIN_CURVATURE = 1e-12

Penalty = Union[float, str]


def _frozen(values):
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple
    has_intercept: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("Design matrix must be two-dimensional")
        n, p = values.shape
        if n < 2:
            raise DataError(f"Design matrix needs at least 2 rows, got {n}")
        if len(self.column_names) != p:
            raise DataError(
                f"Design matrix has {p} columns but {len(self.column_names)} names"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("Design matrix contains missing or non-finite entries")
        if self.has_intercept and (p == 0 or not np.all(values[:, 0] == 1.0)):
            raise DataError("Intercept column must be constant 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @classmethod
    def with_intercept(cls, values, column_names):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        stacked = np.column_stack([np.ones(values.shape[0]), values])
        return cls(stacked, ("(Intercept)", *column_names), True)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def rows(self, mask):
        return DesignMatrix(self.values[mask], self.column_names, self.has_intercept)


@dataclass(frozen=True)
class Dataset:
    """Covariates, binary treatment and outcome; `y` may be NaN off the observed arm."""

    x: DesignMatrix
    t: np.ndarray
    y: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if t.shape[0] != self.x.n or y.shape[0] != self.x.n:
            raise DataError(
                f"Treatment ({t.shape[0]}) and outcome ({y.shape[0]}) lengths "
                f"must match the design matrix ({self.x.n} rows)"
            )
        if not np.all((t == 0.0) | (t == 1.0)):
            raise DataError("Treatment must be coded 0/1")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self):
        return self.x.n

    @property
    def n_treated(self):
        return int(self.t.sum())

    @property
    def n_control(self):
        return self.n - self.n_treated

    def arm_mask(self, arm):
        return self.t == arm


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray
    selected: tuple
    penalty: float = 0.0
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients))
        object.__setattr__(self, "selected", tuple(int(j) for j in self.selected))

    def fitted(self, x):
        return _matrix(x) @ self.coefficients


@dataclass(frozen=True)
class ProbitFit:
    coefficients: np.ndarray
    selected: tuple
    penalty: float = 0.0
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients))
        object.__setattr__(self, "selected", tuple(int(j) for j in self.selected))

    def index(self, x):
        return _matrix(x) @ self.coefficients

    def propensity(self, x):
        return norm_cdf(self.index(x))


def _matrix(x):
    return x.values if isinstance(x, DesignMatrix) else np.asarray(x, dtype=float)


# Penalized solver core


@dataclass
class _Standardized:
    z: np.ndarray
    columns: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    eligible: np.ndarray
    has_intercept: bool


@dataclass
class _State:
    theta: np.ndarray
    intercept: float = 0.0

    def copy(self):
        return _State(self.theta.copy(), self.intercept)


def _standardize(x):
    first = 1 if x.has_intercept else 0
    columns = np.arange(first, x.p)
    raw = x.values[:, columns]
    if x.has_intercept:
        center = raw.mean(axis=0)
        spread = raw.std(axis=0)
    else:
        center = np.zeros(raw.shape[1])
        spread = np.sqrt(np.mean(raw * raw, axis=0))
    eligible = spread > _ZERO_VARIANCE * (1.0 + np.abs(center))
    scale = np.where(eligible, spread, 1.0)
    z = (raw - center) / scale
    z[:, ~eligible] = 0.0
    return _Standardized(z, columns, center, scale, eligible, x.has_intercept)


def _coefficients(std, state, p):
    coefficients = np.zeros(p)
    beta = np.where(std.eligible, state.theta / std.scale, 0.0)
    coefficients[std.columns] = beta
    if std.has_intercept:
        coefficients[0] = state.intercept - float(np.dot(std.center, beta))
    return coefficients


def _selected(std, state):
    return tuple(int(std.columns[j]) for j in np.flatnonzero(state.theta))


def _weighted_lasso(std, response, weights, penalty, factors, state):
    """
    Minimize (1/2n) sum w (response - b0 - Z theta)^2 + penalty * sum f|theta|.

    Penalty factors are absorbed into the columns so sklearn's uniform l1
    penalty applies; sklearn rescales `sample_weight` to sum to n, hence
    alpha carries n / sum(w). `state` is updated in place and seeds the
    warm start; returns False if the sweep budget ran out.
    """
    n = std.z.shape[0]
    columns = np.flatnonzero(std.eligible)
    state.theta[~std.eligible] = 0.0
    if columns.size == 0:
        if std.has_intercept:
            state.intercept = float(np.average(response, weights=weights))
        return True

    scale = factors[columns]
    design = std.z[:, columns] / scale
    if penalty <= 0.0:
        model = LinearRegression(fit_intercept=std.has_intercept)
    else:
        model = Lasso(
            alpha=penalty * n / float(weights.sum()),
            fit_intercept=std.has_intercept,
            tol=SOLVER_TOLERANCE,
            max_iter=MAX_SWEEPS,
            warm_start=True,
            selection="cyclic",
        )
        model.coef_ = state.theta[columns] * scale
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model.fit(design, response, sample_weight=weights)

    state.theta[columns] = model.coef_ / scale
    state.intercept = float(model.intercept_) if std.has_intercept else 0.0
    return penalty <= 0.0 or model.n_iter_ < MAX_SWEEPS


def _solve_linear(std, y, penalty, factors, state=None):
    n, q = std.z.shape
    if state is None:
        state = _State(np.zeros(q), 0.0)
    converged = _weighted_lasso(std, y, np.ones(n), penalty, factors, state)
    return state, converged


def _probit_working(sign, eta):
    u = sign * eta
    ratio = inv_mills(u)
    gradient = sign * ratio
    curvature = np.maximum(ratio * (u + ratio), _MIN_CURVATURE)
    return gradient, curvature


def _probit_objective(std, sign, state, penalty, factors):
    eta = state.intercept + std.z @ state.theta
    loss = -float(np.mean(special.log_ndtr(sign * eta)))
    if penalty > 0.0:
        loss += penalty * float(np.dot(factors, np.abs(state.theta)))
    return loss


def _intercept_only_probit(t):
    return float(norm_quantile(float(np.mean(t))))


def _solve_probit(std, t, penalty, factors, state=None):
    """Proximal Newton: weighted lasso on the probit working response, halving steps."""
    n, q = std.z.shape
    sign = 2.0 * t - 1.0
    if state is None:
        intercept = _intercept_only_probit(t) if std.has_intercept else 0.0
        state = _State(np.zeros(q), intercept)
    current = _probit_objective(std, sign, state, penalty, factors)
    for _ in range(MAX_NEWTON_STEPS):
        eta = state.intercept + std.z @ state.theta
        gradient, curvature = _probit_working(sign, eta)
        candidate = state.copy()
        working = eta + gradient / curvature
        _weighted_lasso(std, working, curvature, penalty, factors, candidate)
        step = 1.0
        while True:
            trial = _State(
                state.theta + step * (candidate.theta - state.theta),
                state.intercept + step * (candidate.intercept - state.intercept),
            )
            value = _probit_objective(std, sign, trial, penalty, factors)
            if value <= current + 1e-12 * abs(current) or step < 1e-6:
                break
            step /= 2.0
        change = max(
            float(np.max(np.abs(trial.theta - state.theta), initial=0.0)),
            abs(trial.intercept - state.intercept),
        )
        state = trial
        beta = np.where(std.eligible, state.theta / std.scale, 0.0)
        if np.linalg.norm(beta) > COEFFICIENT_CAP:
            return state, False
        stalled = abs(current - value) <= 1e-12 * (1.0 + abs(value))
        if change < COORDINATE_TOLERANCE or stalled:
            return state, True
        current = value
    return state, False


def _squared_error(y, prediction):
    return float(np.mean((y - prediction) ** 2))


def _probit_deviance(t, index):
    return -2.0 * float(np.mean(special.log_ndtr((2.0 * t - 1.0) * index)))


def _max_penalty(std, gradient_response, weights=None):
    n = std.z.shape[0]
    weights = np.ones(n) if weights is None else weights
    gradient = std.z.T @ (weights * gradient_response) / n
    gradient = np.where(std.eligible, np.abs(gradient), 0.0)
    return float(gradient.max(initial=0.0))


def _penalty_path(largest, n, q):
    ratio = 0.01 if q < n else 0.05
    if largest <= 0.0:
        return np.array([0.0])
    return np.geomspace(largest, largest * ratio, PATH_LENGTH)


def _cross_validate(x, response, solve, loss, path, folds, seed, stratify):
    if stratify:
        smallest = int(min(np.sum(response == 0), np.sum(response == 1)))
        folds = min(folds, smallest)
        if folds < 2:
            raise DataError(
                "Cross-validation needs at least 2 rows of each treatment class"
            )
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    else:
        folds = min(folds, x.n)
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)

    losses = np.full((folds, len(path)), np.inf)
    for k, (train, test) in enumerate(splitter.split(x.values, response)):
        train_std = _standardize(x.rows(train))
        factors = np.ones(train_std.z.shape[1])
        state = None
        for i, penalty in enumerate(path):
            state, converged = solve(
                train_std, response[train], penalty, factors, state
            )
            if not converged:
                logger.debug(f"Fold {k + 1}: path stopped at penalty {penalty:.4g}")
                break
            coefficients = _coefficients(train_std, state, x.p)
            losses[k, i] = loss(response[test], x.values[test] @ coefficients)

    mean_loss = losses.mean(axis=0)
    if not np.any(np.isfinite(mean_loss)):
        raise ConvergenceError("Cross-validation failed on every penalty of the path")
    best = int(np.argmin(mean_loss))
    logger.debug(
        f"Cross-validation over {folds} folds chose penalty {path[best]:.4g} "
        f"(mean loss {mean_loss[best]:.4g})"
    )
    return best


def _fit_along_path(std, response, solve, path, factors):
    state = None
    converged = True
    for penalty in path:
        state, converged = solve(std, response, penalty, factors, state)
    return state, converged


def _check_penalty(penalty):
    if isinstance(penalty, str):
        if penalty != "auto":
            raise ContractError(f"Unknown penalty rule '{penalty}'")
        return penalty
    value = float(penalty)
    if math.isnan(value) or value < 0.0:
        raise ContractError(f"Penalty must be nonnegative, got {penalty}")
    return value


def _check_response(x, response, what):
    response = np.asarray(response, dtype=float).ravel()
    if response.shape[0] != x.n:
        raise DataError(f"{what} has {response.shape[0]} values for {x.n} rows")
    if not np.all(np.isfinite(response)):
        raise DataError(f"{what} contains missing or non-finite values")
    return response


def _check_binary(x, t):
    t = _check_response(x, t, "Treatment")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise DataError("Treatment must be coded 0/1")
    if t.min() == t.max():
        raise DataError(
            f"Treatment has a single class ({int(t[0])}); both are required"
        )
    return t


def _check_selected(x, selected):
    if not x.has_intercept:
        raise ContractError("Refits require a design matrix with an intercept column")
    columns = sorted({int(j) for j in selected})
    for j in columns:
        if j < 1 or j >= x.p:
            raise ContractError(f"Selected column {j} is outside 1..{x.p - 1}")
    if len(columns) + 1 >= x.n:
        raise DataError(
            f"Refit on {len(columns)} selected columns needs more than "
            f"{len(columns) + 1} rows, got {x.n}"
        )
    return columns


# Linear models


def _least_squares(values, y):
    solution, _, rank, _ = linalg.lstsq(values, y)
    if rank < values.shape[1]:
        logger.warning(
            f"Least squares design is rank deficient ({rank} of {values.shape[1]} "
            f"columns); using the minimum-norm solution"
        )
    return solution


def _plugin_level(n, q, constant):
    gamma = 0.1 / math.log(n)
    return constant * float(norm_quantile(1.0 - gamma / (2.0 * q))) / math.sqrt(n)


def _robust_loadings(centered, residual):
    return np.sqrt(np.mean(centered**2 * residual[:, None] ** 2, axis=0))


def _initial_residual(x, std, y):
    raw = x.values[:, std.columns]
    centered_y = y - y.mean() if x.has_intercept else y
    spread = max(float(np.sqrt(np.mean(centered_y**2))), 1e-300)
    correlation = np.abs(std.z.T @ centered_y) / (x.n * spread)
    correlation = np.where(std.eligible, correlation, -1.0)
    top = np.argsort(-correlation, kind="stable")[:INITIAL_RESIDUAL_COLUMNS]
    top = [j for j in top if std.eligible[j]]
    parts = [raw[:, top]]
    if x.has_intercept:
        parts.insert(0, np.ones((x.n, 1)))
    design = np.column_stack(parts)
    if design.shape[1] == 0:
        return y.copy()
    return y - design @ linalg.lstsq(design, y)[0]


def _post_lasso_residual(x, y, selected):
    keep = ([0] if x.has_intercept else []) + list(selected)
    if not keep:
        return y.copy()
    design = x.values[:, keep]
    return y - design @ linalg.lstsq(design, y)[0]


def _rigorous_penalty(x, std, y, constant):
    """
    Plug-in penalty level with heteroscedasticity-robust loadings.

    Returns (penalty, factors, state) or None when the loadings degenerate.
    """
    q = std.z.shape[1]
    penalty = _plugin_level(x.n, q, constant)
    centered = x.values[:, std.columns] - std.center
    residual = _initial_residual(x, std, y)
    loadings = _robust_loadings(centered, residual)
    state = None
    for iteration in range(LOADING_UPDATES):
        usable = loadings[std.eligible]
        if not np.all(np.isfinite(usable)) or np.any(usable <= 1e-12):
            return None
        factors = np.where(std.eligible, loadings / std.scale, 1.0)
        state, _ = _solve_linear(std, y, penalty, factors)
        residual = _post_lasso_residual(x, y, _selected(std, state))
        updated = _robust_loadings(centered, residual)
        shift = float(np.max(np.abs(updated - loadings)[std.eligible], initial=0.0))
        loadings = updated
        logger.debug(f"Loading update {iteration + 1}: largest change {shift:.3g}")
        if shift < LOADING_TOLERANCE:
            break
    usable = loadings[std.eligible]
    if not np.all(np.isfinite(usable)) or np.any(usable <= 1e-12):
        return None
    factors = np.where(std.eligible, loadings / std.scale, 1.0)
    state, _ = _solve_linear(std, y, penalty, factors, state)
    return penalty, factors, state


def lasso_linear(
    x: DesignMatrix,
    y,
    penalty: Penalty = "auto",
    *,
    plugin_constant=1.1,
    cv_folds=10,
    fold_seed=0,
) -> LinearFit:
    """
    Lasso least squares with the intercept unpenalized.

    The penalty multiplies the l1 norm of the standardized coefficients.
    "auto" uses the plug-in level with data-driven loadings and falls back
    to cross-validated mean squared error when the loadings degenerate.
    """
    penalty = _check_penalty(penalty)
    y = _check_response(x, y, "Outcome")
    std = _standardize(x)
    q = std.z.shape[1]

    if penalty == 0.0:
        keep = ([0] if x.has_intercept else []) + [
            int(c) for c, ok in zip(std.columns, std.eligible) if ok
        ]
        coefficients = np.zeros(x.p)
        if keep:
            coefficients[keep] = _least_squares(x.values[:, keep], y)
        selected = [j for j in keep if j != 0 or not x.has_intercept]
        return LinearFit(coefficients, selected, 0.0)

    if penalty == math.inf or q == 0 or not np.any(std.eligible):
        coefficients = np.zeros(x.p)
        if x.has_intercept:
            coefficients[0] = y.mean()
        level = float(penalty) if penalty != "auto" else math.inf
        return LinearFit(coefficients, (), level)

    factors = np.ones(q)
    if penalty == "auto":
        rigorous = _rigorous_penalty(x, std, y, plugin_constant)
        if rigorous is not None:
            penalty, factors, state = rigorous
            converged = True
        else:
            logger.warning(
                "Plug-in penalty loadings degenerated; choosing the outcome penalty "
                "by cross-validation"
            )
            centered = y - y.mean() if x.has_intercept else y
            path = _penalty_path(_max_penalty(std, centered), x.n, q)
            best = _cross_validate(
                x, y, _solve_linear, _squared_error, path, cv_folds, fold_seed, False
            )
            penalty = float(path[best])
            state, converged = _fit_along_path(
                std, y, _solve_linear, path[: best + 1], factors
            )
    else:
        state, converged = _solve_linear(std, y, penalty, factors)

    if not converged:
        logger.warning(f"Linear lasso did not converge at penalty {penalty:.4g}")
    fit = LinearFit(
        _coefficients(std, state, x.p), _selected(std, state), penalty, converged
    )
    logger.debug(
        f"Linear lasso at penalty {penalty:.4g} selected {len(fit.selected)} columns"
    )
    return fit


def refit_linear(x: DesignMatrix, y, selected) -> LinearFit:
    """Least squares on the intercept plus the selected columns."""
    y = _check_response(x, y, "Outcome")
    columns = _check_selected(x, selected)
    keep = [0] + columns
    coefficients = np.zeros(x.p)
    coefficients[keep] = _least_squares(x.values[:, keep], y)
    return LinearFit(coefficients, columns, 0.0)


# Probit models


def _probit_partial(std, state, p, penalty):
    return ProbitFit(
        _coefficients(std, state, p), _selected(std, state), penalty, False
    )


def lasso_probit(
    x: DesignMatrix,
    t,
    penalty: Penalty = "auto",
    *,
    cv_folds=10,
    fold_seed=0,
) -> ProbitFit:
    """
    Lasso probit regression with the intercept unpenalized.

    "auto" picks the penalty minimizing stratified K-fold mean deviance over
    a log-spaced path with warm starts.
    """
    penalty = _check_penalty(penalty)
    t = _check_binary(x, t)

    std = _standardize(x)
    q = std.z.shape[1]
    if penalty == 0.0:
        return refit_probit(x, t, std.columns[std.eligible])

    if penalty == math.inf or q == 0 or not np.any(std.eligible):
        coefficients = np.zeros(x.p)
        if x.has_intercept:
            coefficients[0] = _intercept_only_probit(t)
        level = math.inf if penalty == "auto" else float(penalty)
        return ProbitFit(coefficients, (), level)

    factors = np.ones(q)
    if penalty == "auto":
        start = _intercept_only_probit(t) if x.has_intercept else 0.0
        gradient, _ = _probit_working(2.0 * t - 1.0, np.full(x.n, start))
        path = _penalty_path(_max_penalty(std, gradient), x.n, q)
        best = _cross_validate(
            x, t, _solve_probit, _probit_deviance, path, cv_folds, fold_seed, True
        )
        penalty = float(path[best])
        state, converged = _fit_along_path(
            std, t, _solve_probit, path[: best + 1], factors
        )
    else:
        state, converged = _solve_probit(std, t, penalty, factors)

    fit = ProbitFit(
        _coefficients(std, state, x.p), _selected(std, state), penalty, converged
    )
    if np.linalg.norm(fit.coefficients) > COEFFICIENT_CAP:
        raise ConvergenceError(
            f"Probit lasso diverged at penalty {penalty:.4g}: coefficient norm exceeds "
            f"{COEFFICIENT_CAP:g} (quasi-separation)",
            partial=_probit_partial(std, state, x.p, penalty),
        )
    if not converged:
        logger.warning(f"Probit lasso did not converge at penalty {penalty:.4g}")
    logger.debug(
        f"Probit lasso at penalty {penalty:.4g} selected {len(fit.selected)} columns"
    )
    return fit


def refit_probit(x: DesignMatrix, t, selected) -> ProbitFit:
    """Probit maximum likelihood on the intercept plus the selected columns."""
    t = _check_binary(x, t)
    columns = _check_selected(x, selected)
    keep = [0] + columns
    design = x.values[:, keep]
    sign = 2.0 * t - 1.0
    n = x.n

    def partial(beta):
        coefficients = np.zeros(x.p)
        coefficients[keep] = beta
        return ProbitFit(coefficients, columns, 0.0, False)

    beta = np.zeros(len(keep))
    beta[0] = _intercept_only_probit(t)
    loglik = float(np.sum(special.log_ndtr(sign * (design @ beta))))
    for _ in range(MAX_NEWTON_STEPS):
        eta = design @ beta
        if len(keep) > 1 and np.all(sign * eta > 0.0):
            raise ConvergenceError(
                "Probit refit does not converge: the selected columns separate "
                "the treatment classes perfectly",
                partial=partial(beta),
            )
        gradient, curvature = _probit_working(sign, eta)
        score = design.T @ gradient
        if np.linalg.norm(score) / n < SCORE_TOLERANCE:
            coefficients = np.zeros(x.p)
            coefficients[keep] = beta
            return ProbitFit(coefficients, columns, 0.0)
        information = design.T @ (design * curvature[:, None])
        try:
            direction = linalg.solve(information, score, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            logger.warning(
                "Probit information matrix is singular; using minimum-norm step"
            )
            direction = linalg.lstsq(information, score)[0]
        step = 1.0
        while True:
            trial = beta + step * direction
            value = float(np.sum(special.log_ndtr(sign * (design @ trial))))
            if value >= loglik - 1e-12 * abs(loglik) or step < 1e-8:
                break
            step /= 2.0
        beta, loglik = trial, value
        if np.linalg.norm(beta) > COEFFICIENT_CAP:
            raise ConvergenceError(
                f"Probit refit diverged: coefficient norm exceeds {COEFFICIENT_CAP:g} "
                f"(quasi-separation)",
                partial=partial(beta),
            )
    raise ConvergenceError(
        f"Probit refit did not converge in {MAX_NEWTON_STEPS} Newton steps",
        partial=partial(beta),
    )


# Nuisance bundle


@dataclass(frozen=True)
class NuisanceOptions:
    arm: int = 1
    outcome_penalty: Penalty = "auto"
    propensity_penalty: Penalty = "auto"
    strategy: str = "refit"
    trim_floor: float = 0.01
    cv_folds: int = 10
    fold_seed: int = 0
    plugin_constant: float = 1.1

    def __post_init__(self):
        if self.arm not in (0, 1):
            raise ConfigError(f"Arm must be 0 or 1, got {self.arm}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"Strategy must be one of {', '.join(STRATEGIES)}, "
                f"got '{self.strategy}'"
            )
        for name in ("outcome_penalty", "propensity_penalty"):
            try:
                _check_penalty(getattr(self, name))
            except (ContractError, TypeError, ValueError) as e:
                raise ConfigError(f"Invalid {name.replace('_', ' ')}: {e}") from e
        if not 0.0 <= self.trim_floor < 0.5:
            raise ConfigError(f"Trim floor must lie in [0, 0.5), got {self.trim_floor}")
        if self.cv_folds < 2:
            raise ConfigError(
                f"Cross-validation needs at least 2 folds, got {self.cv_folds}"
            )
        if self.plugin_constant <= 0.0:
            raise ConfigError(
                f"Plug-in constant must be positive, got {self.plugin_constant}"
            )


@dataclass(frozen=True)
class NuisanceFit:
    """
    Nuisance values for one arm evaluated on every row.

    `m_hat` is the outcome regression of the arm, `g_hat` the probit index of
    P(T=1|X) and `e_hat` the propensity of treatment. Rows use `arm_propensity`
    floored at `trim_floor` as inverse weights; the probit index stays untrimmed.
    """

    arm: int
    m_hat: np.ndarray
    e_hat: np.ndarray
    g_hat: Optional[np.ndarray] = None
    outcome: Optional[LinearFit] = None
    propensity: Optional[ProbitFit] = None
    outcome_selected: tuple = ()
    propensity_selected: tuple = ()
    trim_floor: float = 0.01
    treated_fraction: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "m_hat", _frozen(self.m_hat))
        object.__setattr__(self, "e_hat", _frozen(self.e_hat))
        if self.g_hat is not None:
            object.__setattr__(self, "g_hat", _frozen(self.g_hat))
        if self.m_hat.shape != self.e_hat.shape:
            raise ContractError("Outcome and propensity values must have equal length")

    @property
    def n(self):
        return self.m_hat.shape[0]

    @property
    def arm_index(self):
        if self.g_hat is None:
            raise ContractError("This nuisance fit carries no probit index")
        return self.g_hat if self.arm == 1 else -self.g_hat

    @property
    def arm_propensity(self):
        return self.e_hat if self.arm == 1 else 1.0 - self.e_hat

    @property
    def weight_propensity(self):
        return np.maximum(self.arm_propensity, self.trim_floor)


def _fit_outcome(design, y, options):
    lasso = lasso_linear(
        design,
        y,
        options.outcome_penalty,
        plugin_constant=options.plugin_constant,
        cv_folds=options.cv_folds,
        fold_seed=options.fold_seed,
    )
    if options.strategy == "lasso":
        return lasso
    return refit_linear(design, y, lasso.selected)


def _fit_propensity(design, t, options):
    lasso = lasso_probit(
        design,
        t,
        options.propensity_penalty,
        cv_folds=options.cv_folds,
        fold_seed=options.fold_seed,
    )
    if options.strategy == "lasso":
        return lasso
    return refit_probit(design, t, lasso.selected)


def fit_nuisance(
    x: DesignMatrix,
    t,
    y,
    options: NuisanceOptions,
    propensity: Optional[ProbitFit] = None,
) -> NuisanceFit:
    """
    Fit the outcome regression on the rows of `options.arm` and the probit
    propensity of treatment on all rows, then evaluate both on every row.

    An already fitted `propensity` is reused as is, so both arms of an
    analysis can share one treatment model.
    """
    design = (
        x
        if x.has_intercept
        else DesignMatrix.with_intercept(x.values, x.column_names)
    )
    t = _check_binary(design, t)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != design.n:
        raise DataError(f"Outcome has {y.shape[0]} values for {design.n} rows")
    rows = t == options.arm
    if not np.all(np.isfinite(y[rows])):
        raise DataError(f"Outcome is missing on rows with treatment {options.arm}")

    if propensity is None:
        propensity = _fit_propensity(design, t, options)
    outcome = _fit_outcome(design.rows(rows), y[rows], options)

    g_hat = propensity.index(design)
    fit = NuisanceFit(
        arm=options.arm,
        m_hat=outcome.fitted(design),
        e_hat=norm_cdf(g_hat),
        g_hat=g_hat,
        outcome=outcome,
        propensity=propensity,
        outcome_selected=tuple(design.column_names[j] for j in outcome.selected),
        propensity_selected=tuple(design.column_names[j] for j in propensity.selected),
        trim_floor=options.trim_floor,
        treated_fraction=float(t.mean()),
    )

    floored = int(np.sum(fit.arm_propensity[rows] < options.trim_floor))
    if floored:
        logger.warning(
            f"Arm {options.arm}: {floored} propensities below "
            f"{options.trim_floor:g} were floored for weighting"
        )
    logger.info(
        f"Arm {options.arm}: outcome model uses {len(fit.outcome_selected)} columns, "
        f"propensity model uses {len(fit.propensity_selected)} columns"
    )
    return fit


def nuisance_error(fit: NuisanceFit, m_true, e_true):
    """Mean squared errors of the fitted outcome regression and propensity."""
    m_true = np.asarray(m_true, dtype=float)
    e_true = np.asarray(e_true, dtype=float)
    return (
        float(np.mean((fit.m_hat - m_true) ** 2)),
        float(np.mean((fit.e_hat - e_true) ** 2)),
    )
