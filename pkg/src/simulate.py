"""
Monte Carlo coverage study.

Draws samples from a sparse high-dimensional probit selection model with
confounding between the outcome and treatment errors, fits the nuisance
models, and tabulates how often the bias-shifted confidence intervals
cover the true mean of Y(1).
"""

__all__ = [
    "CoverageRow",
    "CoverageTable",
    "DiagnosticRecord",
    "Estimator",
    "SimScenario",
    "SimulatedSample",
    "default_jobs",
    "expand_scenarios",
    "generate",
    "mills_moment",
    "nuisance_diagnostics",
    "run_coverage",
    "true_tau",
    "true_tau0",
]

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import repeat
from typing import Optional

import numpy as np
import pandas as pd
from scipy import linalg

from aipw import aipw_mean_y1
from glmfit import Dataset, DesignMatrix, NuisanceOptions, fit_nuisance, nuisance_error
from hserrors import ConfigError, HdsensError
from hslogger import logger
from mathfn import inv_mills, norm_cdf
from sensitivity import (
    BiasEstimate,
    bias_hat,
    confidence_interval,
    sigma_corrected,
    sigma_naive,
)

ORACLE_SEED = 8675309
ORACLE_DRAWS = 1_000_000
FAILURE_FLAG_SHARE = 0.02

_BETA_HEAD = 0.6 * np.array(
    [1, 1 / 2, 1 / 3, 1 / 4, 1 / 5, 1, 1 / 2, 1 / 3, 1 / 4, 1 / 5]
)
_GAMMA_HEAD = 0.3 * np.array([1, 1 / 2, 1 / 3, 1 / 4, 1 / 5, 1, 1, 1, 1, 1])


class Estimator(Enum):
    ORACLE_BIAS = "oracle"
    PLUGIN_BIAS = "plugin"
    CORRECTED_BIAS = "corrected"

    @property
    def label(self):
        return {
            Estimator.ORACLE_BIAS: "oracle bias",
            Estimator.PLUGIN_BIAS: "plug-in bias",
            Estimator.CORRECTED_BIAS: "corrected bias",
        }[self]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(estimator.value for estimator in cls)
            raise ConfigError(
                f"Unknown estimator '{value}'; expected one of {names}"
            ) from None


def _padded(head, p):
    vector = np.zeros(p)
    k = min(p, len(head))
    vector[:k] = head[:k]
    return vector


@dataclass(frozen=True)
class SimScenario:
    n: int
    rho: float
    n_reps: int = 500
    seed: int = 20230501
    p: Optional[int] = None
    beta: Optional[tuple] = None
    gamma: Optional[tuple] = None
    estimators: tuple = tuple(Estimator)
    alpha: float = 0.05
    strategy: str = "refit"
    outcome_penalty: object = "auto"
    propensity_penalty: object = "auto"
    plugin_constant: float = 1.1
    cv_folds: int = 10
    trim_floor: float = 0.01
    control: bool = False
    rho0: float = 0.0
    beta0: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError(f"Sample size must be at least 4, got {self.n}")
        p = self.n if self.p is None else int(self.p)
        if p < 1:
            raise ConfigError(f"Number of covariates must be positive, got {p}")
        if self.n_reps < 1:
            raise ConfigError(f"Replications must be at least 1, got {self.n_reps}")
        for name in ("rho", "rho0"):
            if not -1.0 < getattr(self, name) < 1.0:
                raise ConfigError(
                    f"{name} must lie in (-1, 1), got {getattr(self, name)}"
                )
        if not self.estimators:
            raise ConfigError("At least one estimator is required")
        object.__setattr__(self, "p", p)
        object.__setattr__(
            self, "estimators", tuple(Estimator.parse(e) for e in self.estimators)
        )
        heads = (("beta", _BETA_HEAD), ("gamma", _GAMMA_HEAD), ("beta0", _BETA_HEAD))
        for name, head in heads:
            value = getattr(self, name)
            if value is None:
                value = _padded(head, p)
            value = tuple(float(v) for v in value)
            if len(value) != p:
                raise ConfigError(f"{name} has {len(value)} entries for {p} covariates")
            object.__setattr__(self, name, value)
        self.nuisance_options(0)

    def nuisance_options(self, rep_index):
        return NuisanceOptions(
            arm=1,
            outcome_penalty=self.outcome_penalty,
            propensity_penalty=self.propensity_penalty,
            strategy=self.strategy,
            trim_floor=self.trim_floor,
            cv_folds=self.cv_folds,
            fold_seed=(self.seed + rep_index) % 2**32,
            plugin_constant=self.plugin_constant,
        )


@dataclass(frozen=True)
class SimulatedSample:
    data: Dataset
    g: np.ndarray
    m: np.ndarray
    e: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    y1: np.ndarray
    y0: Optional[np.ndarray] = None


def generate(scenario: SimScenario, rep_index: int) -> SimulatedSample:
    """
    One sample of the selection model.

    X is iid standard normal without an intercept column, T = 1{X gamma + eta > 0}
    and Y(1) = 2 + X beta - rho lambda(X gamma) + xi with corr(xi, eta) = rho.
    With `control`, Y(0) = X beta0 + rho0 lambda(-X gamma) + xi0 where
    corr(xi0, eta) = rho0, so that E(Y(0)|X, T=0) = X beta0.
    """
    seeds = np.random.SeedSequence([scenario.seed, rep_index])
    rng = np.random.Generator(np.random.Philox(seeds))
    n, p = scenario.n, scenario.p
    x = rng.standard_normal((n, p))
    covariance = np.array([[1.0, scenario.rho], [scenario.rho, 1.0]])
    errors = rng.standard_normal((n, 2)) @ linalg.cholesky(covariance, lower=True).T
    eta, xi = errors[:, 0], errors[:, 1]

    g = x @ np.asarray(scenario.gamma)
    m = 2.0 + x @ np.asarray(scenario.beta)
    t = (g + eta > 0.0).astype(float)
    y1 = m - scenario.rho * inv_mills(g) + xi

    y0 = None
    if scenario.control:
        noise = rng.standard_normal(n)
        xi0 = scenario.rho0 * eta + math.sqrt(1.0 - scenario.rho0**2) * noise
        y0 = x @ np.asarray(scenario.beta0) + scenario.rho0 * inv_mills(-g) + xi0
        y = np.where(t == 1.0, y1, y0)
    else:
        y = np.where(t == 1.0, y1, np.nan)

    design = DesignMatrix(x, tuple(f"x{j + 1}" for j in range(p)))
    return SimulatedSample(
        data=Dataset(design, t, y, label=f"{scenario.name or 'scenario'}#{rep_index}"),
        g=g,
        m=m,
        e=norm_cdf(g),
        eta=eta,
        xi=xi,
        y1=y1,
        y0=y0,
    )


@lru_cache(maxsize=None)
def mills_moment(scale: float) -> float:
    """Monte Carlo E(lambda(scale * Z)) for standard normal Z, fixed oracle seed."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(ORACLE_SEED)))
    return float(np.mean(inv_mills(scale * rng.standard_normal(ORACLE_DRAWS))))


def _gamma_norm(scenario):
    return float(np.linalg.norm(scenario.gamma))


def true_tau(scenario: SimScenario) -> float:
    """E(Y(1)) = 2 - rho E(lambda(X gamma)), with X gamma ~ N(0, |gamma|^2)."""
    if scenario.rho == 0.0:
        return 2.0
    return 2.0 - scenario.rho * mills_moment(_gamma_norm(scenario))


def true_tau0(scenario: SimScenario) -> float:
    """
    E(Y(0)) of the control extension.

    X gamma is symmetric, so lambda(-X gamma) has the same mean as lambda(X gamma).
    """
    if scenario.rho0 == 0.0:
        return 0.0
    return scenario.rho0 * mills_moment(_gamma_norm(scenario))


@dataclass(frozen=True)
class DiagnosticRecord:
    n: int
    rho: float
    rep: int
    m_mse: float
    e_mse: float
    rate: float


@dataclass(frozen=True)
class _RepOutcome:
    rep: int
    covered: dict
    width: float
    diagnostic: Optional[DiagnosticRecord]
    error: Optional[str] = None


def _diagnostic(scenario, rep, sample, fit):
    m_mse, e_mse = nuisance_error(fit, sample.m, sample.e)
    return DiagnosticRecord(
        scenario.n,
        scenario.rho,
        rep,
        m_mse,
        e_mse,
        math.sqrt(m_mse) * math.sqrt(e_mse) * math.sqrt(scenario.n),
    )


def _fit_replication(scenario, rep):
    sample = generate(scenario, rep)
    data = sample.data
    return sample, fit_nuisance(data.x, data.t, data.y, scenario.nuisance_options(rep))


def _failed(rep, error):
    return _RepOutcome(rep, {}, math.nan, None, f"{type(error).__name__}: {error}")


def _replicate(scenario, rep):
    try:
        sample, fit = _fit_replication(scenario, rep)
        data = sample.data
        result = aipw_mean_y1(data, fit)
        truth = true_tau(scenario)
        covered = {}
        width = 0.0
        for estimator in scenario.estimators:
            if estimator is Estimator.ORACLE_BIAS:
                oracle = mills_moment(_gamma_norm(scenario))
                bias = BiasEstimate(scenario.rho, 1.0, oracle, scenario.rho * oracle)
            elif estimator is Estimator.PLUGIN_BIAS:
                bias = bias_hat(fit, scenario.rho, sigma_naive(data, fit), "mean_y1")
            else:
                sigma = sigma_corrected(data, fit, scenario.rho)
                bias = bias_hat(fit, scenario.rho, sigma, "mean_y1", corrected=True)
            lower, _, upper = confidence_interval(result, bias, scenario.alpha)
            covered[estimator] = lower <= truth <= upper
            width = upper - lower
        return _RepOutcome(rep, covered, width, _diagnostic(scenario, rep, sample, fit))
    except HdsensError as e:
        return _failed(rep, e)


def _replicate_diagnostics(scenario, rep):
    try:
        sample, fit = _fit_replication(scenario, rep)
    except HdsensError as e:
        return _failed(rep, e)
    return _RepOutcome(rep, {}, math.nan, _diagnostic(scenario, rep, sample, fit))


def _split_failures(outcomes):
    failures = [outcome for outcome in outcomes if outcome.error is not None]
    for outcome in failures:
        logger.warning(f"Replication {outcome.rep} failed: {outcome.error}")
    return [outcome for outcome in outcomes if outcome.error is None], failures


def default_jobs():
    """Worker count from HDSENS_THREADS, 1 when unset or invalid."""
    value = os.environ.get("HDSENS_THREADS", "")
    if not value:
        return 1
    try:
        jobs = int(value)
    except ValueError:
        logger.warning(f"Ignoring invalid HDSENS_THREADS value '{value}'")
        return 1
    return max(1, jobs)


def _map_reps(function, scenario, jobs):
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    reps = range(scenario.n_reps)
    # per-replication fit messages below WARNING are dropped
    with logger.quiet():
        if jobs == 1 or scenario.n_reps == 1:
            return [function(scenario, rep) for rep in reps]
        chunk = max(1, scenario.n_reps // (4 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            # map preserves rep order whatever the completion order
            return list(pool.map(function, repeat(scenario), reps, chunksize=chunk))


@dataclass(frozen=True)
class CoverageRow:
    n: int
    rho: float
    estimator: Estimator
    coverage: float
    mean_width: float
    mc_se: float
    n_valid: int
    n_failed: int
    flagged: bool


@dataclass(frozen=True)
class CoverageTable:
    rows: tuple
    n_reps: int
    alpha: float = 0.05
    diagnostics: tuple = field(default=(), compare=False)

    COLUMNS = (
        "n",
        "rho",
        "estimator",
        "coverage",
        "mean_width",
        "mc_se",
        "n_valid",
        "n_failed",
        "flagged",
    )

    @classmethod
    def concat(cls, tables):
        tables = list(tables)
        if not tables:
            raise ConfigError("No coverage tables to combine")
        return cls(
            rows=tuple(row for table in tables for row in table.rows),
            n_reps=tables[0].n_reps,
            alpha=tables[0].alpha,
            diagnostics=tuple(d for table in tables for d in table.diagnostics),
        )

    def row(self, n, rho, estimator):
        estimator = Estimator.parse(estimator)
        for row in self.rows:
            if row.n == n and math.isclose(row.rho, rho) and row.estimator is estimator:
                return row
        raise KeyError((n, rho, estimator.value))

    def to_frame(self):
        return pd.DataFrame(
            [
                {
                    "n": row.n,
                    "rho": row.rho,
                    "estimator": row.estimator.value,
                    "coverage": row.coverage,
                    "mean_width": row.mean_width,
                    "mc_se": row.mc_se,
                    "n_valid": row.n_valid,
                    "n_failed": row.n_failed,
                    "flagged": row.flagged,
                }
                for row in self.rows
            ],
            columns=list(self.COLUMNS),
        )

    def diagnostics_frame(self):
        return pd.DataFrame(
            [vars(record) for record in self.diagnostics],
            columns=["n", "rho", "rep", "m_mse", "e_mse", "rate"],
        )

    def render(self):
        """Text table with a row per n and a block of rho columns per estimator."""
        sizes = sorted({row.n for row in self.rows})
        rhos = sorted({row.rho for row in self.rows}, reverse=True)
        estimators = [
            e for e in Estimator if any(row.estimator is e for row in self.rows)
        ]
        cell = 6
        corner = "n \\ rho"
        block = cell * len(rhos)
        lines = [
            f"Empirical coverage of {100 * (1 - self.alpha):g}% confidence intervals "
            f"({self.n_reps} replications)",
            "",
            f"{'estimator':>10} |"
            + "|".join(f"{e.label:^{block}}" for e in estimators),
            f"{corner:>10} |"
            + "|".join(
                "".join(f"{rho:>{cell}.2g}" for rho in rhos) for _ in estimators
            ),
            "-" * (12 + (block + 1) * len(estimators)),
        ]
        flagged = False
        for n in sizes:
            blocks = []
            for estimator in estimators:
                cells = []
                for rho in rhos:
                    try:
                        row = self.row(n, rho, estimator)
                    except KeyError:
                        cells.append(f"{'':>{cell}}")
                        continue
                    mark = "*" if row.flagged else ""
                    flagged = flagged or row.flagged
                    cells.append(f"{row.coverage:.2f}{mark}".rjust(cell))
                blocks.append("".join(cells))
            lines.append(f"{n:>10} |" + "|".join(blocks))
        if flagged:
            lines.append("")
            lines.append(f"* at least {FAILURE_FLAG_SHARE:.0%} of replications failed")
        return "\n".join(lines) + "\n"


def run_coverage(scenario: SimScenario, jobs=None) -> CoverageTable:
    """
    Coverage of the true mean of Y(1) over `scenario.n_reps` replications.

    Replications run in a process pool of `jobs` workers and are reduced in
    replication order. Failed fits are excluded and counted; a row is
    flagged when the failures reach FAILURE_FLAG_SHARE of the replications.
    """
    logger.info(
        f"Simulating n={scenario.n}, p={scenario.p}, rho={scenario.rho:g}, "
        f"{scenario.n_reps} replications"
    )
    outcomes = _map_reps(_replicate, scenario, jobs)
    valid, failures = _split_failures(outcomes)
    flagged = len(failures) >= FAILURE_FLAG_SHARE * scenario.n_reps
    if flagged:
        logger.warning(
            f"n={scenario.n}, rho={scenario.rho:g}: {len(failures)} of "
            f"{scenario.n_reps} replications failed"
        )

    rows = []
    mean_width = float(np.mean([o.width for o in valid])) if valid else math.nan
    for estimator in scenario.estimators:
        hits = [o.covered[estimator] for o in valid]
        coverage = float(np.mean(hits)) if hits else math.nan
        mc_se = math.sqrt(coverage * (1.0 - coverage) / len(hits)) if hits else math.nan
        rows.append(
            CoverageRow(
                n=scenario.n,
                rho=scenario.rho,
                estimator=estimator,
                coverage=coverage,
                mean_width=mean_width,
                mc_se=mc_se,
                n_valid=len(valid),
                n_failed=len(failures),
                flagged=flagged,
            )
        )
        logger.info(
            f"n={scenario.n}, rho={scenario.rho:g}, {estimator.label}: "
            f"coverage {coverage:.3f} (MC s.e. {mc_se:.3f})"
        )
    return CoverageTable(
        rows=tuple(rows),
        n_reps=scenario.n_reps,
        alpha=scenario.alpha,
        diagnostics=tuple(o.diagnostic for o in valid),
    )


def nuisance_diagnostics(scenario: SimScenario, jobs=None):
    """
    Per-replication mean squared nuisance errors and their product rate times
    sqrt(n). Replications whose fit fails are logged and left out.
    """
    valid, _ = _split_failures(_map_reps(_replicate_diagnostics, scenario, jobs))
    return [outcome.diagnostic for outcome in valid]


_SCENARIO_KEYS = {
    "name",
    "n",
    "p",
    "rho",
    "reps",
    "seed",
    "estimators",
    "alpha",
    "control",
    "rho0",
    "model",
}
_MODEL_KEYS = {
    "strategy": "strategy",
    "outcomePenalty": "outcome_penalty",
    "propensityPenalty": "propensity_penalty",
    "plugInConstant": "plugin_constant",
    "cvFolds": "cv_folds",
    "trimFloor": "trim_floor",
}


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def expand_scenarios(mapping, overrides=None):
    """
    Scenario grid from a scenario file mapping.

    `n` and `rho` may be single values or lists; `overrides` replaces
    top-level keys (for example a reduced `reps` for a smoke run).
    """
    mapping = dict(mapping)
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(mapping) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"Unknown scenario keys: {', '.join(sorted(unknown))}")
    if "n" not in mapping:
        raise ConfigError("Scenario file must set n")
    model = mapping.get("model", {})
    if not isinstance(model, dict):
        raise ConfigError("Scenario key 'model' must be a table")
    unknown = set(model) - set(_MODEL_KEYS)
    if unknown:
        raise ConfigError(f"Unknown scenario model keys: {', '.join(sorted(unknown))}")
    common = {_MODEL_KEYS[key]: value for key, value in model.items()}

    scenarios = []
    try:
        for n in _as_list(mapping["n"]):
            for rho in _as_list(mapping.get("rho", 0.0)):
                scenarios.append(
                    SimScenario(
                        n=int(n),
                        rho=float(rho),
                        n_reps=int(mapping.get("reps", 500)),
                        seed=int(mapping.get("seed", 20230501)),
                        p=mapping.get("p"),
                        estimators=tuple(mapping.get("estimators", tuple(Estimator))),
                        alpha=float(mapping.get("alpha", 0.05)),
                        control=bool(mapping.get("control", False)),
                        rho0=float(mapping.get("rho0", 0.0)),
                        name=str(mapping.get("name", "")),
                        **common,
                    )
                )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid scenario value: {e}") from e
    return scenarios
