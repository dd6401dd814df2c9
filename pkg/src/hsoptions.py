"""
Options and configuration parsing module for the application.

This module handles command-line argument parsing, configuration file loading,
and merging of options from both sources with proper validation. Every
resolved option records whether it came from the command line, the
configuration file or the defaults.
"""

__all__ = [
    "AnalysisConfig",
    "Options",
    "SimulateOptions",
    "parse_options",
    "parse_penalty",
]

import argparse
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from aipw import TargetParameter
from glmfit import STRATEGIES, NuisanceOptions
from hsconfig import hsconfig, initialize_config
from hserrors import ConfigError
from ingest import ColumnRoles, ExpansionSpec
from sensitivity import SensitivitySpec, SigmaMode, rho_grid
from version import __app_description__, __app_name__, __version__

LOG_FILE_NAME = f"{__app_name__}.log"


def parse_penalty(value, name="penalty"):
    """A nonnegative number, "inf", or "auto"."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text == "auto":
            return "auto"
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(
                f"{name} must be 'auto' or a number, got '{value}'"
            ) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be 'auto' or a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or value < 0.0:
        raise ConfigError(f"{name} must be nonnegative, got {value}")
    return value


def _penalty_text(value):
    if value == "auto":
        return value
    return "inf" if value == math.inf else value


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything the estimate and bounds commands need, fully resolved."""

    input_path: Path
    roles: ColumnRoles
    expansion: ExpansionSpec
    output_dir: Path
    strategy: str = "refit"
    outcome_penalty: object = "auto"
    propensity_penalty: object = "auto"
    cv_folds: int = 10
    plugin_constant: float = 1.1
    trim_floor: float = 0.01
    rho1: tuple = (0.0, 0.0)
    rho0: tuple = (0.0, 0.0)
    grid_size: int = 101
    sigma_mode: SigmaMode = SigmaMode.CORRECTED
    alpha: float = 0.05
    targets: tuple = (TargetParameter.ATE,)
    bounds_step: float = 0.01
    bounds_limit: float = 0.99
    bounds_sigma: SigmaMode = SigmaMode.CORRECTED
    seed: int = 20230501
    sources: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in self.expansion.power_interactions:
            if name not in self.roles.categorical + self.roles.binary:
                raise ConfigError(
                    f"powerInteractions names '{name}', which is not a categorical "
                    f"or binary column"
                )
        self.nuisance_options(1)
        self.sensitivity_spec(1)
        self.sensitivity_spec(0)
        rho_grid(self.bounds_limit, self.bounds_step)

    def nuisance_options(self, arm):
        return NuisanceOptions(
            arm=arm,
            outcome_penalty=self.outcome_penalty,
            propensity_penalty=self.propensity_penalty,
            strategy=self.strategy,
            trim_floor=self.trim_floor,
            cv_folds=self.cv_folds,
            fold_seed=self.seed,
            plugin_constant=self.plugin_constant,
        )

    def sensitivity_spec(self, arm):
        low, high = self.rho1 if arm == 1 else self.rho0
        return SensitivitySpec(low, high, self.grid_size, self.sigma_mode, self.alpha)

    def to_mapping(self):
        """Resolved settings in the layout of the configuration file."""
        return {
            "data": {
                "input": str(self.input_path),
                "treatment": self.roles.treatment,
                "outcome": self.roles.outcome,
                "numeric": list(self.roles.numeric),
                "categorical": list(self.roles.categorical),
                "binary": list(self.roles.binary),
            },
            "expansion": {
                "degree": self.expansion.degree,
                "interactions": self.expansion.interactions,
                "powerInteractions": list(self.expansion.power_interactions),
            },
            "model": {
                "strategy": self.strategy,
                "outcomePenalty": _penalty_text(self.outcome_penalty),
                "propensityPenalty": _penalty_text(self.propensity_penalty),
                "cvFolds": self.cv_folds,
                "plugInConstant": self.plugin_constant,
                "trimFloor": self.trim_floor,
            },
            "sensitivity": {
                "rho1": list(self.rho1),
                "rho0": list(self.rho0),
                "gridSize": self.grid_size,
                "sigma": self.sigma_mode.value,
                "alpha": self.alpha,
                "targets": [target.value for target in self.targets],
            },
            "bounds": {
                "step": self.bounds_step,
                "limit": self.bounds_limit,
                "sigma": self.bounds_sigma.value,
            },
            "output": {"directory": str(self.output_dir), "seed": self.seed},
        }


@dataclass(frozen=True)
class SimulateOptions:
    scenario_path: Path
    output_dir: Path
    reps: Optional[int] = None
    seed: Optional[int] = None
    jobs: Optional[int] = None


@dataclass
class Options:
    """Container for all parsed options and configuration values."""

    command: str
    analysis: Optional[AnalysisConfig]
    simulate: Optional[SimulateOptions]
    config_path: Optional[str]

    # Logging
    log_level: int
    log_file_path: str
    stdout: bool
    stdout_only: bool

    # Source tracking - maps option name to source
    sources: dict[str, str]

    @property
    def output_dir(self):
        return (self.analysis or self.simulate).output_dir


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c", "--config", type=str, help="Use configuration file path (TOML format)"
    )
    common.add_argument(
        "-o",
        "--output",
        type=str,
        help="Override output.directory - where reports are written",
    )
    common.add_argument(
        "-g",
        "--loglevel",
        type=int,
        choices=[10, 20, 30, 40, 50],
        help=(
            "Override log level "
            "(10=DEBUG, 20=INFO, 30=WARNING, 40=ERROR, 50=CRITICAL)"
        ),
    )
    common.add_argument(
        "-l",
        "--logfile",
        type=str,
        help="Override log file path (default: <output>/hdsens.log)",
    )
    common.add_argument(
        "-S",
        "--stdout",
        action="store_true",
        default=None,
        help="Send program output to console (stdout) as well as log file.",
    )
    common.add_argument(
        "-O",
        "--stdout-only",
        action="store_true",
        default=None,
        help="Send program output to stdout only, suppressing log file output.",
    )
    common.add_argument(
        "--seed", type=int, help="Override output.seed - fold and simulation seed"
    )
    return common


def _analysis_arguments() -> argparse.ArgumentParser:
    analysis = argparse.ArgumentParser(add_help=False)
    analysis.add_argument(
        "-i", "--input", type=str, help="Override data.input - CSV file to analyse"
    )
    analysis.add_argument(
        "--treatment", type=str, help="Override data.treatment - 0/1 column"
    )
    analysis.add_argument(
        "--outcome", type=str, help="Override data.outcome - outcome column"
    )
    analysis.add_argument(
        "--numeric", type=str, help="Override data.numeric - comma separated"
    )
    analysis.add_argument(
        "--categorical", type=str, help="Override data.categorical - comma separated"
    )
    analysis.add_argument(
        "--binary", type=str, help="Override data.binary - comma separated"
    )
    analysis.add_argument("--degree", type=int, help="Override expansion.degree (1-3)")
    analysis.add_argument(
        "--interactions", type=int, help="Override expansion.interactions (1-2)"
    )
    analysis.add_argument(
        "--strategy", choices=STRATEGIES, help="Override model.strategy"
    )
    analysis.add_argument(
        "--outcome-penalty",
        type=str,
        help="Override model.outcomePenalty ('auto' or a number)",
    )
    analysis.add_argument(
        "--propensity-penalty",
        type=str,
        help="Override model.propensityPenalty ('auto' or a number)",
    )
    analysis.add_argument("--cv-folds", type=int, help="Override model.cvFolds")
    analysis.add_argument("--trim-floor", type=float, help="Override model.trimFloor")
    return analysis


def _create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser."""
    parser = argparse.ArgumentParser(description=__app_description__, prog=__app_name__)
    parser.add_argument(
        "-v", "--version", action="version", version=f"%(prog)s {__version__}"
    )
    commands = parser.add_subparsers(dest="command", required=True)
    common = _common_arguments()
    analysis = _analysis_arguments()

    estimate = commands.add_parser(
        "estimate",
        parents=[common, analysis],
        help="AIPW estimates with confidence and uncertainty intervals over rho ranges",
    )
    estimate.add_argument(
        "--rho1",
        type=float,
        nargs=2,
        metavar=("MIN", "MAX"),
        help="Override sensitivity.rho1",
    )
    estimate.add_argument(
        "--rho0",
        type=float,
        nargs=2,
        metavar=("MIN", "MAX"),
        help="Override sensitivity.rho0",
    )
    estimate.add_argument("--grid-size", type=int, help="Override sensitivity.gridSize")
    estimate.add_argument(
        "--sigma",
        choices=[m.value for m in SigmaMode],
        help="Override sensitivity.sigma",
    )
    estimate.add_argument("--alpha", type=float, help="Override sensitivity.alpha")
    estimate.add_argument(
        "--targets", type=str, help="Override sensitivity.targets - comma separated"
    )

    bounds = commands.add_parser(
        "bounds",
        parents=[common, analysis],
        help="Rho ranges compatible with ordering constraints on the arm means",
    )
    bounds.add_argument("--step", type=float, help="Override bounds.step")
    bounds.add_argument("--limit", type=float, help="Override bounds.limit")
    bounds.add_argument(
        "--sigma",
        dest="bounds_sigma",
        choices=[m.value for m in SigmaMode],
        help="Override bounds.sigma",
    )

    simulate = commands.add_parser(
        "simulate",
        parents=[common],
        help="Monte Carlo coverage study from a scenario file",
    )
    simulate.add_argument("scenario", type=str, help="Scenario file (TOML format)")
    simulate.add_argument(
        "--reps", type=int, help="Override the scenario's replication count"
    )
    simulate.add_argument(
        "--jobs", type=int, help="Worker processes (default: HDSENS_THREADS or 1)"
    )
    return parser


class _Resolver:
    """Looks options up on the command line, then the config file, then defaults."""

    def __init__(self, args, config):
        self.args = args
        self.config = config
        self.sources = {}

    def get(self, name, attribute, key):
        value = getattr(self.args, attribute, None)
        if value is not None:
            self.sources[name] = "cli"
            return value
        self.sources[name] = "config" if self.config.loaded(key) else "default"
        return self.config.get(key)


def _names(value, name):
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
        return tuple(value)
    raise ConfigError(f"{name} must be a list of column names")


def _number(value, name, kind=float):
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    try:
        number = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if kind is int and number != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return number


def _rho_pair(value, name):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a pair [min, max]")
    return (_number(value[0], name), _number(value[1], name))


def _required_path(value, name):
    if not value:
        raise ConfigError(
            f"No {name} given; set it in the configuration file or on the command line"
        )
    return Path(value)


def _targets(value):
    names = _names(value, "sensitivity.targets")
    if not names:
        raise ConfigError("At least one target is required")
    return tuple(TargetParameter.parse(name) for name in names)


def _analysis_config(args, resolver) -> AnalysisConfig:
    get = resolver.get
    roles = ColumnRoles(
        treatment=get("treatment", "treatment", "data.treatment"),
        outcome=get("outcome", "outcome", "data.outcome"),
        numeric=_names(get("numeric", "numeric", "data.numeric"), "data.numeric"),
        categorical=_names(
            get("categorical", "categorical", "data.categorical"), "data.categorical"
        ),
        binary=_names(get("binary", "binary", "data.binary"), "data.binary"),
    )
    expansion = ExpansionSpec(
        degree=_number(
            get("degree", "degree", "expansion.degree"), "expansion.degree", int
        ),
        interactions=_number(
            get("interactions", "interactions", "expansion.interactions"),
            "expansion.interactions",
            int,
        ),
        power_interactions=_names(
            get(
                "power_interactions",
                "power_interactions",
                "expansion.powerInteractions",
            ),
            "expansion.powerInteractions",
        ),
    )
    return AnalysisConfig(
        input_path=_required_path(
            get("input_path", "input", "data.input"), "input file"
        ),
        roles=roles,
        expansion=expansion,
        output_dir=_required_path(
            get("output_dir", "output", "output.directory"), "output directory"
        ),
        strategy=str(get("strategy", "strategy", "model.strategy")),
        outcome_penalty=parse_penalty(
            get("outcome_penalty", "outcome_penalty", "model.outcomePenalty"),
            "model.outcomePenalty",
        ),
        propensity_penalty=parse_penalty(
            get("propensity_penalty", "propensity_penalty", "model.propensityPenalty"),
            "model.propensityPenalty",
        ),
        cv_folds=_number(
            get("cv_folds", "cv_folds", "model.cvFolds"), "model.cvFolds", int
        ),
        plugin_constant=_number(
            get("plugin_constant", "plugin_constant", "model.plugInConstant"),
            "model.plugInConstant",
        ),
        trim_floor=_number(
            get("trim_floor", "trim_floor", "model.trimFloor"), "model.trimFloor"
        ),
        rho1=_rho_pair(get("rho1", "rho1", "sensitivity.rho1"), "sensitivity.rho1"),
        rho0=_rho_pair(get("rho0", "rho0", "sensitivity.rho0"), "sensitivity.rho0"),
        grid_size=_number(
            get("grid_size", "grid_size", "sensitivity.gridSize"),
            "sensitivity.gridSize",
            int,
        ),
        sigma_mode=SigmaMode.parse(get("sigma_mode", "sigma", "sensitivity.sigma")),
        alpha=_number(get("alpha", "alpha", "sensitivity.alpha"), "sensitivity.alpha"),
        targets=_targets(get("targets", "targets", "sensitivity.targets")),
        bounds_step=_number(
            get("bounds_step", "step", "bounds.step"), "bounds.step"
        ),
        bounds_limit=_number(
            get("bounds_limit", "limit", "bounds.limit"), "bounds.limit"
        ),
        bounds_sigma=SigmaMode.parse(
            get("bounds_sigma", "bounds_sigma", "bounds.sigma")
        ),
        seed=_number(get("seed", "seed", "output.seed"), "output.seed", int),
        sources=resolver.sources,
    )


def _simulate_options(args, resolver) -> SimulateOptions:
    output = resolver.get("output_dir", "output", "output.directory")
    resolver.sources["scenario_path"] = "cli"
    for name in ("reps", "jobs", "seed"):
        given = getattr(args, name) is not None
        resolver.sources[name] = "cli" if given else "scenario"
    if args.reps is not None and args.reps < 1:
        raise ConfigError(f"--reps must be at least 1, got {args.reps}")
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
    return SimulateOptions(
        scenario_path=Path(args.scenario),
        output_dir=_required_path(output, "output directory"),
        reps=args.reps,
        seed=args.seed,
        jobs=args.jobs,
    )


def parse_options(argv=None) -> Options:
    """
    Parse command line arguments and merge with configuration file values.

    Returns:
        Options: Parsed and validated options object with source tracking
    """
    parser = _create_argument_parser()
    args = parser.parse_args(argv)

    # Always rebuild the config so a previous run's file never leaks in
    global hsconfig
    hsconfig = initialize_config(args.config)
    resolver = _Resolver(args, hsconfig)

    if args.command == "simulate":
        analysis = None
        simulate = _simulate_options(args, resolver)
        output_dir = simulate.output_dir
    else:
        analysis = _analysis_config(args, resolver)
        simulate = None
        output_dir = analysis.output_dir

    sources = resolver.sources

    # Log level
    if args.loglevel is not None:
        log_level = args.loglevel
        sources["log_level"] = "cli"
    elif hsconfig.loaded("logLevel"):
        log_level = _number(hsconfig.get("logLevel"), "logLevel", int)
        sources["log_level"] = "config"
    else:
        log_level = hsconfig.get("logLevel")
        sources["log_level"] = "default"

    # Log file path
    if args.logfile:
        log_file_path = args.logfile
        sources["log_file_path"] = "cli"
    else:
        log_file_path = str(output_dir / LOG_FILE_NAME)
        sources["log_file_path"] = "default"

    stdout = bool(args.stdout)
    sources["stdout"] = "cli" if args.stdout else "default"
    stdout_only = bool(args.stdout_only)
    sources["stdout_only"] = "cli" if args.stdout_only else "default"

    return Options(
        command=args.command,
        analysis=analysis,
        simulate=simulate,
        config_path=args.config,
        log_level=log_level,
        log_file_path=log_file_path,
        stdout=stdout,
        stdout_only=stdout_only,
        sources=sources,
    )
