import sys
import time

import reports
from aipw import TargetParameter, aipw_estimate
from glmfit import fit_nuisance
from hsconfig import load_scenario_file
from hserrors import EmptyBoundsError, HdsensError
from hslogger import logger
from hsoptions import parse_options
from ingest import ingest
from sensitivity import derive_rho_bounds, estimate_ate, rho_grid, uncertainty_interval
from simulate import CoverageTable, expand_scenarios, run_coverage
from version import __app_name__, describe_version

INTERNAL_ERROR_EXIT = 5


def _fit_arms(data, config):
    """Fit both arms; the control arm reuses the treated arm's propensity model."""
    fit1 = fit_nuisance(data.x, data.t, data.y, config.nuisance_options(1))
    fit0 = fit_nuisance(
        data.x, data.t, data.y, config.nuisance_options(0), propensity=fit1.propensity
    )
    return fit1, fit0


def _metadata(options, seed):
    return {
        "command": options.command,
        "version": describe_version(),
        "seed": seed,
        "sources": dict(sorted(options.sources.items())),
    }


def _data_summary(data):
    return {
        "file": data.label,
        "rows": data.n,
        "treated": data.n_treated,
        "control": data.n_control,
        "columns": data.x.p,
    }


def cmd_estimate(options):
    """AIPW estimates and sensitivity intervals for every configured target."""
    config = options.analysis
    data = ingest(config.input_path, config)
    fit1, fit0 = _fit_arms(data, config)
    fits = {1: fit1, 0: fit0}

    intervals = {}
    summaries = []
    ate = None
    for target in config.targets:
        if target is TargetParameter.ATE:
            ate = estimate_ate(
                data,
                fit1,
                fit0,
                config.sensitivity_spec(1),
                config.sensitivity_spec(0),
                config.alpha,
            )
            intervals.setdefault(TargetParameter.MEAN_Y1, ate.treated)
            intervals.setdefault(TargetParameter.MEAN_Y0, ate.control)
            summaries.append(reports.ate_summary(ate))
            continue
        fit = fits[target.arm]
        result = aipw_estimate(data, fit, target)
        report = uncertainty_interval(
            data, fit, result, config.sensitivity_spec(target.arm), target
        )
        intervals[target] = report
        summaries.append(reports.interval_summary(report, result))
        logger.info(
            f"{target.value}: estimate {report.estimate:.4g}, uncertainty interval "
            f"[{report.ui_lower:.4g}, {report.ui_upper:.4g}]"
        )

    ordered = [intervals[t] for t in TargetParameter if t in intervals]
    out = config.output_dir
    reports.write_frame(out / "intervals.csv", reports.intervals_frame(ordered))
    reports.write_frame(out / "plotdata.csv", reports.plot_frame(ordered))
    if ate is not None:
        reports.write_frame(out / "ategrid.csv", reports.ate_grid_frame(ate))
    reports.write_toml(out / "resolved_config.toml", config.to_mapping())
    payload = _metadata(options, config.seed)
    payload.update(
        {
            "config": config.to_mapping(),
            "data": _data_summary(data),
            "nuisance": [
                reports.nuisance_summary(fit1),
                reports.nuisance_summary(fit0),
            ],
            "targets": summaries,
        }
    )
    reports.write_json(out / "report.json", payload)
    logger.info(f"Reports written to {out}")
    return ordered, ate


def cmd_bounds(options):
    """
    Rho ranges consistent with the ordering of the arm means.

    The bounds files are written before an empty range is reported, so the
    curves stay available for inspection.
    """
    config = options.analysis
    data = ingest(config.input_path, config)
    fit1, fit0 = _fit_arms(data, config)
    grid = rho_grid(config.bounds_limit, config.bounds_step)
    bounds = derive_rho_bounds(data, fit1, fit0, grid, config.bounds_sigma)

    out = config.output_dir
    reports.write_frame(out / "boundsdata.csv", reports.bounds_frame(bounds))
    reports.write_toml(out / "resolved_config.toml", config.to_mapping())
    payload = _metadata(options, config.seed)
    payload.update(
        {
            "config": config.to_mapping(),
            "data": _data_summary(data),
            "nuisance": [
                reports.nuisance_summary(fit1),
                reports.nuisance_summary(fit0),
            ],
            "bounds": reports.bounds_summary(bounds),
        }
    )
    reports.write_json(out / "report.json", payload)
    logger.info(f"Reports written to {out}")

    empty = [name for name in ("rho1", "rho0") if getattr(bounds, name) is None]
    if empty:
        raise EmptyBoundsError(
            f"No value of {' or '.join(empty)} on the grid keeps the cross-arm means "
            f"between {bounds.treated_mean:.4g} and {bounds.control_mean:.4g}"
        )
    return bounds


def cmd_simulate(options):
    """Coverage table for every (n, rho) cell of a scenario file."""
    settings = options.simulate
    mapping = load_scenario_file(settings.scenario_path)
    scenarios = expand_scenarios(
        mapping, {"reps": settings.reps, "seed": settings.seed}
    )
    logger.info(f"Scenario {settings.scenario_path}: {len(scenarios)} cells")
    table = CoverageTable.concat(
        run_coverage(scenario, settings.jobs) for scenario in scenarios
    )

    out = settings.output_dir
    rendered = table.render()
    reports.write_frame(out / "coverage.csv", table.to_frame())
    reports.write_text(out / "coverage.txt", rendered)
    reports.write_frame(out / "diagnostics.csv", table.diagnostics_frame())
    payload = _metadata(options, scenarios[0].seed)
    payload.update(
        {
            "scenario": mapping,
            "overrides": {"reps": settings.reps, "seed": settings.seed},
            "cells": len(scenarios),
        }
    )
    reports.write_json(out / "report.json", payload)
    logger.block(rendered)
    return table


COMMANDS = {
    "estimate": cmd_estimate,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
}


def _option_value(options, name):
    holders = [options.simulate, options]
    if options.analysis is not None:
        analysis = options.analysis
        holders = [analysis, analysis.roles, analysis.expansion, options]
    for holder in holders:
        if holder is not None and hasattr(holder, name):
            return getattr(holder, name)
    return None


def _log_options(options):
    lines = [
        f"  {name}: {_option_value(options, name)} - {source}"
        for name, source in sorted(options.sources.items())
    ]
    logger.block("\n".join(["Options:", *lines]), logger.DEBUG)


def main(argv=None):
    # Record script start time for total runtime calculation
    script_start_time = time.perf_counter()

    try:
        options = parse_options(argv)
    except HdsensError as e:
        print(f"{__app_name__}: error: {e}", file=sys.stderr)
        return e.exit_code

    logger.setup(
        log_file_path=options.log_file_path,
        log_level=options.log_level,
        stdout_enabled=options.stdout,
        stdout_only=options.stdout_only,
    )

    logger.banner("BEGINNING RUN")
    python_version = (
        f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
    )
    logger.debug(f"Python {python_version}")
    logger.debug(f"{__app_name__} {describe_version()}: {options.command}")
    _log_options(options)

    try:
        COMMANDS[options.command](options)
        exit_code = 0
    except HdsensError as e:
        logger.critical(f"{type(e).__name__}: {e}")
        print(f"{__app_name__}: error: {e}", file=sys.stderr)
        exit_code = e.exit_code
    except Exception as e:
        logger.critical(f"Unexpected {type(e).__name__}: {e}")
        print(f"{__app_name__}: internal error: {e}", file=sys.stderr)
        exit_code = INTERNAL_ERROR_EXIT

    # Log total runtime
    total_runtime = time.perf_counter() - script_start_time
    logger.info(f"Total runtime: {total_runtime:.3f} seconds")

    logger.banner("ENDING RUN")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
