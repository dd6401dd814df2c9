"""
Report emission.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a partial report. Emitted files carry no timestamps and
reruns with the same inputs produce identical bytes.
"""

__all__ = [
    "ate_grid_frame",
    "ate_summary",
    "bounds_frame",
    "bounds_summary",
    "interval_summary",
    "intervals_frame",
    "nuisance_summary",
    "plot_frame",
    "write_frame",
    "write_json",
    "write_text",
    "write_toml",
]

import json
import math
import os
import tempfile
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
import tomli_w

from hserrors import ConfigError

FLOAT_FORMAT = "%.10g"


def _atomic_write(path, data: bytes):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handle, temporary = tempfile.mkstemp(
            dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
        )
    except OSError as e:
        raise ConfigError(f"Cannot write {path}: {e}") from e
    try:
        with os.fdopen(handle, "wb") as f:
            f.write(data)
        os.replace(temporary, path)
    except OSError as e:
        Path(temporary).unlink(missing_ok=True)
        raise ConfigError(f"Cannot write {path}: {e}") from e
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    return path


def write_text(path, text):
    return _atomic_write(path, text.encode("utf-8"))


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path, payload):
    text = json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False)
    return write_text(path, text + "\n")


def write_toml(path, mapping):
    return write_text(path, tomli_w.dumps(mapping))


def write_frame(path, frame: pd.DataFrame):
    return write_text(
        path, frame.to_csv(index=False, lineterminator="\n", float_format=FLOAT_FORMAT)
    )


def intervals_frame(reports):
    """One row per target and rho: target, rho, point, ci_lo, ci_hi."""
    rows = [
        {
            "target": report.target.value,
            "rho": row.rho,
            "point": row.point,
            "ci_lo": row.ci_lower,
            "ci_hi": row.ci_upper,
        }
        for report in reports
        for row in report.per_rho
    ]
    return pd.DataFrame(rows, columns=["target", "rho", "point", "ci_lo", "ci_hi"])


def plot_frame(reports):
    """Point, interval, unconfounded interval and uncertainty band per target."""
    rows = []
    for report in reports:
        unconfounded_lo, unconfounded_point, unconfounded_hi = report.unconfounded
        for row in report.per_rho:
            rows.append(
                {
                    "target": report.target.value,
                    "rho": row.rho,
                    "point": row.point,
                    "ci_lo": row.ci_lower,
                    "ci_hi": row.ci_upper,
                    "rho0_point": unconfounded_point,
                    "rho0_ci_lo": unconfounded_lo,
                    "rho0_ci_hi": unconfounded_hi,
                    "ui_lo": report.ui_lower,
                    "ui_hi": report.ui_upper,
                }
            )
    return pd.DataFrame(
        rows,
        columns=[
            "target",
            "rho",
            "point",
            "ci_lo",
            "ci_hi",
            "rho0_point",
            "rho0_ci_lo",
            "rho0_ci_hi",
            "ui_lo",
            "ui_hi",
        ],
    )


def ate_grid_frame(report):
    rho1, rho0 = np.meshgrid(report.rho1, report.rho0, indexing="ij")
    points = report.points.ravel()
    return pd.DataFrame(
        {
            "rho1": rho1.ravel(),
            "rho0": rho0.ravel(),
            "point": points,
            "ci_lo": points - report.half_width,
            "ci_hi": points + report.half_width,
        }
    )


def bounds_frame(bounds):
    return pd.DataFrame(
        {
            "rho": bounds.grid,
            "mean_y1_given_t0": bounds.middle1,
            "mean_y0_given_t1": bounds.middle0,
            "treated_mean": np.full(len(bounds.grid), bounds.treated_mean),
            "control_mean": np.full(len(bounds.grid), bounds.control_mean),
        }
    )


def nuisance_summary(fit):
    summary = {
        "arm": fit.arm,
        "outcome_columns": list(fit.outcome_selected),
        "propensity_columns": list(fit.propensity_selected),
        "treated_fraction": fit.treated_fraction,
        "trim_floor": fit.trim_floor,
        "floored_rows": int(np.sum(fit.arm_propensity < fit.trim_floor)),
    }
    if fit.outcome is not None:
        summary["outcome_penalty"] = fit.outcome.penalty
    if fit.propensity is not None:
        summary["propensity_penalty"] = fit.propensity.penalty
    return summary


def interval_summary(report, aipw=None):
    lower, point, upper = report.unconfounded
    summary = {
        "target": report.target,
        "estimate": report.estimate,
        "sigma": report.sigma_mode,
        "alpha": report.alpha,
        "rho_min": report.per_rho[0].rho,
        "rho_max": report.per_rho[-1].rho,
        "unconfounded": {"ci_lo": lower, "point": point, "ci_hi": upper},
        "uncertainty_interval": {"lo": report.ui_lower, "hi": report.ui_upper},
        "invalid_rho": list(report.invalid_rho),
    }
    if aipw is not None:
        summary["v_hat"] = aipw.v_hat
        summary["n"] = aipw.n
        summary["n_treated"] = aipw.n_t
    return summary


def ate_summary(report):
    lower, point, upper = report.unconfounded
    return {
        "target": "ate",
        "estimate": report.estimate,
        "v_hat": report.v_hat,
        "n": report.n,
        "unconfounded": {"ci_lo": lower, "point": point, "ci_hi": upper},
        "point_range": {"lo": report.point_min, "hi": report.point_max},
        "uncertainty_interval": {"lo": report.ui_lower, "hi": report.ui_upper},
        "rho1_range": [float(report.rho1[0]), float(report.rho1[-1])],
        "rho0_range": [float(report.rho0[0]), float(report.rho0[-1])],
    }


def bounds_summary(bounds):
    def span(found):
        return None if found is None else {"lo": found[0], "hi": found[1]}

    return {
        "treated_mean": bounds.treated_mean,
        "control_mean": bounds.control_mean,
        "grid": {
            "lo": bounds.grid[0],
            "hi": bounds.grid[-1],
            "points": len(bounds.grid),
        },
        "rho1": span(bounds.rho1),
        "rho0": span(bounds.rho0),
    }
