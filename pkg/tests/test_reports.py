"""
Tests for report emission
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib  # type: ignore[no-redef]

import reports
from aipw import TargetParameter, aipw_mean_y1
from hserrors import ConfigError
from sensitivity import (
    SensitivitySpec,
    derive_rho_bounds,
    estimate_ate,
    rho_grid,
    uncertainty_interval,
)
from tests.test_helpers import make_dataset, make_nuisance_fit

T = [1, 1, 0, 0]
HALF = [0.5, 0.5, 0.5, 0.5]


@pytest.fixture
def data():
    return make_dataset(T, [4.0, 6.0, 1.0, 3.0])


@pytest.fixture
def fits():
    return (
        make_nuisance_fit(1, [3.0, 5.0, 3.0, 3.0], HALF, t=T),
        make_nuisance_fit(0, [2.0, 2.0, 0.0, 2.0], HALF, t=T),
    )


class TestWriters:
    """Test the report writers"""

    def test_json_is_sorted_and_nan_free(self, temp_dir):
        """Test JSON output is sorted and free of NaN"""
        path = Path(temp_dir) / "report.json"
        reports.write_json(
            path,
            {
                "b": np.float64("nan"),
                "a": np.arange(3),
                "target": TargetParameter.ATE,
                "where": Path("out"),
                "n": np.int64(4),
            },
        )
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        payload = json.loads(text)
        assert payload == {
            "a": [0, 1, 2],
            "b": None,
            "target": "ate",
            "where": "out",
            "n": 4,
        }

    def test_rewrites_are_byte_identical(self, temp_dir):
        """Test rewrites are byte identical"""
        path = Path(temp_dir) / "table.csv"
        frame = pd.DataFrame({"rho": [0.1, 0.2], "point": [1 / 3, 2 / 3]})
        reports.write_frame(path, frame)
        first = path.read_bytes()
        reports.write_frame(path, frame)
        assert path.read_bytes() == first
        assert first.decode().splitlines()[1] == "0.1,0.3333333333"

    def test_creates_directories_and_leaves_no_temporaries(self, temp_dir):
        """Test directories are created without leftover temporaries"""
        path = Path(temp_dir) / "nested" / "deeper" / "notes.txt"
        reports.write_text(path, "hello\n")
        assert path.read_text() == "hello\n"
        assert [p.name for p in path.parent.iterdir()] == ["notes.txt"]

    def test_toml_round_trip(self, temp_dir):
        """Test the TOML round trip"""
        path = Path(temp_dir) / "resolved.toml"
        reports.write_toml(path, {"model": {"cvFolds": 5, "outcomePenalty": "auto"}})
        with path.open("rb") as f:
            loaded = tomllib.load(f)
        assert loaded == {"model": {"cvFolds": 5, "outcomePenalty": "auto"}}

    def test_unwritable_location(self, temp_dir):
        """Test an unwritable location"""
        blocker = Path(temp_dir) / "file"
        blocker.write_text("x")
        with pytest.raises(ConfigError, match="Cannot write"):
            reports.write_text(blocker / "report.json", "{}")


class TestFrames:
    """Test the report frames"""

    def test_interval_and_plot_frames(self, data, fits):
        """Test the interval and plot frames"""
        fit1, _ = fits
        result = aipw_mean_y1(data, fit1)
        report = uncertainty_interval(
            data, fit1, result, SensitivitySpec(-0.1, 0.1, 3, "naive"), "mean_y1"
        )
        intervals = reports.intervals_frame([report])
        assert list(intervals.columns) == ["target", "rho", "point", "ci_lo", "ci_hi"]
        assert len(intervals) == 3
        assert set(intervals["target"]) == {"mean_y1"}

        plot = reports.plot_frame([report])
        assert list(plot.columns[-5:]) == [
            "rho0_point",
            "rho0_ci_lo",
            "rho0_ci_hi",
            "ui_lo",
            "ui_hi",
        ]
        assert plot["ui_lo"].nunique() == 1
        assert plot["rho0_point"].iloc[0] == pytest.approx(result.estimate)

        summary = reports.interval_summary(report, result)
        assert summary["rho_min"] == pytest.approx(-0.1)
        assert summary["n_treated"] == 2
        assert summary["uncertainty_interval"]["lo"] == report.ui_lower

    def test_ate_grid_frame(self, data, fits):
        """Test the effect grid frame"""
        fit1, fit0 = fits
        report = estimate_ate(
            data,
            fit1,
            fit0,
            SensitivitySpec(-0.1, 0.1, 3, "naive"),
            SensitivitySpec(0.0, 0.2, 2, "naive"),
        )
        frame = reports.ate_grid_frame(report)
        assert len(frame) == 6
        assert list(frame.columns) == ["rho1", "rho0", "point", "ci_lo", "ci_hi"]
        first = frame.iloc[0]
        assert (first["rho1"], first["rho0"]) == pytest.approx((-0.1, 0.0))
        assert first["point"] == pytest.approx(report.points[0, 0])
        summary = reports.ate_summary(report)
        assert summary["rho0_range"] == pytest.approx([0.0, 0.2])

    def test_bounds_frame(self, data, fits):
        """Test the bounds frame"""
        fit1, fit0 = fits
        bounds = derive_rho_bounds(data, fit1, fit0, rho_grid(0.5, 0.25), "naive")
        frame = reports.bounds_frame(bounds)
        assert list(frame.columns) == [
            "rho",
            "mean_y1_given_t0",
            "mean_y0_given_t1",
            "treated_mean",
            "control_mean",
        ]
        assert len(frame) == 5
        assert (frame["treated_mean"] == 5.0).all()
        summary = reports.bounds_summary(bounds)
        assert summary["grid"]["points"] == 5
        assert summary["rho1"]["hi"] == pytest.approx(0.5)

    def test_nuisance_summary(self, fits):
        """Test the nuisance summary"""
        fit1, _ = fits
        summary = reports.nuisance_summary(fit1)
        assert summary["arm"] == 1
        assert summary["floored_rows"] == 0
        assert "outcome_penalty" not in summary
