"""
Tests for the data-generating process and the coverage harness
"""

import math

import numpy as np
import pytest

import simulate
from glmfit import nuisance_error
from hserrors import ConfigError, ConvergenceError
from mathfn import inv_mills, norm_cdf
from simulate import (
    CoverageTable,
    Estimator,
    SimScenario,
    default_jobs,
    expand_scenarios,
    generate,
    mills_moment,
    nuisance_diagnostics,
    run_coverage,
    true_tau,
    true_tau0,
)
from tests.test_helpers import make_nuisance_fit


def quick_scenario(**overrides):
    settings = {
        "n": 120,
        "rho": 0.4,
        "n_reps": 4,
        "seed": 99,
        "p": 10,
        "outcome_penalty": 0.05,
        "propensity_penalty": 0.02,
    }
    settings.update(overrides)
    return SimScenario(**settings)


class TestScenario:
    """Test the simulation scenario"""

    def test_defaults_pad_coefficients(self):
        """Test defaults pad the coefficients"""
        scenario = SimScenario(n=50, rho=0.2)
        assert scenario.p == 50
        assert len(scenario.beta) == 50
        assert scenario.beta[0] == pytest.approx(0.6)
        assert scenario.beta[1] == pytest.approx(0.3)
        assert scenario.gamma[9] == pytest.approx(0.3)
        assert scenario.beta[10:] == (0.0,) * 40
        assert scenario.beta0 == scenario.beta
        assert scenario.estimators == tuple(Estimator)

    def test_short_covariate_count_truncates_heads(self):
        """Test a short covariate count truncates the heads"""
        scenario = SimScenario(n=50, rho=0.2, p=3)
        assert len(scenario.gamma) == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n": 3, "rho": 0.1},
            {"n": 50, "rho": 1.0},
            {"n": 50, "rho": 0.1, "rho0": -1.0},
            {"n": 50, "rho": 0.1, "n_reps": 0},
            {"n": 50, "rho": 0.1, "p": 0},
            {"n": 50, "rho": 0.1, "p": 2, "beta": (1.0,)},
            {"n": 50, "rho": 0.1, "estimators": ()},
            {"n": 50, "rho": 0.1, "estimators": ("bootstrap",)},
            {"n": 50, "rho": 0.1, "strategy": "ridge"},
        ],
    )
    def test_invalid(self, kwargs):
        """Test invalid scenario values"""
        with pytest.raises(ConfigError):
            SimScenario(**kwargs)

    def test_fold_seed_follows_replication(self):
        """Test the fold seed follows the replication"""
        scenario = SimScenario(n=50, rho=0.2, seed=10)
        assert scenario.nuisance_options(0).fold_seed == 10
        assert scenario.nuisance_options(7).fold_seed == 17
        assert scenario.nuisance_options(3).arm == 1

    def test_estimator_parse_and_label(self):
        """Test parsing and labelling estimators"""
        assert Estimator.parse("Plugin") is Estimator.PLUGIN_BIAS
        assert Estimator.CORRECTED_BIAS.label == "corrected bias"
        with pytest.raises(ConfigError):
            Estimator.parse("exact")


class TestGenerate:
    """Test generating samples"""

    def test_reproducible_per_replication(self):
        """Test each replication is reproducible"""
        scenario = quick_scenario()
        first = generate(scenario, 3)
        again = generate(scenario, 3)
        other = generate(scenario, 4)
        np.testing.assert_array_equal(first.data.x.values, again.data.x.values)
        np.testing.assert_array_equal(first.data.y, again.data.y)
        assert not np.array_equal(first.data.x.values, other.data.x.values)

    def test_layout(self):
        """Test the sample layout"""
        scenario = quick_scenario()
        sample = generate(scenario, 0)
        data = sample.data
        assert data.x.column_names[:2] == ("x1", "x2")
        assert not data.x.has_intercept
        assert (data.n, data.x.p) == (120, 10)
        np.testing.assert_array_equal(data.t, (sample.g + sample.eta > 0).astype(float))
        assert np.all(np.isnan(data.y[data.t == 0]))
        np.testing.assert_array_equal(data.y[data.t == 1], sample.y1[data.t == 1])
        expected = 2.0 + data.x.values @ np.array(scenario.beta)
        np.testing.assert_allclose(sample.m, expected)
        assert sample.y0 is None

    def test_error_correlation_and_selection(self):
        """Test the error correlation and the selection"""
        scenario = SimScenario(n=20000, rho=0.6, p=10, n_reps=1, seed=5)
        sample = generate(scenario, 0)
        assert np.corrcoef(sample.eta, sample.xi)[0, 1] == pytest.approx(0.6, abs=0.03)
        treated = sample.data.t == 1
        # E(Y(1) | X, T=1) = m, the outcome regression the estimators fit
        residual = sample.y1[treated] - sample.m[treated]
        assert np.mean(residual) == pytest.approx(0.0, abs=0.03)
        assert np.mean(sample.y1) == pytest.approx(true_tau(scenario), abs=0.05)

    def test_control_outcomes(self):
        """Test control outcomes"""
        scenario = SimScenario(
            n=20000, rho=0.3, p=10, n_reps=1, control=True, rho0=-0.4
        )
        sample = generate(scenario, 1)
        control = sample.data.t == 0
        assert np.all(np.isfinite(sample.data.y))
        np.testing.assert_array_equal(sample.data.y[control], sample.y0[control])
        x = sample.data.x.values
        resid = sample.y0[control] - x[control] @ np.array(scenario.beta0)
        assert np.mean(resid) == pytest.approx(0.0, abs=0.03)
        assert np.mean(sample.y0) == pytest.approx(true_tau0(scenario), abs=0.05)


class TestTruth:
    """Test the true effects"""

    def test_mills_moment_at_zero_scale(self):
        """Test the Mills moment at zero scale"""
        assert mills_moment(0.0) == pytest.approx(inv_mills(0.0))

    def test_mills_moment_exceeds_value_at_mean(self):
        """Test the Mills moment exceeds its value at the mean"""
        # lambda is convex
        assert mills_moment(1.0) > inv_mills(0.0)

    def test_true_tau(self):
        """Test the true tau"""
        scenario = SimScenario(n=50, rho=0.0)
        assert true_tau(scenario) == 2.0
        scenario = SimScenario(n=50, rho=0.5)
        norm = math.sqrt(sum(g * g for g in scenario.gamma))
        assert true_tau(scenario) == pytest.approx(2.0 - 0.5 * mills_moment(norm))
        assert true_tau0(scenario) == 0.0


class TestCoverage:
    """Test the coverage table"""

    def test_table_shape(self):
        """Test the table shape"""
        scenario = quick_scenario()
        table = run_coverage(scenario, jobs=1)
        assert table.n_reps == 4
        assert len(table.rows) == 3
        for row in table.rows:
            assert row.n_valid + row.n_failed == 4
            assert 0.0 <= row.coverage <= 1.0
            assert row.mean_width > 0
            assert not row.flagged
        assert len(table.diagnostics) == 4
        frame = table.to_frame()
        assert list(frame.columns) == list(CoverageTable.COLUMNS)
        assert list(frame["estimator"]) == ["oracle", "plugin", "corrected"]

    def test_bit_reproducible(self):
        """Test the table is bit reproducible"""
        scenario = quick_scenario(n_reps=3)
        first = run_coverage(scenario, jobs=1)
        second = run_coverage(scenario, jobs=1)
        assert first.rows == second.rows
        assert first.to_frame().equals(second.to_frame())

    def test_failures_are_counted_and_flagged(self, monkeypatch):
        """Test failures are counted and flagged"""
        def failing(*args, **kwargs):
            raise ConvergenceError("diverged")

        monkeypatch.setattr(simulate, "fit_nuisance", failing)
        table = run_coverage(quick_scenario(n_reps=2, estimators=("plugin",)), jobs=1)
        row = table.row(120, 0.4, "plugin")
        assert row.n_failed == 2
        assert row.n_valid == 0
        assert row.flagged
        assert math.isnan(row.coverage)
        assert "*" in table.render()

    def test_row_lookup(self):
        """Test looking up rows"""
        table = run_coverage(quick_scenario(n_reps=1, estimators=("oracle",)), jobs=1)
        assert table.row(120, 0.4, Estimator.ORACLE_BIAS).n_valid == 1
        with pytest.raises(KeyError):
            table.row(120, 0.4, "plugin")

    def test_concat_and_render(self):
        """Test concatenating and rendering tables"""
        tables = [
            run_coverage(
                quick_scenario(n_reps=1, rho=rho, estimators=("oracle", "plugin")),
                jobs=1,
            )
            for rho in (0.2, 0.6)
        ]
        table = CoverageTable.concat(tables)
        assert len(table.rows) == 4
        text = table.render()
        assert "oracle bias" in text
        assert "plug-in bias" in text
        assert "0.6" in text.splitlines()[3]
        assert text.endswith("\n")
        with pytest.raises(ConfigError):
            CoverageTable.concat([])


class TestDiagnostics:
    """Test the per-replication nuisance error records"""

    @staticmethod
    def oracle_fitter(scenario):
        def fit(x, t, y, options):
            g = x.values @ np.asarray(scenario.gamma)
            m = 2.0 + x.values @ np.asarray(scenario.beta)
            return make_nuisance_fit(1, m, norm_cdf(g), g_hat=g, t=t)

        return fit

    def test_records_follow_replication_order(self):
        """Test one record per replication with the product rate"""
        records = nuisance_diagnostics(quick_scenario(n_reps=2), jobs=1)
        assert [record.rep for record in records] == [0, 1]
        for record in records:
            assert record.rate == pytest.approx(
                math.sqrt(record.m_mse) * math.sqrt(record.e_mse) * math.sqrt(120)
            )

    def test_failed_replications_are_skipped(self, monkeypatch):
        """Test a failing fit drops its replication and keeps the rest"""
        scenario = quick_scenario(n_reps=4)
        fit_nuisance = simulate.fit_nuisance

        def failing_on_odd(x, t, y, options):
            if (options.fold_seed - scenario.seed) % 2 == 1:
                raise ConvergenceError("diverged")
            return fit_nuisance(x, t, y, options)

        messages = []
        monkeypatch.setattr(simulate, "fit_nuisance", failing_on_odd)
        monkeypatch.setattr("simulate.logger.warning", messages.append)
        records = nuisance_diagnostics(scenario, jobs=1)
        assert [record.rep for record in records] == [0, 2]
        assert sum("failed: ConvergenceError: diverged" in m for m in messages) == 2

    def test_oracle_nuisances_have_zero_error(self, monkeypatch):
        """Test the true nuisance functions give zero diagnostics"""
        scenario = quick_scenario(n_reps=3)
        monkeypatch.setattr(simulate, "fit_nuisance", self.oracle_fitter(scenario))
        for record in nuisance_diagnostics(scenario, jobs=1):
            assert record.m_mse == pytest.approx(0.0, abs=1e-20)
            assert record.e_mse == pytest.approx(0.0, abs=1e-20)
            assert record.rate == pytest.approx(0.0, abs=1e-9)

    def test_zero_outcome_model_error(self):
        """Test a zero outcome model misses by the second moment of the truth"""
        scenario = SimScenario(n=20000, rho=0.4, p=10, n_reps=1, seed=12)
        sample = generate(scenario, 0)
        fit = make_nuisance_fit(1, np.zeros(scenario.n), sample.e, t=sample.data.t)
        m_mse, e_mse = nuisance_error(fit, sample.m, sample.e)
        beta = np.asarray(scenario.beta)
        assert m_mse == pytest.approx(4.0 + beta @ beta, rel=0.03)
        assert e_mse == 0.0


class TestJobs:
    """Test the worker count"""

    def test_default_jobs(self, monkeypatch):
        """Test the default worker count"""
        monkeypatch.delenv("HDSENS_THREADS", raising=False)
        assert default_jobs() == 1
        monkeypatch.setenv("HDSENS_THREADS", "3")
        assert default_jobs() == 3
        monkeypatch.setenv("HDSENS_THREADS", "many")
        assert default_jobs() == 1
        monkeypatch.setenv("HDSENS_THREADS", "0")
        assert default_jobs() == 1


class TestExpandScenarios:
    """Test expanding scenario files"""

    def test_grid(self):
        """Test the scenario grid"""
        scenarios = expand_scenarios(
            {
                "n": [100, 200],
                "rho": [0.2, 0.4, 0.6],
                "reps": 10,
                "model": {"cvFolds": 4},
            }
        )
        assert len(scenarios) == 6
        head = [(s.n, s.rho) for s in scenarios[:3]]
        assert head == [(100, 0.2), (100, 0.4), (100, 0.6)]
        assert all(s.cv_folds == 4 and s.n_reps == 10 for s in scenarios)

    def test_scalar_values_and_overrides(self):
        """Test scalar values and overrides"""
        scenarios = expand_scenarios(
            {"n": 100, "rho": 0.3, "reps": 500, "seed": 1}, {"reps": 2, "seed": None}
        )
        assert len(scenarios) == 1
        assert scenarios[0].n_reps == 2
        assert scenarios[0].seed == 1

    def test_penalty_settings(self):
        """Test penalty settings"""
        (scenario,) = expand_scenarios(
            {"n": 100, "model": {"outcomePenalty": 0, "propensityPenalty": "auto"}}
        )
        assert scenario.outcome_penalty == 0
        assert scenario.propensity_penalty == "auto"
        assert scenario.rho == 0.0

    @pytest.mark.parametrize(
        "mapping",
        [
            {"rho": 0.2},
            {"n": 100, "depth": 3},
            {"n": 100, "model": {"lambda": 1}},
            {"n": 100, "model": 3},
            {"n": "many"},
        ],
    )
    def test_invalid(self, mapping):
        """Test invalid scenario files"""
        with pytest.raises(ConfigError):
            expand_scenarios(mapping)
