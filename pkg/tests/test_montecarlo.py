import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pydantic import ValidationError

from robust_renyi import montecarlo
from robust_renyi.core import get_config
from robust_renyi.core._errors import DomainError, NoConvergence, TooFewReplicates
from robust_renyi.models import ContaminantKind, ContaminantSpec
from robust_renyi.montecarlo import (
    CI_REPLICATES,
    FULL_REPLICATES,
    EstimatorFamily,
    EstimatorSpec,
    StudyConfig,
    StudyReport,
    StudyRow,
    mc_standard_error,
    run_study,
    table_preset,
)


def small_study(**overrides) -> StudyConfig:
    fields = {
        "model": "normal-scale",
        "fixed": {"m": 0.0},
        "theta": [1.0],
        "n": 30,
        "n_replicates": 12,
        "contaminant": ContaminantSpec(
            kind=ContaminantKind.POINT_MASS, epsilon=0.1, location=10.0
        ),
        "estimators": [
            EstimatorSpec(family=EstimatorFamily.MLE),
            EstimatorSpec(family=EstimatorFamily.MIN_R, alphas=[0.25, 1.0]),
        ],
        "seed": 7,
    }
    return StudyConfig(**(fields | overrides))


def row(report: StudyReport, family: str, alpha: float) -> StudyRow:
    return next(r for r in report.rows if r.family == family and r.alpha == alpha)


def agrees(row: StudyRow, published: float, n_replicates: int) -> bool:
    """Within three combined standard errors of a 5000-replicate published mean."""
    tolerance = 3.0 * row.se_mean * math.sqrt(1.0 + n_replicates / 5000)
    return abs(row.mean_estimate - published) <= tolerance


class TestStandardError:
    def test_value(self):
        assert mc_standard_error([0.0, 2.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert mc_standard_error([0.0, 2.0]) == pytest.approx(0.70711, abs=1e-5)

    def test_constant(self):
        assert mc_standard_error(np.ones(10)) == 0.0

    def test_too_few(self):
        with pytest.raises(TooFewReplicates):
            mc_standard_error([1.0])


class TestConfig:
    def test_columns(self):
        assert small_study().columns() == [
            (EstimatorFamily.MLE, 0.0),
            (EstimatorFamily.MIN_R, 0.25),
            (EstimatorFamily.MIN_R, 1.0),
        ]

    def test_json_round_trip(self):
        config = small_study()
        assert StudyConfig.model_validate_json(config.model_dump_json()) == config

    def test_multivariate_rejected(self):
        with pytest.raises(ValidationError):
            small_study(model="mvn-mean", fixed={"V": [[1.0, 0.0], [0.0, 1.0]]}, theta=[0.0, 0.0])

    def test_power_divergence_needs_normal_scale(self):
        with pytest.raises(ValidationError):
            small_study(
                model="normal-location",
                fixed={"sigma": 1.0},
                theta=[0.0],
                estimators=[EstimatorSpec(family=EstimatorFamily.MIN_D, alphas=[0.5])],
            )

    def test_unknown_model(self):
        with pytest.raises(ValidationError):
            small_study(model="cauchy", fixed={})

    def test_bad_theta(self):
        with pytest.raises(ValidationError):
            small_study(theta=[-1.0])

    def test_bad_alpha(self):
        with pytest.raises(ValidationError):
            EstimatorSpec(family=EstimatorFamily.MIN_R, alphas=[-0.5])

    def test_sample_size(self):
        with pytest.raises(ValidationError):
            small_study(n=1)


class TestRunStudy:
    def test_exact_fitter(self):
        report = run_study(small_study(), fitter=lambda model, data, family, alpha: 1.0)
        assert [(r.family, r.alpha) for r in report.rows] == [
            ("mle", 0.0),
            ("minR", 0.25),
            ("minR", 1.0),
        ]
        for r in report.rows:
            assert r.mean_estimate == 1.0
            assert r.mse_hat == 0.0
            assert r.se_mean == 0.0
            assert r.n_failed == 0

    def test_failures_are_counted(self):
        def fitter(model, data, family, alpha):
            if family is EstimatorFamily.MLE:
                return math.nan
            if alpha == 1.0:
                raise NoConvergence("stub")
            return 2.0

        report = run_study(small_study(), fitter=fitter)
        assert row(report, "mle", 0.0).n_failed == 12
        assert math.isnan(row(report, "mle", 0.0).mean_estimate)
        assert row(report, "minR", 1.0).n_failed == 12
        middle = row(report, "minR", 0.25)
        assert middle.n_failed == 0
        assert middle.mse_hat == pytest.approx(1.0)

    def test_replicates_share_samples(self):
        seen: dict[float, list[float]] = {}

        def fitter(model, data, family, alpha):
            seen.setdefault(alpha, []).append(float(data.points.sum()))
            return 1.0

        run_study(small_study(), fitter=fitter)
        assert sorted(seen[0.25]) == sorted(seen[1.0]) == sorted(seen[0.0])

    def test_deterministic(self):
        first = run_study(small_study()).to_records()
        second = run_study(small_study()).to_records()
        assert first == second

    def test_seed_changes_result(self):
        first = run_study(small_study()).to_records()
        other = run_study(small_study(seed=8)).to_records()
        assert first != other

    def test_threads_do_not_change_result(self, monkeypatch):
        serial = run_study(small_study(), threads=1).to_records()
        monkeypatch.setenv("ROBUST_RENYI_THREADS", "4")
        get_config.cache_clear()
        parallel = run_study(small_study(), threads=4).to_records()
        assert parallel == serial

    def test_thread_request_is_capped_and_logged(self, monkeypatch, caplog):
        sizes = []

        class RecordingPool(ThreadPoolExecutor):
            def __init__(self, max_workers=None, **kwargs):
                sizes.append(max_workers)
                super().__init__(max_workers=max_workers, **kwargs)

        monkeypatch.setattr(montecarlo, "ThreadPoolExecutor", RecordingPool)
        with caplog.at_level(logging.WARNING, logger="robust-renyi"):
            run_study(small_study(n_replicates=3), threads=3)
        assert "ROBUST_RENYI_THREADS=1 caps the pool" in caplog.text
        monkeypatch.setenv("ROBUST_RENYI_THREADS", "4")
        get_config.cache_clear()
        run_study(small_study(n_replicates=3), threads=3)
        run_study(small_study(n_replicates=3))
        assert sizes == [1, 3, 4]

    def test_thread_count_must_be_positive(self):
        with pytest.raises(DomainError):
            run_study(small_study(n_replicates=3), threads=0)

    def test_robust_beats_mle_under_outliers(self):
        report = run_study(small_study(n_replicates=40))
        assert row(report, "minR", 1.0).mse_hat < row(report, "mle", 0.0).mse_hat

    def test_records(self):
        records = run_study(small_study(n_replicates=3)).to_records()
        assert list(records[0]) == [
            "family",
            "alpha",
            "mean_estimate",
            "mse_hat",
            "n_failed",
            "se_mean",
        ]


class TestPresets:
    def test_scale_table(self):
        config = table_preset(2, 0.1)
        assert config.model == "normal-scale"
        assert config.n == 100
        assert config.n_replicates == CI_REPLICATES == 2000
        assert config.seed == 42
        assert config.contaminant is not None
        assert config.contaminant.kind is ContaminantKind.MODEL_DISTRIBUTION
        assert config.contaminant.location == 2.0
        families = [e.family for e in config.estimators]
        assert EstimatorFamily.MIN_D in families

    def test_location_table(self):
        config = table_preset(6, 0.05)
        assert config.model == "normal-location"
        assert config.theta == [0.0]
        assert config.contaminant is not None
        assert config.contaminant.kind is ContaminantKind.POINT_MASS
        assert config.contaminant.location == 10.0
        assert EstimatorFamily.MIN_D not in [e.family for e in config.estimators]

    def test_full_replicates(self):
        assert table_preset(3, 0.1, n_replicates=FULL_REPLICATES).n_replicates == 5000

    def test_clean(self):
        assert table_preset(3, 0.0).contaminant is None

    def test_unknown_table(self):
        with pytest.raises(DomainError):
            table_preset(7, 0.1)


@pytest.mark.slow
class TestPublishedTables:
    N_REPLICATES = CI_REPLICATES
    ALPHAS = (0.1, 0.2, 0.25, 0.5, 1.0)

    def study(self, table: int, epsilon: float) -> StudyReport:
        return run_study(
            table_preset(table, epsilon, n_replicates=self.N_REPLICATES, alphas=self.ALPHAS)
        )

    def test_clean_scale(self):
        report = self.study(2, 0.0)
        mle = row(report, "mle", 0.0)
        assert agrees(mle, 0.99763, self.N_REPLICATES)
        assert mle.mse_hat == pytest.approx(0.00503, rel=0.15)

    def test_scale_under_shifted_normal(self):
        report = self.study(2, 0.1)
        assert agrees(row(report, "minR", 0.2), 1.15310, self.N_REPLICATES)
        means = [row(report, "mle", 0.0).mean_estimate] + [
            row(report, "minR", a).mean_estimate for a in (0.1, 0.25, 0.5, 1.0)
        ]
        assert means == sorted(means, reverse=True)

    def test_scale_under_point_mass(self):
        report = self.study(4, 0.05)
        assert row(report, "mle", 0.0).mean_estimate - 1.0 > 0.4
        assert agrees(row(report, "mle", 0.0), 2.43937, self.N_REPLICATES)
        assert abs(row(report, "minR", 0.2).mean_estimate - 0.99922) < 0.02

    def test_scale_under_wide_normal(self):
        report = self.study(3, 0.1)
        assert agrees(row(report, "mle", 0.0), 1.33251, self.N_REPLICATES)
        assert agrees(row(report, "minR", 0.2), 1.13522, self.N_REPLICATES)

    def test_location_under_shifted_normal(self):
        report = self.study(5, 0.1)
        assert agrees(row(report, "mle", 0.0), 0.20116, self.N_REPLICATES)
        assert agrees(row(report, "minR", 0.2), 0.15539, self.N_REPLICATES)

    def test_location_under_point_mass(self):
        report = self.study(6, 0.1)
        assert agrees(row(report, "minR", 0.1), 0.00999, self.N_REPLICATES)
