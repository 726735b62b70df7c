import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from robust_renyi.core import ParametricModel, QuadratureScheme, QuadratureSpec, Sample, get_config
from robust_renyi.core._errors import (
    DomainError,
    EmptySample,
    NoRoot,
    RenyiError,
    SingularS,
    UnsupportedAlpha,
    UnsupportedModel,
)
from robust_renyi.core.quadrature import adaptive_integral, hermite_rule, normal_expectation
from robust_renyi.core.solvers import bracket_uphill, central_jacobian, maximize_from, rtsafe
from robust_renyi.estimation import SolverOptions
from robust_renyi.models import NormalScale
from robust_renyi.pseudodistance import check_alpha


class TestConfig:
    def test_defaults(self):
        config = get_config()
        assert config.threads == 1
        assert config.beta_max == 2.0
        assert config.gh_nodes == 64
        assert config.exp_truncation == 40.0
        assert config.progress is False

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("ROBUST_RENYI_BETA_MAX", "1.0")
        get_config.cache_clear()
        assert get_config().beta_max == 1.0
        with pytest.raises(UnsupportedAlpha):
            check_alpha(1.5)

    def test_quadrature_defaults_follow_config(self, monkeypatch):
        monkeypatch.setenv("ROBUST_RENYI_GH_NODES", "32")
        get_config.cache_clear()
        assert QuadratureSpec.default().nodes == 32
        assert QuadratureSpec.default(nodes=20).nodes == 20

    def test_solver_defaults_follow_config(self, monkeypatch):
        assert SolverOptions().tol == 1e-9
        monkeypatch.setenv("ROBUST_RENYI_SOLVER_TOL", "1e-7")
        monkeypatch.setenv("ROBUST_RENYI_SOLVER_N_STARTS", "3")
        get_config.cache_clear()
        opts = SolverOptions()
        assert opts.tol == 1e-7
        assert opts.n_starts == 3
        assert opts.max_iter == 100
        assert SolverOptions(n_starts=8).n_starts == 8


class TestErrors:
    def test_codes_are_stable(self):
        assert DomainError.code == "domain-error"
        assert UnsupportedModel("x").to_dict() == {"error": "unsupported-model", "message": "x"}

    def test_builtin_bases(self):
        assert issubclass(DomainError, ValueError)
        assert issubclass(SingularS, np.linalg.LinAlgError)
        assert issubclass(NoRoot, RenyiError)


class TestSample:
    def test_weights_are_normalised(self):
        data = Sample(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 2.0]))
        assert_allclose(data.mass, [0.25, 0.25, 0.5])
        assert float(data.mean(data.points)) == pytest.approx(1.25)

    def test_unweighted_mass(self):
        data = Sample(np.array([3.0, 5.0]))
        assert_allclose(data.mass, [0.5, 0.5])
        assert data.n == 2

    def test_empty(self):
        with pytest.raises(EmptySample):
            Sample(np.array([]))

    def test_negative_weights(self):
        with pytest.raises(DomainError):
            Sample(np.array([1.0, 2.0]), np.array([1.0, -1.0]))


class TestRegistry:
    def test_from_kind(self):
        model = ParametricModel.from_kind("normal-scale", m=1.5)
        assert isinstance(model, NormalScale)
        assert model.m == 1.5

    def test_known_kinds(self):
        assert ParametricModel.kinds() == [
            "exponential-scale",
            "mvn-mean",
            "normal-location",
            "normal-scale",
        ]

    def test_unknown_kind(self):
        with pytest.raises(UnsupportedModel, match="unknown model"):
            ParametricModel.from_kind("cauchy")


class TestQuadrature:
    def test_hermite_weights_sum_to_one(self):
        _, w = hermite_rule(64)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)

    def test_normal_moments(self, quad):
        moments = normal_expectation(
            lambda x: np.stack([x, x**2, x**4], axis=-1), 1.0, 2.0, quad
        )
        assert_allclose(moments, [1.0, 5.0, 1.0 + 6 * 4 + 3 * 16], rtol=1e-12)

    def test_adaptive_integral(self, quad):
        value = adaptive_integral(lambda x: np.exp(-x), 0.0, 40.0, quad)
        assert float(value) == pytest.approx(1.0 - math.exp(-40.0), abs=1e-12)

    def test_too_few_hermite_nodes(self):
        with pytest.raises(ValidationError):
            QuadratureSpec(nodes=8)
        QuadratureSpec(scheme=QuadratureScheme.ADAPTIVE, nodes=8)

    def test_monte_carlo_check(self, normal_scale):
        spec = QuadratureSpec.default(scheme=QuadratureScheme.MONTE_CARLO_CHECK)
        second = normal_scale.expect(np.array([2.0]), lambda x: x**2, spec)
        assert float(second) == pytest.approx(4.0, rel=1e-2)


class TestSolvers:
    def test_rtsafe(self):
        root = rtsafe(lambda x: x * x - 2.0, 0.0, 2.0, df=lambda x: 2.0 * x)
        assert root.converged
        assert root.x == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_rtsafe_numeric_derivative(self):
        root = rtsafe(math.cos, 1.0, 2.0)
        assert root.x == pytest.approx(math.pi / 2, abs=1e-12)

    def test_rtsafe_no_sign_change(self):
        with pytest.raises(NoRoot):
            rtsafe(lambda x: x * x + 1.0, -1.0, 1.0)

    def test_maximize_from(self):
        result = maximize_from(
            lambda x: -2.0 * (x - 1.0), 3.0, -10.0, 10.0, step=0.1, xtol=1e-13, max_iter=100
        )
        assert result is not None
        assert result.x == pytest.approx(1.0, abs=1e-10)

    def test_bracket_hits_bound(self):
        assert bracket_uphill(lambda x: 1.0, 0.0, -1.0, 1.0, step=0.1) is None

    def test_central_jacobian(self):
        jac = central_jacobian(lambda x: np.array([x[0] ** 2, x[0] * x[1]]), np.array([1.0, 2.0]))
        assert_allclose(jac, [[2.0, 0.0], [2.0, 1.0]], atol=1e-8)
