from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg

from .core import FloatArray, ParametricModel, QuadratureSpec
from .core._errors import DomainError, SingularS, UnsupportedModel
from .core.solvers import central_jacobian
from .pseudodistance import check_alpha

# Efficiency table rows, in print order.
ARE_ROWS: tuple[tuple[str, str, int | None], ...] = (
    ("Normal sigma", "normal-scale", None),
    ("Exponential", "exponential-scale", None),
    ("Normal m", "normal-location", None),
    ("Mean of N2", "mvn-mean", 2),
    ("Mean of N3", "mvn-mean", 3),
    ("Mean of N4", "mvn-mean", 4),
)
ARE_ALPHAS = (0.0, 0.02, 0.05, 0.1, 0.2, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class SandwichCov:
    """S = -E[d2h], M = E[dh dh^T] and V = S^-1 M S^-1 at one parameter point."""

    S: FloatArray
    M: FloatArray
    V: FloatArray


@dataclass(frozen=True)
class AreRow:
    label: str
    kind: str
    dim: int | None
    values: list[float]


def _h_gradient(
    model: ParametricModel, theta: FloatArray, a: float, x: FloatArray
) -> FloatArray:
    """dh/dtheta = alpha h (score - c_alpha), shape (n, theta_dim)."""
    log_h = a * model.log_density(theta, x) - a / (1.0 + a) * model.log_power_integral(
        theta, 1.0 + a
    )
    centred = model.score(theta, x) - model.centering(theta, a)
    return a * np.exp(log_h)[:, None] * centred


def sandwich(
    model: ParametricModel,
    theta0: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
) -> SandwichCov:
    """Asymptotic covariance of the min R_alpha estimator at theta0.

    M uses the analytic gradient of h; S is the central-difference Jacobian of
    E_theta0[dh/dtheta], symmetrised.
    """
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("the sandwich is built for alpha > 0; use fisher_information")
    th0 = model.check_theta(theta0)
    quad = quad or QuadratureSpec.default()

    def outer(x: FloatArray) -> FloatArray:
        g = _h_gradient(model, th0, a, x)
        return g[:, :, None] * g[:, None, :]

    M = np.atleast_2d(model.expect(th0, outer, quad))

    def mean_gradient(theta: FloatArray) -> FloatArray:
        return model.expect(th0, lambda x: _h_gradient(model, theta, a, x), quad)

    S = -central_jacobian(mean_gradient, th0)
    S = 0.5 * (S + S.T)
    M = 0.5 * (M + M.T)
    try:
        factor = linalg.cho_factor(S)
    except linalg.LinAlgError as e:
        raise SingularS(f"{model.kind}: S is not positive definite at theta={th0}") from e
    left = linalg.cho_solve(factor, M)
    V = linalg.cho_solve(factor, left.T).T
    return SandwichCov(S=S, M=M, V=0.5 * (V + V.T))


def sigma2_rhat(
    model: ParametricModel,
    theta0: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
) -> float:
    """Var_theta0 h(X, theta0), the asymptotic variance of sqrt(n) R_alpha-hat."""
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("sigma2 of R_alpha-hat is defined for alpha > 0")
    th0 = model.check_theta(theta0)
    quad = quad or QuadratureSpec.default()
    log_c = a / (1.0 + a) * model.log_power_integral(th0, 1.0 + a)

    def moments(x: FloatArray) -> FloatArray:
        h = np.exp(a * model.log_density(th0, x) - log_c)
        return np.stack([h, h * h], axis=-1)

    first, second = model.expect(th0, moments, quad)
    return max(float(second - first * first), 0.0)


def fisher_information(model: ParametricModel, theta: ArrayLike) -> FloatArray:
    return model.fisher_information(model.check_theta(theta))


def are(model_kind: str | ParametricModel, alpha: float, dim: int | None = None) -> float:
    """Closed-form asymptotic relative efficiency against the MLE."""
    if isinstance(model_kind, ParametricModel):
        dim = model_kind.theta_dim if model_kind.kind == "mvn-mean" else dim
        model_kind = model_kind.kind
    a = check_alpha(alpha)
    match model_kind:
        case "normal-scale":
            return 2.0 * (2 * a + 1) ** 2.5 / ((a + 1) ** 3 * (3 * a * a + 4 * a + 2))
        case "exponential-scale":
            return (2 * a + 1) ** 3 / ((a + 1) ** 4 * (2 * a * a + 2 * a + 1))
        case "normal-location":
            return (2 * a + 1) ** 1.5 / (a + 1) ** 3
        case "mvn-mean":
            if dim is None or dim < 1:
                raise DomainError("mvn-mean efficiency needs a positive dimension")
            return (math.sqrt(2 * a + 1) / (a + 1)) ** (dim + 2)
        case "regression":
            raise UnsupportedModel(
                "regression efficiency comes from regression_asymptotic_cov"
            )
        case _:
            raise UnsupportedModel(f"no efficiency formula for {model_kind!r}")


def are_table(
    alphas: Sequence[float] = ARE_ALPHAS,
    rows: Sequence[tuple[str, str, int | None]] = ARE_ROWS,
) -> list[AreRow]:
    return [
        AreRow(label, kind, dim, [are(kind, a, dim) for a in alphas])
        for label, kind, dim in rows
    ]


def efficiency_from_sandwich(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
) -> float:
    """tr(I^-1) / tr(V): the efficiency implied by the numeric sandwich."""
    th = model.check_theta(theta)
    cov = sandwich(model, th, alpha, quad).V
    inverse_fisher = np.linalg.inv(model.fisher_information(th))
    return float(np.trace(inverse_fisher) / np.trace(cov))
