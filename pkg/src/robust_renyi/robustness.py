"""Influence functions, gross error sensitivity and B-robustness of min R_alpha estimators."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, optimize

from .asymptotics import are
from .core import FloatArray, ParametricModel, QuadratureSpec, Sample, get_config, logger
from .core._errors import DomainError, SingularMAlpha, UnsupportedModel
from .estimation import SolverOptions, fit_min_r_alpha
from .pseudodistance import check_alpha

MALPHA_COND_LIMIT = 1e12
GES_GRID_POINTS = 4001
GES_GRID_HALFWIDTH = 12.0


@dataclass(frozen=True)
class MAlphaMatrix:
    M_alpha: FloatArray


@dataclass(frozen=True)
class RobustnessReport:
    alpha: float
    if_values: list[tuple[float, float]]
    ges: float
    are: float
    most_brobust: tuple[float, float] | None = None


def _single(model: ParametricModel, x: ArrayLike) -> bool:
    return np.ndim(x) == (0 if model.obs_dim == 1 else 1)


def m_alpha(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
) -> MAlphaMatrix:
    """∫p^(alpha+1) (s - c)(s - c)^T dλ, taken as an expectation under P_theta."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    c = model.centering(th, a)

    def integrand(x: FloatArray) -> FloatArray:
        centred = model.score(th, x) - c
        weight = np.exp(a * model.log_density(th, x))
        return weight[:, None, None] * centred[:, :, None] * centred[:, None, :]

    matrix = np.atleast_2d(model.expect(th, integrand, quad or QuadratureSpec.default()))
    return MAlphaMatrix(0.5 * (matrix + matrix.T))


def influence_general(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    x: ArrayLike,
    quad: QuadratureSpec | None = None,
) -> FloatArray:
    """M_alpha^-1 [p^(alpha-1) p_dot - c_alpha p^alpha](x) with M_alpha by quadrature."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    points = model.check_points(x)
    matrix = m_alpha(model, th, a, quad).M_alpha
    if not np.isfinite(np.linalg.cond(matrix)) or np.linalg.cond(matrix) > MALPHA_COND_LIMIT:
        raise SingularMAlpha(f"{model.kind}: M_alpha is numerically singular at {th}")
    rhs = np.exp(a * model.log_density(th, points))[:, None] * (
        model.score(th, points) - model.centering(th, a)
    )
    try:
        values = linalg.solve(matrix, rhs.T, assume_a="pos").T
    except linalg.LinAlgError as e:
        raise SingularMAlpha(f"{model.kind}: M_alpha is not positive definite") from e
    return values[0] if _single(model, x) else values


def influence_closed(
    model: ParametricModel, theta: ArrayLike, alpha: float, x: ArrayLike
) -> FloatArray:
    """The closed-form influence functions of the four built-in families."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    points = model.check_points(x)
    match model.kind:
        case "normal-scale":
            sigma = th[0]
            z = (points - model.m) / sigma  # type: ignore[attr-defined]
            values = (
                sigma * (a + 1) ** 2.5 / 2 * (z * z - 1 / (a + 1)) * np.exp(-a * z * z / 2)
            )[:, None]
        case "exponential-scale":
            t = th[0]
            values = (t * (a + 1) ** 3 * (points / t - 1 / (a + 1)) * np.exp(-a * points / t))[
                :, None
            ]
        case "normal-location":
            sigma = model.sigma  # type: ignore[attr-defined]
            diff = points - th[0]
            values = ((a + 1) ** 1.5 * diff * np.exp(-a * (diff / sigma) ** 2 / 2))[:, None]
        case "mvn-mean":
            diff = points - th
            q = np.einsum("ij,jk,ik->i", diff, model.V_inv, diff)  # type: ignore[attr-defined]
            values = (a + 1) ** ((model.theta_dim + 2) / 2) * diff * np.exp(-a * q / 2)[:, None]
        case _:
            raise UnsupportedModel(f"no closed-form influence function for {model.kind}")
    return values[0] if _single(model, x) else values


def ges(model: ParametricModel, theta: ArrayLike, alpha: float) -> float:
    """Gross error sensitivity from the closed forms; +inf at alpha = 0."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    if a == 0.0:
        logger.debug(f"{model.kind}: score is unbounded at alpha = 0, GES = inf")
        return math.inf
    match model.kind:
        case "normal-scale":
            sigma = th[0]
            return max(
                sigma * (a + 1) ** 1.5 / 2,
                sigma * (a + 1) ** 2.5 / a * math.exp(-(3 * a + 2) / (2 * (a + 1))),
            )
        case "exponential-scale":
            return th[0] * (a + 1) ** 3 / a * math.exp(-(2 * a + 1) / (a + 1))
        case "normal-location":
            return (a + 1) ** 1.5 * model.sigma / math.sqrt(a) * math.exp(-0.5)  # type: ignore[attr-defined]
        case "mvn-mean":
            lam_max = float(np.max(np.linalg.eigvalsh(model.V)))  # type: ignore[attr-defined]
            return (a + 1) ** ((model.theta_dim + 2) / 2) * math.sqrt(lam_max / a) * math.exp(-0.5)
        case _:
            raise UnsupportedModel(f"no closed-form gross error sensitivity for {model.kind}")


def _if_norm(model: ParametricModel, th: FloatArray, a: float, x: FloatArray) -> FloatArray:
    return np.linalg.norm(np.atleast_2d(influence_closed(model, th, a, x)), axis=-1)


def ges_numeric(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    grid: ArrayLike | None = None,
) -> float:
    """sup_x ||IF(x)|| over a dense grid refined by bounded 1-D maximisation.

    The support endpoints are included; the influence functions vanish in the
    tails for alpha > 0, so the supremum is attained on the grid's span. For
    the multivariate mean the search runs along every eigenvector of V.
    """
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    if a == 0.0:
        return math.inf
    if model.obs_dim > 1:
        eigenvalues, vectors = np.linalg.eigh(model.V)  # type: ignore[attr-defined]
        radius = math.sqrt(float(np.max(eigenvalues)) / a)
        best = 0.0
        for direction in vectors.T:
            r = np.linspace(0.0, GES_GRID_HALFWIDTH * radius, GES_GRID_POINTS)
            pts = th + r[:, None] * direction
            best = max(best, float(np.max(_if_norm(model, th, a, pts))))
            result = optimize.minimize_scalar(
                lambda t, d=direction: -float(_if_norm(model, th, a, th + t * d)[0]),
                bounds=(0.0, GES_GRID_HALFWIDTH * radius),
                method="bounded",
                options={"xatol": 1e-12},
            )
            best = max(best, -float(result.fun))
        return best

    if grid is None:
        lo, hi = model.lebesgue_window(th, GES_GRID_HALFWIDTH)
        lo = max(lo, model.support[0])
        grid = np.linspace(lo, hi, GES_GRID_POINTS)
    xs = np.sort(np.asarray(grid, dtype=float))
    norms = _if_norm(model, th, a, xs)
    i = int(np.argmax(norms))
    best = float(norms[i])
    lo_i, hi_i = max(i - 1, 0), min(i + 1, xs.size - 1)
    if hi_i > lo_i:
        result = optimize.minimize_scalar(
            lambda t: -float(_if_norm(model, th, a, np.array([t]))[0]),
            bounds=(float(xs[lo_i]), float(xs[hi_i])),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(result.fun))
    return best


def most_brobust_alpha(
    model: ParametricModel,
    theta: ArrayLike,
    search_interval: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """The alpha minimising the gross error sensitivity, with that minimum."""
    lo, hi = search_interval or (1e-3, get_config().beta_max)
    if not 0.0 < lo < hi <= get_config().beta_max:
        raise DomainError(f"search interval must lie in (0, beta_max], got {(lo, hi)}")
    th = model.check_theta(theta)
    result = optimize.minimize_scalar(
        lambda a: ges(model, th, a),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-9},
    )
    return float(result.x), float(result.fun)


def psi_location(x: ArrayLike, m: float, sigma: float, alpha: float) -> FloatArray | float:
    """The redescending psi-function of the location estimator."""
    a = check_alpha(alpha)
    diff = np.asarray(x, dtype=float) - m
    factor = (
        a
        * (a + 1) ** (a / (2 * (a + 1)))
        * sigma ** (-(3 * a + 2) / (a + 1))
        * math.sqrt(2 * math.pi) ** (-a / (a + 1))
    )
    values = factor * diff * np.exp(-a / 2 * (diff / sigma) ** 2)
    return float(values) if np.ndim(values) == 0 else values


# --- Contamination ---


def contaminated_functional(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    x: ArrayLike,
    epsilon: float,
    quad: QuadratureSpec | None = None,
) -> FloatArray:
    """T((1 - eps) P_theta + eps delta_x), solving the estimating equation on quadrature nodes."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    th = model.check_theta(theta)
    nodes, weights = model.nodes(th, quad or QuadratureSpec.default())
    atom = model.check_points(x)
    mixture = Sample(
        np.concatenate([nodes, atom], axis=0),
        np.concatenate([(1.0 - epsilon) * weights, np.full(atom.shape[0], epsilon)]),
    )
    opts = SolverOptions(tol=1e-11, max_iter=200, n_starts=1)
    return fit_min_r_alpha(model, mixture, alpha, opts).theta_hat


def influence_finite_difference(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    x: ArrayLike,
    epsilon: float = 1e-4,
    quad: QuadratureSpec | None = None,
) -> FloatArray:
    """[T((1 - eps) P + eps delta_x) - T(P)] / eps with both functionals on the same nodes."""
    base = contaminated_functional(model, theta, alpha, x, 0.0, quad)
    bumped = contaminated_functional(model, theta, alpha, x, epsilon, quad)
    return (bumped - base) / epsilon


# --- Reports ---


def robustness_report(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    x_grid: Sequence[float],
    *,
    with_most_brobust: bool = False,
) -> RobustnessReport:
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    if model.theta_dim != 1:
        raise UnsupportedModel("robustness reports cover the univariate families")
    values = influence_closed(model, th, a, np.asarray(x_grid, dtype=float))[:, 0]
    return RobustnessReport(
        alpha=a,
        if_values=[(float(xi), float(v)) for xi, v in zip(x_grid, values, strict=True)],
        ges=ges(model, th, a),
        are=are(model, a),
        most_brobust=most_brobust_alpha(model, th) if with_most_brobust else None,
    )


def ges_curve(
    model: ParametricModel, theta: ArrayLike, alphas: Sequence[float]
) -> list[tuple[float, float]]:
    return [(float(a), ges(model, theta, a)) for a in alphas]
