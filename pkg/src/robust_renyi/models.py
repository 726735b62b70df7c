"""Parametric families: scale and location normal, exponential, multivariate normal mean.

Every family is a :class:`~robust_renyi.core.ParametricModel` registered
under its ``kind``; the module-level functions below are the public entry
points used by the estimators and the CLI.
"""

from __future__ import annotations

import math
from abc import abstractmethod
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, stats

from .core import FloatArray, ParametricModel, QuadratureScheme, QuadratureSpec, Sample
from .core._errors import DomainError, UnsupportedModel
from .core.quadrature import (
    Integrand,
    adaptive_integral,
    density_weighted,
    exponential_nodes,
    monte_carlo_expectation,
    mvn_expectation,
    mvn_nodes,
    normal_expectation,
    normal_nodes,
)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MAD_CONSTANT = float(stats.norm.ppf(0.75))
MAX_MVN_DIM = 8


# --- Normal families ---


class _UnivariateNormal(ParametricModel):
    """Shared machinery for N(m, sigma) with one of (m, sigma) free."""

    @property
    def theta_dim(self) -> int:
        return 1

    @abstractmethod
    def loc_scale(self, theta: FloatArray) -> tuple[float, float]: ...

    def log_density(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        loc, scale = self.loc_scale(theta)
        z = (np.asarray(x, dtype=float) - loc) / scale
        return -0.5 * z * z - math.log(scale) - LOG_SQRT_2PI

    def log_power_integral(self, theta: FloatArray, k: float) -> float:
        _, scale = self.loc_scale(theta)
        return (1.0 - k) * (math.log(scale) + LOG_SQRT_2PI) - 0.5 * math.log(k)

    def expect(
        self, theta: FloatArray, g: Integrand, quad: QuadratureSpec
    ) -> FloatArray:
        loc, scale = self.loc_scale(theta)
        match quad.scheme:
            case QuadratureScheme.GAUSS_HERMITE:
                return normal_expectation(g, loc, scale, quad)
            case QuadratureScheme.ADAPTIVE:
                lo, hi = self.lebesgue_window(theta, quad.truncation)
                return adaptive_integral(
                    density_weighted(g, lambda x: self.density(theta, x)),
                    lo,
                    hi,
                    quad,
                    breakpoints=(loc,),
                )
            case QuadratureScheme.MONTE_CARLO_CHECK:
                return monte_carlo_expectation(
                    g, lambda rng, n: self.draw(theta, n, rng), quad
                )

    def nodes(
        self, theta: FloatArray, quad: QuadratureSpec
    ) -> tuple[FloatArray, FloatArray]:
        loc, scale = self.loc_scale(theta)
        return normal_nodes(loc, scale, quad)

    def lebesgue_window(self, theta: FloatArray, width: float) -> tuple[float, float]:
        loc, scale = self.loc_scale(theta)
        return (loc - width * scale, loc + width * scale)

    def draw(self, theta: FloatArray, n: int, rng: np.random.Generator) -> FloatArray:
        loc, scale = self.loc_scale(theta)
        return loc + scale * rng.standard_normal(n)

    def contaminant_draw(
        self, location: float, scale: float, n: int, rng: np.random.Generator
    ) -> FloatArray:
        return location + scale * rng.standard_normal(n)


class NormalScale(_UnivariateNormal):
    """N(m, sigma) with known mean m; theta = sigma."""

    kind = "normal-scale"
    is_scale = True

    def __init__(self, m: float = 0.0) -> None:
        self.m = float(m)

    def loc_scale(self, theta: FloatArray) -> tuple[float, float]:
        return self.m, float(theta[0])

    def score(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        sigma = float(theta[0])
        z = (np.asarray(x, dtype=float) - self.m) / sigma
        return ((z * z - 1.0) / sigma)[:, None]

    def fisher_information(self, theta: FloatArray) -> FloatArray:
        return np.array([[2.0 / theta[0] ** 2]])

    def centering(self, theta: FloatArray, alpha: float) -> FloatArray:
        return np.array([-alpha / ((1.0 + alpha) * theta[0])])

    def mle(self, points: FloatArray, weights: FloatArray | None = None) -> FloatArray:
        second_moment = float(np.average((points - self.m) ** 2, weights=weights))
        return np.array([math.sqrt(second_moment)])

    def robust_start(self, points: FloatArray) -> FloatArray:
        mad = float(np.median(np.abs(points - self.m))) / MAD_CONSTANT
        return np.array([mad]) if mad > 0.0 else self.mle(points)

    def scale_of(self, points: FloatArray) -> float:
        return float(self.robust_start(points)[0])

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "m": self.m}


class NormalLocation(_UnivariateNormal):
    """N(m, sigma) with known sigma; theta = m."""

    kind = "normal-location"

    def __init__(self, sigma: float = 1.0) -> None:
        if not sigma > 0.0:
            raise DomainError(f"normal-location needs sigma > 0, got {sigma}")
        self.sigma = float(sigma)

    def loc_scale(self, theta: FloatArray) -> tuple[float, float]:
        return float(theta[0]), self.sigma

    def score(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        return ((np.asarray(x, dtype=float) - theta[0]) / self.sigma**2)[:, None]

    def fisher_information(self, theta: FloatArray) -> FloatArray:
        return np.array([[1.0 / self.sigma**2]])

    def centering(self, theta: FloatArray, alpha: float) -> FloatArray:
        return np.zeros(1)

    def mle(self, points: FloatArray, weights: FloatArray | None = None) -> FloatArray:
        return np.array([float(np.average(points, weights=weights))])

    def robust_start(self, points: FloatArray) -> FloatArray:
        return np.array([float(np.median(points))])

    def scale_of(self, points: FloatArray) -> float:
        return self.sigma

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "sigma": self.sigma}


# --- Exponential ---


class ExponentialScale(ParametricModel):
    """Exponential with mean theta: p(x) = exp(-x/theta)/theta on x >= 0."""

    kind = "exponential-scale"
    is_scale = True

    @property
    def theta_dim(self) -> int:
        return 1

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def log_density(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        t = float(theta[0])
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.where(x >= 0.0, -math.log(t) - x / t, -np.inf)

    def score(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        t = float(theta[0])
        return ((np.asarray(x, dtype=float) - t) / t**2)[:, None]

    def fisher_information(self, theta: FloatArray) -> FloatArray:
        return np.array([[1.0 / theta[0] ** 2]])

    def log_power_integral(self, theta: FloatArray, k: float) -> float:
        return (1.0 - k) * math.log(theta[0]) - math.log(k)

    def centering(self, theta: FloatArray, alpha: float) -> FloatArray:
        return np.array([-alpha / ((1.0 + alpha) * theta[0])])

    def expect(
        self, theta: FloatArray, g: Integrand, quad: QuadratureSpec
    ) -> FloatArray:
        if quad.scheme is QuadratureScheme.MONTE_CARLO_CHECK:
            return monte_carlo_expectation(
                g, lambda rng, n: self.draw(theta, n, rng), quad
            )
        # Gauss-Hermite does not apply on the half-line
        lo, hi = self.lebesgue_window(theta, quad.truncation)
        return adaptive_integral(
            density_weighted(g, lambda x: self.density(theta, x)),
            lo,
            hi,
            quad,
            breakpoints=(float(theta[0]),),
        )

    def nodes(
        self, theta: FloatArray, quad: QuadratureSpec
    ) -> tuple[FloatArray, FloatArray]:
        return exponential_nodes(float(theta[0]), quad)

    def lebesgue_window(self, theta: FloatArray, width: float) -> tuple[float, float]:
        return (0.0, width * float(theta[0]))

    def draw(self, theta: FloatArray, n: int, rng: np.random.Generator) -> FloatArray:
        return rng.exponential(float(theta[0]), n)

    def contaminant_draw(
        self, location: float, scale: float, n: int, rng: np.random.Generator
    ) -> FloatArray:
        return location + rng.exponential(scale, n)

    def mle(self, points: FloatArray, weights: FloatArray | None = None) -> FloatArray:
        return np.array([float(np.average(points, weights=weights))])

    def robust_start(self, points: FloatArray) -> FloatArray:
        med = float(np.median(points)) / math.log(2.0)
        return np.array([med]) if med > 0.0 else self.mle(points)

    def scale_of(self, points: FloatArray) -> float:
        return float(self.robust_start(points)[0])


# --- Multivariate normal ---


class MvnMean(ParametricModel):
    """N_p(m, V) with known covariance V; theta = m."""

    kind = "mvn-mean"

    def __init__(self, V: ArrayLike) -> None:
        cov = np.atleast_2d(np.asarray(V, dtype=float))
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DomainError("mvn-mean needs a square covariance matrix")
        if cov.shape[0] > MAX_MVN_DIM:
            raise UnsupportedModel(
                f"mvn-mean supports dimension <= {MAX_MVN_DIM}, got {cov.shape[0]}"
            )
        if not np.allclose(cov, cov.T):
            raise DomainError("mvn-mean covariance must be symmetric")
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise DomainError("mvn-mean covariance must be positive definite") from e
        self.V = cov
        self.V_inv = linalg.cho_solve((self.chol, True), np.eye(cov.shape[0]))
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @property
    def theta_dim(self) -> int:
        return int(self.V.shape[0])

    @property
    def obs_dim(self) -> int:
        return self.theta_dim

    def log_density(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        diff = np.atleast_2d(x) - theta
        quad = np.einsum("ij,jk,ik->i", diff, self.V_inv, diff)
        return -0.5 * quad - 0.5 * self.log_det - self.theta_dim * LOG_SQRT_2PI

    def score(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        return (np.atleast_2d(x) - theta) @ self.V_inv

    def fisher_information(self, theta: FloatArray) -> FloatArray:
        return self.V_inv.copy()

    def log_power_integral(self, theta: FloatArray, k: float) -> float:
        p = self.theta_dim
        return (1.0 - k) * (p * LOG_SQRT_2PI + 0.5 * self.log_det) - 0.5 * p * math.log(k)

    def centering(self, theta: FloatArray, alpha: float) -> FloatArray:
        return np.zeros(self.theta_dim)

    def expect(
        self, theta: FloatArray, g: Integrand, quad: QuadratureSpec
    ) -> FloatArray:
        if quad.scheme is QuadratureScheme.MONTE_CARLO_CHECK:
            return monte_carlo_expectation(
                g, lambda rng, n: self.draw(theta, n, rng), quad
            )
        return mvn_expectation(g, theta, self.chol, quad)

    def nodes(
        self, theta: FloatArray, quad: QuadratureSpec
    ) -> tuple[FloatArray, FloatArray]:
        return mvn_nodes(theta, self.chol, quad)

    def lebesgue_window(self, theta: FloatArray, width: float) -> tuple[float, float]:
        raise UnsupportedModel("mvn-mean has no univariate integration window")

    def draw(self, theta: FloatArray, n: int, rng: np.random.Generator) -> FloatArray:
        return theta + rng.standard_normal((n, self.theta_dim)) @ self.chol.T

    def contaminant_draw(
        self, location: float, scale: float, n: int, rng: np.random.Generator
    ) -> FloatArray:
        return location + scale * rng.standard_normal((n, self.theta_dim)) @ self.chol.T

    def mle(self, points: FloatArray, weights: FloatArray | None = None) -> FloatArray:
        return np.average(points, axis=0, weights=weights)

    def robust_start(self, points: FloatArray) -> FloatArray:
        return np.median(points, axis=0)

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "V": self.V.tolist()}


# --- Contamination ---


class ContaminantKind(StrEnum):
    MODEL_DISTRIBUTION = "model-distribution"
    POINT_MASS = "point-mass"


class ContaminantSpec(BaseModel):
    """Replacement of a fraction of the sample by outliers.

    ``model-distribution`` draws from the model's own family placed at
    ``location`` with spread ``scale`` (e.g. N(2, 1) or N(0, 3) for the normal
    families); ``point-mass`` places every contaminated draw at ``location``.
    """

    model_config = ConfigDict(frozen=True)

    kind: ContaminantKind
    epsilon: float = Field(ge=0.0, lt=0.5)
    location: float = 0.0
    scale: float = Field(default=1.0, gt=0.0)

    def count(self, n: int) -> int:
        return int(math.floor(self.epsilon * n + 0.5))


# --- Operations ---


def _single(model: ParametricModel, x: ArrayLike) -> bool:
    return np.ndim(x) == (0 if model.obs_dim == 1 else 1)


def density(model: ParametricModel, theta: ArrayLike, x: ArrayLike) -> FloatArray | float:
    values = model.density(model.check_theta(theta), model.check_points(x))
    return float(values[0]) if _single(model, x) else values


def grad_theta_density(
    model: ParametricModel, theta: ArrayLike, x: ArrayLike
) -> FloatArray:
    """dp_theta(x)/dtheta, shape ``(theta_dim,)`` for one point or ``(n, theta_dim)``."""
    th = model.check_theta(theta)
    points = model.check_points(x)
    grad = model.density(th, points)[:, None] * model.score(th, points)
    return grad[0] if _single(model, x) else grad


def sample(
    model: ParametricModel,
    theta: ArrayLike,
    n: int,
    rng_seed: int | np.random.SeedSequence,
) -> Sample:
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(rng_seed)
    return Sample(model.draw(model.check_theta(theta), n, rng))


def sample_contaminated(
    model: ParametricModel,
    theta: ArrayLike,
    n: int,
    contaminant: ContaminantSpec,
    rng_seed: int | np.random.SeedSequence,
) -> Sample:
    """Draw ``n - k`` model points followed by ``k = round(epsilon * n)`` outliers."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    th = model.check_theta(theta)
    rng = np.random.default_rng(rng_seed)
    k = contaminant.count(n)
    clean = model.draw(th, n - k, rng)
    if contaminant.kind is ContaminantKind.POINT_MASS:
        shape = (k,) if model.obs_dim == 1 else (k, model.obs_dim)
        outliers = np.full(shape, contaminant.location, dtype=float)
    else:
        outliers = model.contaminant_draw(contaminant.location, contaminant.scale, k, rng)
    return Sample(np.concatenate([clean, outliers], axis=0))


def transform_sample(data: Sample, a: float, b: float) -> Sample:
    """The sample under x -> a*x + b."""
    return Sample(a * data.points + b, data.weights)
