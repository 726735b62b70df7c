from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from inspect import isabstract
from typing import Any, ClassVar

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._errors import DomainError, EmptySample, UnsupportedModel
from .quadrature import Integrand, QuadratureSpec

FloatArray = NDArray[np.float64]


# --- Samples ---


@dataclass(frozen=True, slots=True)
class Sample:
    """An empirical (or quadrature-weighted) measure over observations.

    ``points`` has shape ``(n,)`` for univariate models and ``(n, d)`` for
    multivariate ones. ``weights`` is ``None`` for an ordinary sample, in which
    case every point carries mass ``1/n``.
    """

    points: FloatArray
    weights: FloatArray | None = field(default=None)

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float)
        if points.shape[0] == 0:
            raise EmptySample("sample has no observations")
        object.__setattr__(self, "points", points)
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != (points.shape[0],) or np.any(weights < 0):
                raise DomainError("weights must be nonnegative, one per point")
            object.__setattr__(self, "weights", weights / weights.sum())

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def mass(self) -> FloatArray:
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        return self.weights

    def mean(self, values: FloatArray) -> FloatArray:
        """Integral of per-point ``values`` (leading axis ``n``) against the measure."""
        return np.tensordot(self.mass, values, axes=(0, 0))


# --- Models ---


class ParametricModel(ABC):
    """A density family p_theta with known nuisance values.

    Subclasses register themselves under their ``kind`` so that command line
    and JSON inputs can build them with :meth:`from_kind`.
    """

    kind: ClassVar[str]
    is_scale: ClassVar[bool] = False
    _registry: ClassVar[dict[str, type[ParametricModel]]] = {}

    def __init_subclass__(cls, **kwargs: object) -> None:
        super().__init_subclass__(**kwargs)
        if not isabstract(cls) and "kind" in cls.__dict__:
            ParametricModel._registry[cls.kind] = cls

    @classmethod
    def from_kind(cls, kind: str, **fixed: Any) -> ParametricModel:
        try:
            model_cls = ParametricModel._registry[kind]
        except KeyError:
            known = ", ".join(sorted(ParametricModel._registry))
            raise UnsupportedModel(f"unknown model {kind!r} (known: {known})") from None
        return model_cls(**fixed)

    @classmethod
    def kinds(cls) -> list[str]:
        return sorted(ParametricModel._registry)

    # --- shape ---

    @property
    @abstractmethod
    def theta_dim(self) -> int: ...

    @property
    def obs_dim(self) -> int:
        return 1

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def check_theta(self, theta: ArrayLike) -> FloatArray:
        arr = np.atleast_1d(np.asarray(theta, dtype=float))
        if arr.shape != (self.theta_dim,) or not np.all(np.isfinite(arr)):
            raise DomainError(
                f"{self.kind}: expected a finite parameter of length {self.theta_dim}, got {theta!r}"
            )
        if self.is_scale and arr[0] <= 0.0:
            raise DomainError(f"{self.kind}: scale parameter must be positive, got {arr[0]}")
        return arr

    def check_points(self, x: ArrayLike) -> FloatArray:
        points = np.asarray(x, dtype=float)
        if self.obs_dim == 1:
            return np.atleast_1d(points)
        points = np.atleast_2d(points)
        if points.shape[-1] != self.obs_dim:
            raise DomainError(
                f"{self.kind}: observations must have dimension {self.obs_dim}"
            )
        return points

    # --- densities ---

    @abstractmethod
    def log_density(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        """ln p_theta at every point; ``-inf`` outside the support."""

    @abstractmethod
    def score(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        """Gradient of ln p_theta in theta, shape ``(n, theta_dim)``."""

    @abstractmethod
    def fisher_information(self, theta: FloatArray) -> FloatArray: ...

    @abstractmethod
    def log_power_integral(self, theta: FloatArray, k: float) -> float:
        """ln of the Lebesgue integral of p_theta**k."""

    @abstractmethod
    def centering(self, theta: FloatArray, alpha: float) -> FloatArray:
        """Integral of p**(1+alpha) * score over the integral of p**(1+alpha)."""

    def density(self, theta: FloatArray, x: FloatArray) -> FloatArray:
        return np.exp(self.log_density(theta, x))

    def power_integral(self, theta: FloatArray, k: float) -> float:
        return math.exp(self.log_power_integral(theta, k))

    # --- integration ---

    @abstractmethod
    def expect(
        self, theta: FloatArray, g: Integrand, quad: QuadratureSpec
    ) -> FloatArray:
        """E_theta[g(X)] under the model's preferred quadrature."""

    @abstractmethod
    def nodes(
        self, theta: FloatArray, quad: QuadratureSpec
    ) -> tuple[FloatArray, FloatArray]:
        """Quadrature nodes and weights representing P_theta as a weighted sample."""

    @abstractmethod
    def lebesgue_window(self, theta: FloatArray, width: float) -> tuple[float, float]:
        """Finite interval outside which p_theta is negligible (univariate only)."""

    # --- sampling and starts ---

    @abstractmethod
    def draw(self, theta: FloatArray, n: int, rng: np.random.Generator) -> FloatArray: ...

    @abstractmethod
    def mle(
        self, points: FloatArray, weights: FloatArray | None = None
    ) -> FloatArray: ...

    @abstractmethod
    def robust_start(self, points: FloatArray) -> FloatArray: ...

    def scale_of(self, points: FloatArray) -> float:
        """A positive spread of the observations in parameter units."""
        return 1.0

    # --- contamination ---

    def contaminant_draw(
        self,
        location: float,
        scale: float,
        n: int,
        rng: np.random.Generator,
    ) -> FloatArray:
        """Draws from the same family placed at ``location`` with spread ``scale``."""
        raise UnsupportedModel(f"{self.kind} has no model-distribution contaminant")

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind}

    def __repr__(self) -> str:
        fixed = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}({fixed})"
