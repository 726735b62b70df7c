"""Numerical integration against the built-in model measures.

Normal families integrate on Gauss-Hermite nodes, the exponential family on
a truncated half-line with adaptive quadrature, and the multivariate normal
on a whitened tensor-product Gauss-Hermite grid.  Integrands are vectorised
callables mapping an ``(N,)`` or ``(N, d)`` array of points to an array whose
leading axis has length ``N``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable
from enum import StrEnum
from functools import lru_cache
from typing import Self

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from ._config import get_config, logger
from ._errors import NonFiniteIntegral

Integrand = Callable[[NDArray[np.float64]], NDArray[np.float64]]


class QuadratureScheme(StrEnum):
    GAUSS_HERMITE = "gauss-hermite"
    ADAPTIVE = "adaptive"
    MONTE_CARLO_CHECK = "monte-carlo-check"


class QuadratureSpec(BaseModel):
    """How integrals without a closed form are evaluated."""

    model_config = ConfigDict(frozen=True)

    scheme: QuadratureScheme = QuadratureScheme.GAUSS_HERMITE
    nodes: int = Field(default=64, ge=1)
    truncation: float = Field(
        default=40.0, gt=0, description="Half-line cut-off in units of the scale"
    )
    abs_tol: float = Field(default=1e-12, gt=0)
    rel_tol: float = Field(default=1e-10, gt=0)
    mc_draws: int = Field(default=1_000_000, ge=1000)
    mc_seed: int = 20240601

    @model_validator(mode="after")
    def _check_nodes(self) -> Self:
        if self.scheme is QuadratureScheme.GAUSS_HERMITE and self.nodes < 16:
            raise ValueError("gauss-hermite quadrature needs at least 16 nodes")
        return self

    @classmethod
    def default(cls, **overrides: object) -> QuadratureSpec:
        config = get_config()
        values: dict[str, object] = {
            "nodes": config.gh_nodes,
            "truncation": config.exp_truncation,
            "abs_tol": config.abs_tol,
            "rel_tol": config.rel_tol,
        }
        values.update(overrides)
        return cls.model_validate(values)


@lru_cache(maxsize=16)
def hermite_rule(nodes: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Physicists' Gauss-Hermite nodes and weights, normalised to sum to one."""
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return t, w / math.sqrt(math.pi)


def _check_finite(value: NDArray[np.float64] | float, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteIntegral(f"{what} did not produce a finite value")


def normal_expectation(
    g: Integrand, loc: float, scale: float, spec: QuadratureSpec
) -> NDArray[np.float64]:
    """E[g(X)] for X ~ N(loc, scale^2) on Gauss-Hermite nodes."""
    points, w = normal_nodes(loc, scale, spec)
    values = np.asarray(g(points), dtype=float)
    result = np.tensordot(w, values, axes=(0, 0))
    _check_finite(result, "Gauss-Hermite expectation")
    return result


@lru_cache(maxsize=16)
def laguerre_rule(nodes: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gauss-Laguerre nodes and weights for integrals against e^{-t} on [0, inf)."""
    return np.polynomial.laguerre.laggauss(nodes)


def normal_nodes(
    loc: float, scale: float, spec: QuadratureSpec
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    t, w = hermite_rule(spec.nodes)
    return loc + math.sqrt(2.0) * scale * t, w


def exponential_nodes(
    scale: float, spec: QuadratureSpec
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    t, w = laguerre_rule(spec.nodes)
    return scale * t, w


def mvn_nodes(
    mean: NDArray[np.float64], chol: NDArray[np.float64], spec: QuadratureSpec
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Whitened tensor-product Gauss-Hermite grid for N(mean, chol @ chol.T)."""
    dim = mean.shape[0]
    budget = get_config().mvn_node_budget
    per_dim = min(spec.nodes, max(4, int(budget ** (1.0 / dim))))
    if per_dim < spec.nodes:
        logger.debug(
            f"mvn quadrature reduced to {per_dim} nodes per dimension (dim={dim})"
        )
    t, w = hermite_rule(per_dim)
    grid = np.array(list(itertools.product(t, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return mean + math.sqrt(2.0) * grid @ chol.T, weights


def mvn_expectation(
    g: Integrand,
    mean: NDArray[np.float64],
    chol: NDArray[np.float64],
    spec: QuadratureSpec,
) -> NDArray[np.float64]:
    """E[g(X)] for X ~ N(mean, chol @ chol.T) on a whitened tensor grid."""
    points, weights = mvn_nodes(mean, chol, spec)
    values = np.asarray(g(points), dtype=float)
    result = np.tensordot(weights, values, axes=(0, 0))
    _check_finite(result, "tensor Gauss-Hermite expectation")
    return result


def density_weighted(
    g: Integrand, density: Integrand
) -> Integrand:
    """The integrand ``g(x) * density(x)``, broadcasting over trailing axes of g."""

    def integrand(x: NDArray[np.float64]) -> NDArray[np.float64]:
        values = np.asarray(g(x), dtype=float)
        dens = np.asarray(density(x), dtype=float)
        return values * dens.reshape(dens.shape + (1,) * (values.ndim - dens.ndim))

    return integrand


def adaptive_integral(
    f: Integrand,
    lower: float,
    upper: float,
    spec: QuadratureSpec,
    *,
    breakpoints: tuple[float, ...] = (),
) -> NDArray[np.float64]:
    """Adaptive quadrature of a (possibly vector-valued) integrand on [lower, upper]."""

    def scalar_point(x: float) -> NDArray[np.float64]:
        return np.asarray(f(np.array([x])), dtype=float)[0]

    try:
        result, _err, info = integrate.quad_vec(
            scalar_point,
            lower,
            upper,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=2000,
            points=[b for b in breakpoints if lower < b < upper] or None,
            full_output=True,
        )
    except (ValueError, FloatingPointError) as e:
        raise NonFiniteIntegral(f"adaptive quadrature failed: {e}") from e
    if not info.success:
        logger.warning(f"adaptive quadrature on [{lower}, {upper}]: {info.message}")
    _check_finite(result, "adaptive quadrature")
    return np.asarray(result, dtype=float)


def monte_carlo_expectation(
    g: Integrand,
    draw: Callable[[np.random.Generator, int], NDArray[np.float64]],
    spec: QuadratureSpec,
) -> NDArray[np.float64]:
    """Plain Monte Carlo average, used only as an independent cross-check."""
    rng = np.random.default_rng(spec.mc_seed)
    values = np.asarray(g(draw(rng, spec.mc_draws)), dtype=float)
    result = values.mean(axis=0)
    _check_finite(result, "Monte Carlo expectation")
    return result
