"""Minimum R_alpha estimation, the maximum likelihood limit and the power divergence competitor."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import softmax

from .core import FloatArray, ParametricModel, QuadratureSpec, Sample, get_config, logger
from .core._errors import DegenerateSample, DomainError, NoConvergence, NoRoot
from .core.solvers import maximize_from, rtsafe
from .models import NormalScale
from .pseudodistance import check_alpha, criterion, criterion_ratio

TIE_TOL = 1e-10
SCALE_BOUNDS = (1e-3, 1e3)
LOCATION_SPAN = 10.0
BASU_GRID = 400


# --- Options and results ---


class StartStrategy(StrEnum):
    MLE_START = "mle-start"
    ROBUST_START = "robust-start"
    GRID = "grid"


class SolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(default_factory=lambda: get_config().solver_tol, gt=0)
    max_iter: int = Field(default_factory=lambda: get_config().solver_max_iter, ge=1)
    n_starts: int = Field(default_factory=lambda: get_config().solver_n_starts, ge=1)
    start_strategy: StartStrategy = StartStrategy.MLE_START


@dataclass(frozen=True)
class EstimatorResult:
    """A fitted parameter with solver diagnostics.

    ``gradient_norm`` is measured in the optimisation coordinates: log theta for
    scale parameters, (theta - start) / spread for location parameters and theta
    itself for the multivariate mean.
    """

    theta_hat: FloatArray
    criterion_at_opt: float
    iterations: int
    starts_tried: int
    converged: bool
    gradient_norm: float
    starts: list[float] = field(default_factory=list, repr=False)


@dataclass(frozen=True, slots=True)
class _Candidate:
    theta: FloatArray
    value: float
    iterations: int
    gradient_norm: float


# --- Criterion derivatives ---


def _log_mass(data: Sample) -> FloatArray:
    with np.errstate(divide="ignore"):
        return np.log(data.mass)


def criterion_gradient(
    model: ParametricModel, theta: ArrayLike, data: Sample, alpha: float
) -> FloatArray:
    """Gradient in theta of the empirical criterion.

    For alpha > 0 it is the p^alpha-weighted mean of the centred score, which
    vanishes exactly where the estimating equation does.
    """
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    s = model.score(th, data.points)
    if a == 0.0:
        return data.mean(s)
    logw = a * model.log_density(th, data.points) + _log_mass(data)
    w = softmax(logw)
    return w @ s - model.centering(th, a)


def estimating_equation(
    model: ParametricModel, theta: ArrayLike, data: Sample, alpha: float
) -> FloatArray:
    """(1/n) Σ [p^(alpha-1) p_dot - c_alpha(theta) p^alpha](X_i)."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    p_alpha = np.exp(a * model.log_density(th, data.points))
    centred = model.score(th, data.points) - model.centering(th, a)
    return data.mean(p_alpha[:, None] * centred)


# --- Starts ---


def _anchor(model: ParametricModel, data: Sample) -> tuple[FloatArray, float]:
    """Robust start and a positive spread in parameter units."""
    if data.weights is None:
        start = model.robust_start(data.points)
        spread = model.scale_of(data.points)
    else:
        start = model.mle(data.points, data.weights)
        spread = float(start[0]) if model.is_scale else model.scale_of(data.points)
    return start, spread


def _start_points(
    model: ParametricModel, data: Sample, opts: SolverOptions
) -> list[FloatArray]:
    robust, spread = _anchor(model, data)
    mle = model.mle(data.points, data.weights)
    n_grid = opts.n_starts if opts.start_strategy is StartStrategy.GRID else opts.n_starts - 2
    grid: list[FloatArray] = []
    if model.theta_dim == 1 and n_grid > 0:
        if model.is_scale:
            factors = np.geomspace(0.25, 4.0, n_grid) if n_grid > 1 else np.ones(1)
            grid = [np.array([spread * f]) for f in factors]
        else:
            offsets = np.linspace(-2.0, 2.0, n_grid) if n_grid > 1 else np.zeros(1)
            grid = [robust + spread * o for o in offsets]
    match opts.start_strategy:
        case StartStrategy.MLE_START:
            ordered = [mle, robust, *grid]
        case StartStrategy.ROBUST_START:
            ordered = [robust, mle, *grid]
        case StartStrategy.GRID:
            ordered = grid or [robust, mle]
    unique: list[FloatArray] = []
    for start in ordered:
        if not any(np.allclose(start, u, rtol=1e-12, atol=0.0) for u in unique):
            unique.append(start)
    return unique[: max(opts.n_starts, 1)]


def _pick(candidates: list[_Candidate], robust: FloatArray) -> _Candidate:
    best = max(c.value for c in candidates)
    tied = [c for c in candidates if c.value >= best - TIE_TOL]
    return min(tied, key=lambda c: float(np.linalg.norm(c.theta - robust)))


# --- Univariate fits ---


@dataclass(frozen=True)
class _Chart:
    """Optimisation coordinate eta for a one-dimensional parameter."""

    to_theta: Callable[[float], float]
    to_eta: Callable[[float], float]
    dtheta_deta: Callable[[float], float]
    lo: float
    hi: float
    step: float


def _chart(model: ParametricModel, data: Sample, centre: float, spread: float) -> _Chart:
    if model.is_scale:
        return _Chart(
            to_theta=math.exp,
            to_eta=math.log,
            dtheta_deta=math.exp,
            lo=math.log(SCALE_BOUNDS[0] * spread),
            hi=math.log(SCALE_BOUNDS[1] * spread),
            step=0.05,
        )
    lo_x = float(np.min(data.points)) - LOCATION_SPAN * spread
    hi_x = float(np.max(data.points)) + LOCATION_SPAN * spread
    return _Chart(
        to_theta=lambda eta: centre + spread * eta,
        to_eta=lambda theta: (theta - centre) / spread,
        dtheta_deta=lambda eta: spread,
        lo=(lo_x - centre) / spread,
        hi=(hi_x - centre) / spread,
        step=0.1,
    )


def _solve_univariate(
    model: ParametricModel,
    data: Sample,
    a: float,
    opts: SolverOptions,
    starts: list[FloatArray],
    robust: FloatArray,
    spread: float,
) -> tuple[_Candidate, int]:
    chart = _chart(model, data, float(robust[0]), spread)

    def grad_eta(eta: float) -> float:
        theta = np.array([chart.to_theta(eta)])
        return float(criterion_gradient(model, theta, data, a)[0]) * chart.dtheta_deta(eta)

    xtol = min(1e-13, opts.tol * 1e-3)
    candidates: list[_Candidate] = []
    for start in starts:
        eta0 = min(chart.hi, max(chart.lo, chart.to_eta(float(start[0]))))
        try:
            root = maximize_from(
                grad_eta, eta0, chart.lo, chart.hi,
                step=chart.step, xtol=xtol, max_iter=opts.max_iter,
            )
        except NoRoot:
            root = None
        if root is None:
            logger.debug(f"{model.kind}: start {start} did not bracket a maximum")
            continue
        theta = np.array([chart.to_theta(root.x)])
        value = criterion(model, theta, data, a).value
        gnorm = abs(grad_eta(root.x))
        logger.debug(
            f"{model.kind}: start {float(start[0]):.6g} -> {theta[0]:.10g} "
            f"(criterion {value:.12g}, {root.iterations} iterations)"
        )
        candidates.append(_Candidate(theta, value, root.iterations, gnorm))
    if not candidates:
        raise NoConvergence(f"{model.kind}: no start reached a local maximum")
    return _pick(candidates, robust), len(starts)


# --- Multivariate mean ---


def _solve_mvn(
    model: ParametricModel,
    data: Sample,
    a: float,
    opts: SolverOptions,
    starts: list[FloatArray],
    robust: FloatArray,
) -> tuple[_Candidate, int]:
    """Damped Newton on the criterion; falls back to the reweighted-mean step."""
    fisher = model.fisher_information(robust)
    cov_model = np.linalg.inv(fisher)
    candidates: list[_Candidate] = []
    for start in starts:
        theta = start.copy()
        value = criterion(model, theta, data, a).value
        iterations = 0
        for iterations in range(1, opts.max_iter + 1):
            logw = a * model.log_density(theta, data.points) + _log_mass(data)
            w = softmax(logw)
            s = model.score(theta, data.points)
            grad = w @ s
            if np.linalg.norm(grad) < opts.tol:
                break
            centred = s - grad
            hessian = a * (centred.T @ (w[:, None] * centred)) - fisher
            try:
                np.linalg.cholesky(-hessian)
                step = np.linalg.solve(-hessian, grad)
            except np.linalg.LinAlgError:
                step = cov_model @ grad
            t = 1.0
            for _ in range(40):
                trial = theta + t * step
                trial_value = criterion(model, trial, data, a).value
                if trial_value >= value:
                    theta, value = trial, trial_value
                    break
                t *= 0.5
            else:
                break
        w = softmax(a * model.log_density(theta, data.points) + _log_mass(data))
        gnorm = float(np.linalg.norm(w @ model.score(theta, data.points)))
        candidates.append(_Candidate(theta, value, iterations, gnorm))
    return _pick(candidates, robust), len(starts)


# --- Public fits ---


def fit_min_r_alpha(
    model: ParametricModel,
    data: Sample,
    alpha: float,
    opts: SolverOptions | None = None,
) -> EstimatorResult:
    """Maximise C_alpha(theta)^-1 (1/n) Σ p_theta^alpha(X_i) over theta.

    At alpha = 0 the maximum likelihood estimate is returned in closed form.
    Otherwise every start is driven to a local maximum and the highest one
    wins; values within ``1e-10`` of the best are resolved towards the robust
    start.

    Raises:
        DegenerateSample: the scale of the observations is zero.
        NoConvergence: no start reached a local maximum.
    """
    a = check_alpha(alpha)
    opts = opts or SolverOptions()
    points = model.check_points(data.points)
    if points.shape != data.points.shape:
        raise DomainError(f"{model.kind}: sample points have the wrong shape")

    robust, spread = _anchor(model, data)
    if model.is_scale and not spread > 0.0:
        raise DegenerateSample(f"{model.kind}: all observations sit at the scale origin")

    if a == 0.0:
        theta = model.mle(data.points, data.weights)
        if model.is_scale and not theta[0] > 0.0:
            raise DegenerateSample(f"{model.kind}: maximum likelihood scale is zero")
        grad = criterion_gradient(model, theta, data, 0.0)
        return EstimatorResult(
            theta_hat=theta,
            criterion_at_opt=criterion(model, theta, data, 0.0).value,
            iterations=0,
            starts_tried=0,
            converged=True,
            gradient_norm=float(np.linalg.norm(grad)),
        )

    starts = _start_points(model, data, opts)
    if model.theta_dim == 1:
        best, tried = _solve_univariate(model, data, a, opts, starts, robust, spread)
    else:
        best, tried = _solve_mvn(model, data, a, opts, starts, robust)
    converged = best.gradient_norm < opts.tol
    if not converged:
        logger.warning(
            f"{model.kind}: alpha={a} fit stopped with gradient {best.gradient_norm:.3g}"
        )
    return EstimatorResult(
        theta_hat=best.theta,
        criterion_at_opt=best.value,
        iterations=best.iterations,
        starts_tried=tried,
        converged=converged,
        gradient_norm=best.gradient_norm,
        starts=[float(s[0]) for s in starts] if model.theta_dim == 1 else [],
    )


def r_alpha_hat(
    model: ParametricModel,
    data: Sample,
    alpha: float,
    opts: SolverOptions | None = None,
) -> float:
    """sup_theta (1/n) Σ h(X_i, theta), evaluated at the fitted parameter."""
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("R_alpha-hat is defined for alpha > 0")
    fit = fit_min_r_alpha(model, data, a, opts)
    return criterion_ratio(model, fit.theta_hat, data, a)


def fisher_consistency(
    model: ParametricModel,
    theta0: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
    opts: SolverOptions | None = None,
) -> FloatArray:
    """Maximiser of theta -> ∫h(x, theta) dP_theta0, by quadrature."""
    th0 = model.check_theta(theta0)
    nodes, weights = model.nodes(th0, quad or QuadratureSpec.default())
    fit = fit_min_r_alpha(model, Sample(nodes, weights), alpha, opts)
    return fit.theta_hat


# --- Density power divergence (normal scale) ---


def basu_equation(points: ArrayLike, sigma: float, alpha: float, m: float = 0.0) -> float:
    """alpha/(alpha+1)^(3/2) + (1/n) Σ (u_i^2 - 1) exp(-alpha u_i^2 / 2), u = (x - m)/sigma."""
    u = (np.asarray(points, dtype=float) - m) / sigma
    return alpha / (alpha + 1.0) ** 1.5 + float(
        np.mean((u * u - 1.0) * np.exp(-0.5 * alpha * u * u))
    )


def _basu_objective(points: FloatArray, sigma: float, alpha: float, m: float) -> float:
    u = (points - m) / sigma
    mean_power = float(np.mean(np.exp(-0.5 * alpha * u * u))) / (
        sigma * math.sqrt(2.0 * math.pi)
    ) ** alpha
    integral = (2.0 * math.pi) ** (-0.5 * alpha) * sigma**-alpha / math.sqrt(1.0 + alpha)
    return integral - (1.0 + 1.0 / alpha) * mean_power


def fit_basu_dpd(
    data: Sample,
    alpha: float,
    m: float = 0.0,
    opts: SolverOptions | None = None,
) -> EstimatorResult:
    """Minimum density power divergence estimate of a normal scale with known mean.

    Every downward sign change of the estimating equation on a log grid over
    ``[1e-3 s, 1e3 s]``, with ``s`` the sample standard deviation, is refined
    by safeguarded Newton; the root with the smallest divergence objective is
    returned. A sample without spread brackets around its root mean square
    about ``m`` instead.
    """
    a = check_alpha(alpha)
    opts = opts or SolverOptions()
    points = np.asarray(data.points, dtype=float)
    rms = math.sqrt(float(np.mean((points - m) ** 2)))
    if not rms > 0.0:
        raise DegenerateSample("all observations equal the known mean")
    if a == 0.0:
        theta = NormalScale(m).mle(points)
        return EstimatorResult(
            theta, 0.0, 0, 0, True, abs(basu_equation(points, float(theta[0]), 0.0, m))
        )
    s = float(np.std(points, ddof=1)) if points.size > 1 else 0.0
    if not s > 0.0:
        s = rms

    def f(sigma: float) -> float:
        return basu_equation(points, sigma, a, m)

    grid = np.geomspace(SCALE_BOUNDS[0] * s, SCALE_BOUNDS[1] * s, BASU_GRID)
    values = np.array([f(g) for g in grid])
    downs = np.flatnonzero((values[:-1] > 0.0) & (values[1:] <= 0.0))
    if downs.size == 0:
        raise NoRoot(f"power divergence equation has no sign change on [{grid[0]}, {grid[-1]}]")
    roots = [
        rtsafe(f, float(grid[i]), float(grid[i + 1]), xtol=1e-14, max_iter=opts.max_iter)
        for i in downs
    ]
    best = min(roots, key=lambda r: _basu_objective(points, r.x, a, m))
    logger.debug(f"power divergence: {len(roots)} candidate roots, chose sigma={best.x:.10g}")
    return EstimatorResult(
        theta_hat=np.array([best.x]),
        criterion_at_opt=_basu_objective(points, best.x, a, m),
        iterations=best.iterations,
        starts_tried=len(roots),
        converged=best.converged or abs(best.fx) < opts.tol,
        gradient_norm=abs(best.fx),
    )
