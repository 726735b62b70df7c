"""Min R_alpha estimation of (beta, sigma) in the Gaussian linear model.

With standardised residuals ``u = (y - beta^T x) / sigma`` the estimator
maximises ``Σ sigma^(-alpha/(alpha+1)) exp(-alpha u^2 / 2)``; its first order
conditions are

    Σ phi(u_i) x_i = 0,    Σ chi(u_i) = 0,

with ``phi(u) = u exp(-alpha u^2/2)`` and
``chi(u) = (u^2 - 1/(alpha+1)) exp(-alpha u^2/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, optimize

from .core import FloatArray, QuadratureSpec, logger
from .core._errors import (
    DegenerateScale,
    DomainError,
    NoConvergence,
    NoRoot,
    RankDeficient,
    SingularVX,
)
from .core.quadrature import hermite_rule
from .core.solvers import maximize_from
from .estimation import SolverOptions
from .models import MAD_CONSTANT
from .pseudodistance import check_alpha

MAX_HALVINGS = 20
SIGMA_BOUNDS = (1e-3, 1e3)
DEGENERATE_SCALE = 1e-8
POLISH_DRIFT = 1e-6


# --- Data ---


@dataclass(frozen=True)
class RegressionData:
    """Design ``X`` (n, p) and response ``Y`` (n,) with n > p and X of full column rank."""

    X: FloatArray
    Y: FloatArray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise DomainError(f"design {X.shape} does not match response {Y.shape}")
        n, p = X.shape
        if n <= p:
            raise DomainError(f"regression needs n > p, got n={n}, p={p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DomainError("regression data must be finite")
        if np.linalg.matrix_rank(X) < p:
            raise RankDeficient(f"design matrix has rank < {p}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    @property
    def V_X(self) -> FloatArray:
        """Empirical E[X X^T]."""
        return self.X.T @ self.X / self.n

    def response_scale(self) -> float:
        spread = float(np.std(self.Y))
        return spread if spread > 0.0 else 1.0


@dataclass(frozen=True)
class PsiComponents:
    """The redescending pair (phi, chi) of one alpha, with derivatives in u."""

    alpha: float

    def _gauss(self, u: FloatArray) -> FloatArray:
        return np.exp(-0.5 * self.alpha * u * u)

    def phi(self, u: ArrayLike) -> FloatArray:
        u = np.asarray(u, dtype=float)
        return u * self._gauss(u)

    def chi(self, u: ArrayLike) -> FloatArray:
        u = np.asarray(u, dtype=float)
        return (u * u - 1.0 / (self.alpha + 1.0)) * self._gauss(u)

    def dphi(self, u: ArrayLike) -> FloatArray:
        u = np.asarray(u, dtype=float)
        return (1.0 - self.alpha * u * u) * self._gauss(u)

    def dchi(self, u: ArrayLike) -> FloatArray:
        u = np.asarray(u, dtype=float)
        a = self.alpha
        return u * (2.0 + a / (a + 1.0) - a * u * u) * self._gauss(u)


def psi_components(alpha: float) -> PsiComponents:
    return PsiComponents(check_alpha(alpha))


@dataclass(frozen=True)
class RegressionFit:
    """A fitted (beta, sigma); ``weights`` are exp(-alpha u_i^2 / 2) at the solution."""

    beta_hat: FloatArray
    sigma_hat: float
    weights: FloatArray
    converged: bool
    iterations: int
    system_norm: float = 0.0


# --- Estimating equations ---


def _residuals(data: RegressionData, beta: FloatArray, sigma: float) -> FloatArray:
    return (data.Y - data.X @ beta) / sigma


def _weighted_system(
    X: FloatArray, Y: FloatArray, w: FloatArray, beta: FloatArray, sigma: float, psi: PsiComponents
) -> FloatArray:
    u = (Y - X @ beta) / sigma
    return np.concatenate([(w * psi.phi(u)) @ X, [float(w @ psi.chi(u))]])


def _weighted_jacobian(
    X: FloatArray, Y: FloatArray, w: FloatArray, beta: FloatArray, sigma: float, psi: PsiComponents
) -> FloatArray:
    """d(system)/d(beta, sigma)."""
    u = (Y - X @ beta) / sigma
    dphi, dchi = psi.dphi(u), psi.dchi(u)
    p = X.shape[1]
    jac = np.empty((p + 1, p + 1))
    jac[:p, :p] = -(X.T * (w * dphi)) @ X / sigma
    jac[:p, p] = -(w * dphi * u) @ X / sigma
    jac[p, :p] = -(w * dchi) @ X / sigma
    jac[p, p] = -float(w @ (dchi * u)) / sigma
    return jac


def regression_system(
    data: RegressionData, beta: ArrayLike, sigma: float, alpha: float
) -> FloatArray:
    """The sample means of phi(u) x and chi(u), stacked into one (p + 1) vector."""
    psi = psi_components(alpha)
    weights = np.full(data.n, 1.0 / data.n)
    return _weighted_system(data.X, data.Y, weights, np.asarray(beta, dtype=float), sigma, psi)


def _objective(data: RegressionData, beta: FloatArray, sigma: float, a: float) -> float:
    u = _residuals(data, beta, sigma)
    return sigma ** (-a / (a + 1.0)) * float(np.mean(np.exp(-0.5 * a * u * u)))


# --- Fitting ---


def _ols(data: RegressionData) -> tuple[FloatArray, float]:
    beta, *_ = np.linalg.lstsq(data.X, data.Y, rcond=None)
    residuals = data.Y - data.X @ beta
    return beta, math.sqrt(float(np.mean(residuals**2)))


def _mad_scale(residuals: FloatArray) -> float:
    return float(np.median(np.abs(residuals - np.median(residuals)))) / MAD_CONSTANT


def _beta_step(data: RegressionData, beta: FloatArray, sigma: float, a: float) -> FloatArray:
    """One reweighted least squares step, damped by halving towards the current beta."""
    u = _residuals(data, beta, sigma)
    logw = -0.5 * a * u * u
    root_w = np.sqrt(np.exp(logw - logw.max()))
    proposal, *_ = np.linalg.lstsq(data.X * root_w[:, None], data.Y * root_w, rcond=None)
    current = _objective(data, beta, sigma, a)
    step = proposal - beta
    for _ in range(MAX_HALVINGS):
        trial = beta + step
        if _objective(data, trial, sigma, a) >= current:
            return trial
        step *= 0.5
    return beta


def _sigma_step(
    data: RegressionData, beta: FloatArray, sigma: float, psi: PsiComponents, opts: SolverOptions
) -> float:
    residuals = data.Y - data.X @ beta
    s_hat = _mad_scale(residuals)
    if not s_hat > DEGENERATE_SCALE * data.response_scale():
        raise DegenerateScale("residual scale is zero; no interior sigma solves the system")
    lo, hi = math.log(SIGMA_BOUNDS[0] * s_hat), math.log(SIGMA_BOUNDS[1] * s_hat)

    def grad(eta: float) -> float:
        return float(np.mean(psi.chi(residuals / math.exp(eta))))

    eta0 = min(hi, max(lo, math.log(sigma)))
    try:
        root = maximize_from(
            grad, eta0, lo, hi, step=0.05, xtol=min(1e-13, opts.tol * 1e-3), max_iter=opts.max_iter
        )
    except NoRoot:
        root = None
    if root is None:
        raise DegenerateScale(f"sigma iterates left [{math.exp(lo):.3g}, {math.exp(hi):.3g}]")
    return math.exp(root.x)


def _polish(
    data: RegressionData, beta: FloatArray, sigma: float, psi: PsiComponents
) -> tuple[FloatArray, float]:
    """Newton polish of the joint system in (beta, log sigma)."""
    weights = np.full(data.n, 1.0 / data.n)
    p = data.p

    def system(z: FloatArray) -> FloatArray:
        return _weighted_system(data.X, data.Y, weights, z[:p], math.exp(z[p]), psi)

    def jacobian(z: FloatArray) -> FloatArray:
        s = math.exp(z[p])
        jac = _weighted_jacobian(data.X, data.Y, weights, z[:p], s, psi)
        jac[:, p] *= s
        return jac

    z0 = np.concatenate([beta, [math.log(sigma)]])
    result = optimize.root(system, z0, jac=jacobian, method="hybr", options={"xtol": 1e-14})
    drift = np.linalg.norm(result.x - z0) / (1.0 + np.linalg.norm(z0))
    if result.success and drift < POLISH_DRIFT:
        return result.x[:p], math.exp(result.x[p])
    logger.debug(f"regression polish rejected (success={result.success}, drift={drift:.3g})")
    return beta, sigma


def _fit_from(
    data: RegressionData,
    beta: FloatArray,
    sigma: float,
    a: float,
    opts: SolverOptions,
) -> tuple[FloatArray, float, int]:
    psi = psi_components(a)
    floor = DEGENERATE_SCALE * data.response_scale()
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        beta_new = _beta_step(data, beta, sigma, a)
        sigma_new = _sigma_step(data, beta_new, sigma, psi, opts)
        if sigma_new < floor:
            raise DegenerateScale(f"sigma fell to {sigma_new:.3g}")
        change = float(np.linalg.norm(beta_new - beta)) / (1.0 + float(np.linalg.norm(beta)))
        change += abs(sigma_new - sigma) / sigma
        beta, sigma = beta_new, sigma_new
        if change < opts.tol:
            break
    beta, sigma = _polish(data, beta, sigma, psi)
    return beta, sigma, iterations


def fit_regression(
    data: RegressionData, alpha: float, opts: SolverOptions | None = None
) -> RegressionFit:
    """Fit (beta, sigma) by reweighted least squares alternating with a 1-D sigma solve.

    Args:
        data: design and response.
        alpha: order; ``0`` gives ordinary least squares with the MLE scale.
        opts: solver tolerance and iteration cap.

    Returns:
        The fit with the highest criterion among the robust start (OLS beta,
        residual MAD scale) and the pure least squares start.

    Raises:
        DegenerateScale: the residuals vanish so sigma has no interior solution.
    """
    a = check_alpha(alpha)
    opts = opts or SolverOptions()
    beta_ols, sigma_ols = _ols(data)
    floor = DEGENERATE_SCALE * data.response_scale()
    if a == 0.0:
        if sigma_ols < floor:
            raise DegenerateScale("least squares residuals are zero")
        return RegressionFit(
            beta_hat=beta_ols,
            sigma_hat=sigma_ols,
            weights=np.ones(data.n),
            converged=True,
            iterations=0,
            system_norm=float(np.linalg.norm(regression_system(data, beta_ols, sigma_ols, 0.0))),
        )

    mad = _mad_scale(data.Y - data.X @ beta_ols)
    starts = [(beta_ols, mad), (beta_ols, sigma_ols)]
    fits: list[tuple[float, FloatArray, float, int]] = []
    for beta0, sigma0 in starts:
        if not sigma0 > floor:
            continue
        beta, sigma, iterations = _fit_from(data, beta0.copy(), sigma0, a, opts)
        value = _objective(data, beta, sigma, a)
        logger.debug(f"regression start sigma={sigma0:.6g} -> sigma={sigma:.10g} ({iterations} it)")
        fits.append((value, beta, sigma, iterations))
    if not fits:
        raise DegenerateScale("least squares residuals are zero")
    best_value = max(f[0] for f in fits)
    # ties go to the robust start, which comes first
    value, beta, sigma, iterations = next(f for f in fits if f[0] >= best_value - 1e-10)

    norm = float(np.linalg.norm(regression_system(data, beta, sigma, a)))
    converged = norm < opts.tol
    if not converged:
        logger.warning(f"regression alpha={a} stopped with system norm {norm:.3g}")
    u = _residuals(data, beta, sigma)
    return RegressionFit(
        beta_hat=beta,
        sigma_hat=sigma,
        weights=np.exp(-0.5 * a * u * u),
        converged=converged,
        iterations=iterations,
        system_norm=norm,
    )


# --- Asymptotics and influence ---


def _check_vx(V_X: ArrayLike) -> FloatArray:
    vx = np.atleast_2d(np.asarray(V_X, dtype=float))
    if vx.shape[0] != vx.shape[1] or not np.allclose(vx, vx.T):
        raise SingularVX("V_X must be a symmetric square matrix")
    try:
        factor = linalg.cho_factor(vx)
    except linalg.LinAlgError as e:
        raise SingularVX("V_X is not positive definite") from e
    return linalg.cho_solve(factor, np.eye(vx.shape[0]))


def regression_asymptotic_cov(V_X: ArrayLike, sigma: float, alpha: float) -> FloatArray:
    """Block-diagonal limit covariance of sqrt(n)((beta_hat, sigma_hat) - (beta, sigma))."""
    a = check_alpha(alpha)
    if not sigma > 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    vx_inv = _check_vx(V_X)
    p = vx_inv.shape[0]
    cov = np.zeros((p + 1, p + 1))
    cov[:p, :p] = sigma**2 * (a + 1) ** 3 / (2 * a + 1) ** 1.5 * vx_inv
    cov[p, p] = sigma**2 * (a + 1) ** 3 * (3 * a * a + 4 * a + 2) / (4 * (2 * a + 1) ** 2.5)
    return cov


def regression_efficiency(alpha: float) -> tuple[float, float]:
    """Efficiency of the (beta, sigma) blocks relative to least squares."""
    a = check_alpha(alpha)
    return (
        (2 * a + 1) ** 1.5 / (a + 1) ** 3,
        2.0 * (2 * a + 1) ** 2.5 / ((a + 1) ** 3 * (3 * a * a + 4 * a + 2)),
    )


def regression_influence(
    x0: ArrayLike,
    y0: float,
    beta: ArrayLike,
    sigma: float,
    V_X: ArrayLike,
    alpha: float,
) -> tuple[FloatArray, float]:
    """Influence of a point (x0, y0) on the beta and sigma functionals."""
    a = check_alpha(alpha)
    x = np.asarray(x0, dtype=float)
    u = (y0 - float(np.asarray(beta, dtype=float) @ x)) / sigma
    psi = PsiComponents(a)
    vx_inv = _check_vx(V_X)
    if_beta = sigma * (a + 1) ** 1.5 * float(psi.phi(u)) * (vx_inv @ x)
    if_sigma = sigma * (a + 1) ** 2.5 / 2.0 * float(psi.chi(u))
    return if_beta, if_sigma


def regression_sandwich_empirical(
    data: RegressionData, beta: ArrayLike, sigma: float, alpha: float
) -> FloatArray:
    """S^-1 M S^-T with M the mean of Psi Psi^T and S the mean Jacobian of Psi."""
    psi = psi_components(alpha)
    b = np.asarray(beta, dtype=float)
    u = _residuals(data, b, sigma)
    terms = np.column_stack([psi.phi(u)[:, None] * data.X, psi.chi(u)])
    M = terms.T @ terms / data.n
    S = _weighted_jacobian(data.X, data.Y, np.full(data.n, 1.0 / data.n), b, sigma, psi)
    try:
        left = np.linalg.solve(S, M)
        return np.linalg.solve(S, left.T).T
    except np.linalg.LinAlgError as e:
        raise SingularVX("estimating-equation Jacobian is singular") from e


def regression_contaminated_functional(
    X_support: ArrayLike,
    beta: ArrayLike,
    sigma: float,
    alpha: float,
    x0: ArrayLike,
    y0: float,
    epsilon: float,
    quad: QuadratureSpec | None = None,
) -> tuple[FloatArray, float]:
    """(beta, sigma) solving the estimating equations under (1 - eps) P + eps delta_(x0, y0).

    P draws X from the rows of ``X_support`` with equal mass and Y given X
    from N(beta^T X, sigma); the error law is integrated on Gauss-Hermite nodes.
    """
    a = check_alpha(alpha)
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    X = np.atleast_2d(np.asarray(X_support, dtype=float))
    b = np.asarray(beta, dtype=float)
    quad = quad or QuadratureSpec.default()
    t, w = hermite_rule(quad.nodes)
    errors = math.sqrt(2.0) * t
    n = X.shape[0]
    rows = np.repeat(X, errors.size, axis=0)
    Y = np.repeat(X @ b, errors.size) + sigma * np.tile(errors, n)
    mass = np.tile(w, n) * (1.0 - epsilon) / n
    rows = np.vstack([rows, np.asarray(x0, dtype=float)[None, :]])
    Y = np.append(Y, y0)
    mass = np.append(mass, epsilon)

    psi = PsiComponents(a)
    p = X.shape[1]

    def system(z: FloatArray) -> FloatArray:
        return _weighted_system(rows, Y, mass, z[:p], math.exp(z[p]), psi)

    def jacobian(z: FloatArray) -> FloatArray:
        s = math.exp(z[p])
        jac = _weighted_jacobian(rows, Y, mass, z[:p], s, psi)
        jac[:, p] *= s
        return jac

    z0 = np.concatenate([b, [math.log(sigma)]])
    result = optimize.root(system, z0, jac=jacobian, method="hybr", options={"xtol": 1e-14})
    if not result.success:
        raise NoConvergence(f"contaminated regression functional: {result.message}")
    return result.x[:p], math.exp(result.x[p])


# --- Simulation ---


def simulate_regression(
    n: int,
    beta: ArrayLike,
    sigma: float,
    seed: int | np.random.SeedSequence,
    outlier_fraction: float = 0.0,
    shift: float = 10.0,
) -> RegressionData:
    """Standard normal covariates, N(0, sigma) errors and the last round(f n) responses shifted."""
    if not 0.0 <= outlier_fraction < 0.5:
        raise DomainError(f"outlier fraction must lie in [0, 0.5), got {outlier_fraction}")
    b = np.asarray(beta, dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, b.size))
    Y = X @ b + sigma * rng.standard_normal(n)
    k = int(math.floor(outlier_fraction * n + 0.5))
    if k:
        Y[n - k :] += shift
    return RegressionData(X, Y)
