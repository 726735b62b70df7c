"""The R_alpha pseudodistance family, its normalizer and the empirical criterion.

For alpha > 0::

    R_alpha(P, Q) = 1/(1+a) ln ∫p^a dP + 1/(a(1+a)) ln ∫q^a dQ - 1/a ln ∫p^a dQ

and for alpha = 0 the Kullback-Leibler limit ∫ln q dQ - ∫ln p dQ.  All logs
are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from .core import FloatArray, ParametricModel, QuadratureScheme, QuadratureSpec, Sample
from .core import get_config, logger
from .core._errors import DomainError, NonFiniteCriterion, NonFiniteIntegral, UnsupportedAlpha
from .core.quadrature import Integrand, adaptive_integral

HOLDER_MISMATCH_TOL = 1e-8
# Q nodes that must fall inside P's one-scale window before the node rule is used
MIN_NODES_IN_WINDOW = 4
SCAN_POINTS = 4001
LOG_NEGLIGIBLE = -80.0


# --- Alpha ---


def check_alpha(alpha: float) -> float:
    """Validate a pseudodistance order against ``[0, beta_max]``."""
    a = float(alpha)
    if not math.isfinite(a) or a < 0.0:
        raise DomainError(f"alpha must be a finite nonnegative number, got {alpha}")
    beta_max = get_config().beta_max
    if a > beta_max:
        raise UnsupportedAlpha(f"alpha={a} exceeds beta_max={beta_max}")
    return a


# --- Densities ---


@dataclass(frozen=True)
class BoundDensity:
    """A model evaluated at a fixed parameter: one concrete density."""

    model: ParametricModel
    theta: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", self.model.check_theta(self.theta))

    def log_pdf(self, x: FloatArray) -> FloatArray:
        return self.model.log_density(self.theta, x)

    def power(self, x: FloatArray, a: float) -> FloatArray:
        """p(x)**a, with 0 outside the support."""
        return np.exp(a * self.log_pdf(x))

    def log_power_integral(self, k: float) -> float:
        return self.model.log_power_integral(self.theta, k)

    def expect(self, g: Integrand, quad: QuadratureSpec) -> FloatArray:
        return self.model.expect(self.theta, g, quad)


def _shared_support(p: BoundDensity, q: BoundDensity) -> None:
    if p.model.support != q.model.support or p.model.obs_dim != q.model.obs_dim:
        raise DomainError(
            f"densities live on different supports: {p.model.kind} vs {q.model.kind}"
        )


def _quad(quad: QuadratureSpec | None) -> QuadratureSpec:
    return quad if quad is not None else QuadratureSpec.default()


# --- Integrals over a pair ---


def _log_union_integral(
    p: BoundDensity, q: BoundDensity, log_f: Integrand, quad: QuadratureSpec
) -> FloatArray:
    """ln ∫exp(log_f) dλ over the union of both integration windows, per component.

    The integrand is rescaled by its largest value on a scan grid, so pairs
    whose product underflows everywhere still get a finite logarithm.
    """
    adaptive = quad.model_copy(update={"scheme": QuadratureScheme.ADAPTIVE})
    lo_p, hi_p = p.model.lebesgue_window(p.theta, adaptive.truncation)
    lo_q, hi_q = q.model.lebesgue_window(q.theta, adaptive.truncation)
    lo, hi = min(lo_p, lo_q), max(hi_p, hi_q)
    breaks = {*p.model.lebesgue_window(p.theta, 1.0), *q.model.lebesgue_window(q.theta, 1.0)}
    scan = np.union1d(np.linspace(lo, hi, SCAN_POINTS), [b for b in breaks if lo < b < hi])
    with np.errstate(divide="ignore"):
        raw = np.asarray(log_f(scan), dtype=float)
    logs = raw if raw.ndim == 2 else raw[:, None]
    peak_logs = np.max(logs, axis=0)
    if not np.all(np.isfinite(peak_logs)):
        raise NonFiniteIntegral("integrand vanishes on the whole integration window")
    # integrate only where some component is within e^LOG_NEGLIGIBLE of its peak
    live = np.flatnonzero(np.any(logs - peak_logs > LOG_NEGLIGIBLE, axis=1))
    lo = float(scan[max(live[0] - 1, 0)])
    hi = float(scan[min(live[-1] + 1, scan.size - 1)])
    peaks = scan[np.argmax(logs, axis=0)]
    breakpoints = tuple(sorted(b for b in {*breaks, *peaks.tolist()} if lo < b < hi))
    shift = peak_logs if raw.ndim == 2 else peak_logs[0]

    def scaled(x: FloatArray) -> FloatArray:
        with np.errstate(divide="ignore"):
            return np.exp(np.asarray(log_f(x), dtype=float) - shift)

    values = adaptive_integral(scaled, lo, hi, adaptive, breakpoints=breakpoints)
    if np.any(values <= 0.0):
        raise NonFiniteIntegral(f"integral over [{lo}, {hi}] underflowed to zero")
    return shift + np.log(values)


def _nodes_resolve(p: BoundDensity, q: BoundDensity, quad: QuadratureSpec) -> bool:
    """Whether Q's quadrature nodes sample the bulk of P densely enough."""
    nodes, _ = q.model.nodes(q.theta, quad)
    lo, hi = p.model.lebesgue_window(p.theta, 1.0)
    inside = np.count_nonzero((nodes >= lo) & (nodes <= hi))
    return inside >= MIN_NODES_IN_WINDOW


def log_cross_integral(
    p: BoundDensity,
    q: BoundDensity,
    a: float,
    quad: QuadratureSpec,
    *,
    union_window: bool | None = None,
) -> float:
    """ln ∫p^a dQ.

    Univariate pairs use Q's Gauss-Hermite rule while its nodes cover P and
    the union-window integral otherwise, or always under the adaptive scheme;
    ``union_window`` forces either path. Multivariate pairs always use Q's
    tensor rule.
    """
    if p.model.obs_dim == 1:
        if union_window is None:
            match quad.scheme:
                case QuadratureScheme.GAUSS_HERMITE:
                    union_window = not _nodes_resolve(p, q, quad)
                case QuadratureScheme.ADAPTIVE:
                    union_window = True
                case QuadratureScheme.MONTE_CARLO_CHECK:
                    union_window = False
        if union_window:
            return float(
                _log_union_integral(p, q, lambda x: a * p.log_pdf(x) + q.log_pdf(x), quad)
            )
    value = float(q.expect(lambda x: p.power(x, a), quad))
    if not value > 0.0:
        raise NonFiniteIntegral(f"∫p^{a:g} dQ underflowed to {value} on the node rule")
    return math.log(value)


# --- Pseudodistance ---


def renyi_terms(
    p: BoundDensity,
    q: BoundDensity,
    alpha: float,
    quad: QuadratureSpec | None = None,
    *,
    union_window: bool | None = None,
) -> tuple[float, float, float]:
    """The three summands R0_alpha(P), R1_alpha(Q) and -1/alpha ln ∫p^alpha dQ."""
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("the decomposition is defined for alpha > 0")
    quad = _quad(quad)
    r0 = p.log_power_integral(1.0 + a) / (1.0 + a)
    r1 = q.log_power_integral(1.0 + a) / (a * (1.0 + a))
    log_cross = log_cross_integral(p, q, a, quad, union_window=union_window)
    return r0, r1, -log_cross / a


def renyi_pseudodistance_holder(
    p: BoundDensity, q: BoundDensity, alpha: float, quad: QuadratureSpec | None = None
) -> float:
    """R_alpha through the Holder form, with every integral taken numerically."""
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("the Holder form is defined for alpha > 0")
    _shared_support(p, q)
    quad = _quad(quad)
    if p.model.obs_dim == 1:
        log_p, log_q, log_pq = (
            float(v)
            for v in _log_union_integral(
                p,
                q,
                lambda x: np.stack(
                    [
                        (1.0 + a) * p.log_pdf(x),
                        (1.0 + a) * q.log_pdf(x),
                        a * p.log_pdf(x) + q.log_pdf(x),
                    ],
                    axis=-1,
                ),
                quad,
            )
        )
    else:
        log_p = math.log(float(p.expect(lambda x: p.power(x, a), quad)))
        log_q = math.log(float(q.expect(lambda x: q.power(x, a), quad)))
        log_pq = log_cross_integral(p, q, a, quad)
    log_bound = (a * log_p + log_q) / (1.0 + a)
    return (log_bound - log_pq) / a


def renyi_pseudodistance(
    p: BoundDensity,
    q: BoundDensity,
    alpha: float,
    quad: QuadratureSpec | None = None,
    *,
    cross_check: bool = True,
) -> float:
    """R_alpha(P, Q) from its decomposition; alpha = 0 gives KL(Q || P).

    Args:
        p: the model-side density.
        q: the data-side density.
        alpha: order in ``[0, beta_max]``.
        quad: quadrature for integrals against ``Q``; defaults to the config.
        cross_check: also evaluate the Holder form. On disagreement a
            univariate cross term is re-evaluated on the union window, and a
            warning is logged if the forms still differ.

    Returns:
        The pseudodistance, nonnegative up to quadrature error.
    """
    a = check_alpha(alpha)
    _shared_support(p, q)
    quad = _quad(quad)
    if a == 0.0:
        return float(q.expect(lambda x: q.log_pdf(x) - p.log_pdf(x), quad))
    value = sum(renyi_terms(p, q, a, quad))
    if not cross_check:
        return value
    holder = renyi_pseudodistance_holder(p, q, a, quad)

    def disagree(v: float) -> bool:
        return abs(holder - v) > HOLDER_MISMATCH_TOL * (1.0 + abs(v))

    if disagree(value) and p.model.obs_dim == 1:
        logger.info(
            f"R_alpha forms disagree (decomposed={value:.12g} holder={holder:.12g}); "
            "re-evaluating the cross term on the union window"
        )
        value = sum(renyi_terms(p, q, a, quad, union_window=True))
    if disagree(value):
        logger.warning(f"R_alpha forms disagree: decomposed={value:.12g} holder={holder:.12g}")
    return value


def power_divergence(
    p: BoundDensity, q: BoundDensity, alpha: float, quad: QuadratureSpec | None = None
) -> float:
    """Density power divergence ∫{p^(a+1) - (1+1/a) p^a q + (1/a) q^(a+1)}dλ."""
    a = check_alpha(alpha)
    _shared_support(p, q)
    quad = _quad(quad)
    if a == 0.0:
        return float(q.expect(lambda x: q.log_pdf(x) - p.log_pdf(x), quad))
    cross = math.exp(log_cross_integral(p, q, a, quad))
    return (
        math.exp(p.log_power_integral(1.0 + a))
        - (1.0 + 1.0 / a) * cross
        + math.exp(q.log_power_integral(1.0 + a)) / a
    )


# --- Normalizer and kernel ---


def c_alpha(
    model: ParametricModel,
    theta: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
) -> float:
    """C_alpha(theta) = (∫p^(1+alpha) dλ)^(alpha/(1+alpha)).

    Uses the family's closed form unless ``quad`` is given, in which case the
    integral is taken as E_theta[p^alpha] by quadrature.
    """
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("C_alpha is defined for alpha > 0")
    th = model.check_theta(theta)
    if quad is None:
        log_integral = model.log_power_integral(th, 1.0 + a)
    else:
        log_integral = math.log(
            float(model.expect(th, lambda x: np.exp(a * model.log_density(th, x)), quad))
        )
    return math.exp(a / (1.0 + a) * log_integral)


def h_kernel(
    model: ParametricModel, theta: ArrayLike, alpha: float, x: ArrayLike
) -> FloatArray | float:
    """h(x, theta) = p_theta(x)^alpha / C_alpha(theta)."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    points = model.check_points(x)
    values = _log_h(model, th, a, points)
    out = np.exp(values)
    single = np.ndim(x) == (0 if model.obs_dim == 1 else 1)
    return float(out[0]) if single else out


def _log_h(model: ParametricModel, theta: FloatArray, a: float, x: FloatArray) -> FloatArray:
    return a * model.log_density(theta, x) - a / (1.0 + a) * model.log_power_integral(
        theta, 1.0 + a
    )


# --- Empirical criterion ---


class Branch(StrEnum):
    ALPHA_POSITIVE = "alpha-positive"
    LOG_LIKELIHOOD = "log-likelihood"


@dataclass(frozen=True, slots=True)
class CriterionValue:
    value: float
    branch: Branch


def log_mean_power(
    model: ParametricModel, theta: FloatArray, data: Sample, a: float
) -> float:
    """ln of the sample mean of p_theta^a, computed without underflow."""
    return float(logsumexp(a * model.log_density(theta, data.points), b=data.mass))


def criterion(
    model: ParametricModel, theta: ArrayLike, data: Sample, alpha: float
) -> CriterionValue:
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    if a == 0.0:
        logp = model.log_density(th, data.points)
        if np.any(np.isneginf(logp) & (data.mass > 0.0)):
            raise NonFiniteCriterion("a sample point has zero density under alpha = 0")
        return CriterionValue(float(data.mean(logp)), Branch.LOG_LIKELIHOOD)
    lmp = log_mean_power(model, th, data, a)
    if not math.isfinite(lmp):
        raise NonFiniteCriterion("every sample point has zero density")
    value = -model.log_power_integral(th, 1.0 + a) / (1.0 + a) + lmp / a
    return CriterionValue(value, Branch.ALPHA_POSITIVE)


def criterion_ratio(
    model: ParametricModel, theta: ArrayLike, data: Sample, alpha: float
) -> float:
    """C_alpha(theta)^-1 (1/n) Σ p_theta^alpha(X_i); its log over alpha is the criterion."""
    a = check_alpha(alpha)
    if a == 0.0:
        raise DomainError("the ratio form is defined for alpha > 0")
    th = model.check_theta(theta)
    lmp = log_mean_power(model, th, data, a)
    return math.exp(lmp - a / (1.0 + a) * model.log_power_integral(th, 1.0 + a))


def population_criterion(
    model: ParametricModel,
    theta: ArrayLike,
    theta0: ArrayLike,
    alpha: float,
    quad: QuadratureSpec | None = None,
) -> float:
    """∫h(x, theta) dP_theta0(x)."""
    a = check_alpha(alpha)
    th = model.check_theta(theta)
    th0 = model.check_theta(theta0)
    return float(model.expect(th0, lambda x: np.exp(_log_h(model, th, a, x)), _quad(quad)))
