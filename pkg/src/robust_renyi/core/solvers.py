"""Scalar root finding and local maximisation used by every estimator."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ._config import logger
from ._errors import NoRoot

ScalarFn = Callable[[float], float]


@dataclass(frozen=True, slots=True)
class RootResult:
    x: float
    fx: float
    iterations: int
    converged: bool


def central_derivative(f: ScalarFn, x: float, step: float | None = None) -> float:
    h = step if step is not None else 1e-6 * (1.0 + abs(x))
    return (f(x + h) - f(x - h)) / (2.0 * h)


def central_jacobian(
    f: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    x: NDArray[np.float64],
    step: float = 1e-5,
) -> NDArray[np.float64]:
    """Jacobian of a vector function by central differences; columns index x."""
    x = np.asarray(x, dtype=float)
    columns = []
    for j in range(x.size):
        h = step * max(abs(x[j]), 1e-2)
        e = np.zeros_like(x)
        e[j] = h
        columns.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.stack(columns, axis=-1)


def rtsafe(
    f: ScalarFn,
    lo: float,
    hi: float,
    *,
    df: ScalarFn | None = None,
    xtol: float = 1e-12,
    max_iter: int = 200,
) -> RootResult:
    """Newton-Raphson kept inside a sign-change bracket, bisecting when a
    Newton step would leave the bracket or is not shrinking fast enough."""
    derivative = df if df is not None else (lambda x: central_derivative(f, x))
    fl, fh = f(lo), f(hi)
    if fl == 0.0:
        return RootResult(lo, 0.0, 0, True)
    if fh == 0.0:
        return RootResult(hi, 0.0, 0, True)
    if fl * fh > 0.0 or not (math.isfinite(fl) and math.isfinite(fh)):
        raise NoRoot(f"no sign change on [{lo}, {hi}]")

    # orient so that f(xl) < 0 < f(xh)
    xl, xh = (lo, hi) if fl < 0.0 else (hi, lo)
    x = 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    dx = dx_old
    fx, dfx = f(x), derivative(x)
    for iteration in range(1, max_iter + 1):
        newton_leaves = ((x - xh) * dfx - fx) * ((x - xl) * dfx - fx) > 0.0
        if newton_leaves or abs(2.0 * fx) > abs(dx_old * dfx) or dfx == 0.0:
            dx_old = dx
            dx = 0.5 * (xh - xl)
            x = xl + dx
        else:
            dx_old = dx
            dx = fx / dfx
            x -= dx
        fx = f(x)
        if abs(dx) < xtol * (1.0 + abs(x)) or fx == 0.0:
            return RootResult(x, fx, iteration, True)
        dfx = derivative(x)
        if fx < 0.0:
            xl = x
        else:
            xh = x
    logger.debug(f"rtsafe hit max_iter={max_iter} at x={x}, f={fx}")
    return RootResult(x, fx, max_iter, False)


def bracket_uphill(
    grad: ScalarFn,
    x0: float,
    lo: float,
    hi: float,
    *,
    step: float,
    max_expansions: int = 60,
) -> tuple[float, float] | None:
    """Walk from x0 in the ascent direction of ``grad`` until its sign flips.

    Returns an interval ``(a, b)`` with ``grad(a) > 0 > grad(b)`` (a local
    maximum lies inside) or ``None`` if the walk hits the domain bounds.
    """
    g0 = grad(x0)
    if not math.isfinite(g0):
        return None
    direction = 1.0 if g0 > 0.0 else -1.0
    prev, current, h = x0, x0, step
    for _ in range(max_expansions):
        current = min(hi, max(lo, prev + direction * h))
        g = grad(current)
        if not math.isfinite(g):
            return None
        if g * direction <= 0.0:
            return (prev, current) if direction > 0 else (current, prev)
        if current in (lo, hi):
            return None
        prev, h = current, 2.0 * h
    return None


def maximize_from(
    grad: ScalarFn,
    x0: float,
    lo: float,
    hi: float,
    *,
    step: float,
    xtol: float,
    max_iter: int,
) -> RootResult | None:
    """Local maximiser of a smooth 1-D objective given its derivative."""
    bracket = bracket_uphill(grad, x0, lo, hi, step=step)
    if bracket is None:
        return None
    a, b = bracket
    return rtsafe(grad, a, b, xtol=xtol, max_iter=max_iter)
