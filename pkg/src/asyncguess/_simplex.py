"""Small-dimensional convex minimisation over the probability simplex.

Active-set projected Newton: Newton steps restricted to the current support
under the sum-to-one constraint, with coordinates dropped when a step would
make them negative and re-admitted when their gradient beats the multiplier.
Every iterate yields the Frank-Wolfe lower bound ``f - (g.x - min g)``, which
is what the callers report as the certificate.  The solver also stops, as
converged, once the gap stops shrinking and the Newton decrement is below
the rounding level of ``f``.  Steps whose change in ``f`` is within that
rounding level are accepted, so ``x`` keeps converging after ``f`` has
settled.
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np


class SimplexSolution(NamedTuple):
    x: np.ndarray
    value: float
    lower: float
    iterations: int
    converged: bool


def _newton_direction(g, H, free):
    idx = np.flatnonzero(free)
    k = idx.size
    if k <= 1:
        return None
    Hf = H[np.ix_(idx, idx)]
    scale = max(np.trace(Hf) / k, 1e-300)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = Hf + 1e-14 * scale * np.eye(k)
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([-g[idx], [0.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    step = np.zeros_like(g)
    step[idx] = sol[:k]
    step[idx] -= step[idx].mean()  # stay exactly on the hyperplane
    return step


def minimize_on_simplex(
    oracle: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    x0,
    gap_tol: float = 1e-12,
    max_iter: int = 500,
) -> SimplexSolution:
    """Minimise a smooth convex ``f`` on the simplex.

    ``oracle(x)`` returns ``(f, grad, hess)``; ``f`` may be ``inf`` outside
    the effective domain.  ``x0`` must have finite value.
    """
    x = np.array(x0, dtype=float)
    x /= x.sum()
    f, g, H = oracle(x)
    if not math.isfinite(f):
        raise ValueError("starting point has infinite objective")
    lower = -math.inf
    best_gap = math.inf
    stalled = 0
    for it in range(1, max_iter + 1):
        gap = float(g @ x - g.min())
        lower = max(lower, f - gap)
        if gap <= gap_tol:
            return SimplexSolution(x, f, lower, it, True)
        support = x > 0
        mult = float(g @ x)
        free = support | (g < mult - 1e-15 * max(1.0, abs(mult)))
        step = _newton_direction(g, H, free)
        while step is not None:
            # a zero coordinate may only enter if the step raises it
            bad = free & ~support & (step <= 0)
            if not bad.any():
                break
            free &= ~bad
            step = _newton_direction(g, H, free)
        slope = -math.inf if step is None else float(g @ step)
        noise = 1e-15 * max(1.0, abs(f))
        stalled = stalled + 1 if gap > 0.5 * best_gap else 0
        best_gap = min(best_gap, gap)
        if step is not None and -slope <= noise and stalled >= 5:
            # stationary to the resolution of f and its gradient
            return SimplexSolution(x, f, lower, it, True)
        if step is None or not slope < 0:
            # Frank-Wolfe vertex direction always descends while gap > 0
            step = -x.copy()
            step[int(np.argmin(g))] += 1.0
            slope = float(g @ step)
        neg = step < 0
        alpha_max = float(np.min(x[neg] / -step[neg])) if neg.any() else math.inf
        alpha = min(1.0, alpha_max)
        accepted = False
        for _ in range(80):
            trial = x + alpha * step
            if alpha == alpha_max:
                trial[neg & (x / np.where(neg, -step, 1.0) <= alpha_max)] = 0.0
            trial = np.maximum(trial, 0.0)
            trial /= trial.sum()
            f_t, g_t, H_t = oracle(trial)
            if math.isfinite(f_t) and f_t <= f + 1e-4 * alpha * slope + noise:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no measurable decrease left at double precision
            return SimplexSolution(x, f, lower, it, gap <= 1e3 * gap_tol)
        x, f, g, H = trial, f_t, g_t, H_t
    gap = float(g @ x - g.min())
    lower = max(lower, f - gap)
    return SimplexSolution(x, f, lower, max_iter, gap <= gap_tol)
