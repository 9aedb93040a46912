"""Information measures, the rate-distortion function and its mismatched form.

The mismatched function fixes the reproduction law ``Qh`` and minimises
``sum_x Q(x) sum_xh V(xh|x) log(V(xh|x) / Qh(xh))`` (mutual information plus
the divergence of the output marginal from ``Qh``) over channels with average
distortion at most ``delta``.  The problem separates across ``x`` apart from
one linear constraint, so the optimum lies in the exponential family
``V_lam(xh|x) ~ Qh(xh) exp(-lam d(x, xh))`` and only ``lam`` needs a search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .distortion import DistortionModel, check_pmf
from ._simplex import minimize_on_simplex
from .errors import DimensionMismatch, NonConvergence


@dataclass(frozen=True)
class SolverControls:
    """Tolerances and caps shared by the iterative solvers."""

    value_tol: float = 1e-10
    patience: int = 3
    max_iter: int = 100_000
    gap_tol: float = 1e-10
    constraint_tol: float = 1e-9
    lambda_cap_factor: float = 1e6
    # exponent solvers
    restarts: int = 20
    grid_step: float = 0.02
    bracket_tol: float = 1e-4
    floor: float = 1e-12
    seed: int = 0

    @classmethod
    def from_mapping(cls, mapping) -> "SolverControls":
        known = cls.__dataclass_fields__
        unknown = set(mapping) - set(known)
        if unknown:
            raise KeyError(f"unknown solver controls: {sorted(unknown)}")
        return cls(**mapping)


DEFAULT_CONTROLS = SolverControls()


# -- information measures ---------------------------------------------------

def _xlogx_ratio(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    pos = np.broadcast_to(p > 0, out.shape)
    pb = np.broadcast_to(p, out.shape)
    qb = np.broadcast_to(q, out.shape)
    out[pos] = pb[pos] * np.log(pb[pos] / qb[pos])
    return out


def entropy(p) -> float:
    p = check_pmf(p)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def _check_channel(V, p=None) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise DimensionMismatch("channel must be a matrix")
    if p is not None and V.shape[0] != len(p):
        raise DimensionMismatch(f"channel has {V.shape[0]} rows, pmf has {len(p)} entries")
    if np.any(V < 0) or np.any(np.abs(V.sum(axis=1) - 1.0) > 1e-12):
        raise DimensionMismatch("channel rows must be pmfs")
    return V


def output_marginal(p, V) -> np.ndarray:
    p = check_pmf(p)
    V = _check_channel(V, p)
    return p @ V


def cond_entropy(V, p) -> float:
    p = check_pmf(p)
    V = _check_channel(V, p)
    rows = np.array([entropy(row / row.sum()) if row.sum() > 0 else 0.0 for row in V])
    return float(p @ rows)


def mutual_info(p, V) -> float:
    p = check_pmf(p)
    V = _check_channel(V, p)
    return entropy(p @ V) - cond_entropy(V, p)


def divergence(p, q) -> float:
    """``D(p || q)`` in nats; ``math.inf`` when p is not dominated by q."""
    p = check_pmf(p)
    q = check_pmf(q)
    if p.shape != q.shape:
        raise DimensionMismatch("divergence needs pmfs on the same alphabet")
    if np.any((p > 0) & (q == 0)):
        return math.inf
    return float(np.sum(_xlogx_ratio(p, q)))


def expected_distortion(p, V, d) -> float:
    return float(np.sum(p[:, None] * V * d))


def mismatched_objective(p, V, qh) -> float:
    """``I(p, V) + D(pV || qh)`` written as one sum; ``inf`` off the support."""
    V = np.asarray(V, dtype=float)
    used = (p[:, None] > 0) & (V > 0)
    if np.any(used & (np.asarray(qh)[None, :] == 0)):
        return math.inf
    return float(np.sum((p[:, None] * _xlogx_ratio(V, np.broadcast_to(qh, V.shape)))[p > 0]))


# -- results ----------------------------------------------------------------

@dataclass
class RDResult:
    value: float
    witness_channel: np.ndarray | None
    lagrange_lambda: float
    iterations: int
    converged: bool
    residual: float
    lower_bound: float = -math.inf
    extras: dict = field(default_factory=dict)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    @property
    def gap(self) -> float:
        return self.value - self.lower_bound


def _tilted_rows(log_qh, d, lam):
    """Log of ``V_lam`` and per-row log normaliser; ``log_qh`` may hold -inf."""
    logits = log_qh[None, :] - lam * d
    log_z = logsumexp(logits, axis=1)
    return logits - log_z[:, None], log_z


def _limit_rows(qh, d, support):
    """``lam -> inf`` limit: ``qh`` restricted to the nearest supported symbols."""
    ds = np.where(support[None, :], d, np.inf)
    dmin = ds.min(axis=1)
    nearest = (ds == dmin[:, None]) & support[None, :]
    mass = np.where(nearest, qh[None, :], 0.0)
    return mass / mass.sum(axis=1, keepdims=True), mass.sum(axis=1), dmin


def _illinois(achieved, delta, lo, f_lo, hi, f_hi, evals, scale, max_evals=400):
    """Regula falsi (Illinois variant) keeping ``achieved(hi) <= delta``.

    Returns the feasible end of the final bracket.
    """
    side = 0
    while evals < max_evals:
        if -f_hi <= 1e-15 * scale or hi - lo <= 4 * np.finfo(float).eps * hi:
            return hi, evals, True
        t = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not lo < t < hi:
            t = 0.5 * (lo + hi)
        f_t = achieved(t) - delta
        evals += 1
        if f_t > 0:
            lo, f_lo = t, f_t
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = t, f_t
            if side == 1:
                f_lo *= 0.5
            side = 1
    return hi, evals, False


def mismatched_rd(Qx, Qxh, model: DistortionModel, controls: SolverControls = DEFAULT_CONTROLS) -> RDResult:
    """Mismatched rate-distortion value for a fixed reproduction law.

    ``lam`` is found by root-finding on the achieved distortion of ``V_lam``,
    which decreases continuously from the product channel (``lam = 0``) to
    the nearest-neighbour limit (``lam -> inf``).  The reported value is the
    objective of the returned witness; ``lower_bound`` is the Lagrange dual
    value at the same ``lam``.  A law whose support cannot meet the budget
    gives ``value = inf`` with ``extras["infeasible_by"]`` as certificate.
    """
    Qx = check_pmf(Qx, "Q_X")
    Qxh = check_pmf(Qxh, "Q_Xh")
    d = model.d
    if d.shape != (Qx.size, Qxh.size):
        raise DimensionMismatch(f"distortion is {d.shape}, laws are {Qx.size}x{Qxh.size}")
    delta = model.delta
    live = Qx > 0
    support = Qxh > 0
    with np.errstate(divide="ignore"):
        log_qh = np.log(Qxh)

    limit_v, limit_mass, dmin = _limit_rows(Qxh, d, support)
    d_min = math.fsum(Qx[live] * dmin[live])
    if d_min > delta:
        return RDResult(math.inf, None, math.inf, 0, True, 0.0, math.inf,
                        {"infeasible_by": d_min - delta})

    d0 = math.fsum((Qx[:, None] * Qxh[None, :] * d)[live].ravel())
    if d0 <= delta:
        V = np.tile(Qxh, (Qx.size, 1))
        return RDResult(0.0, V, 0.0, 0, True, 0.0, 0.0)

    def limit_result():
        value = -math.fsum(Qx[live] * np.log(limit_mass[live]))
        return RDResult(value, limit_v, math.inf, 0, True, 0.0, value)

    if d_min >= delta:
        return limit_result()

    def achieved(lam):
        log_v, _ = _tilted_rows(log_qh, d, lam)
        return math.fsum((Qx[:, None] * np.exp(log_v) * d)[live].ravel())

    scale = model.max_distortion
    lam_cap = controls.lambda_cap_factor / scale
    lo, f_lo = 0.0, d0 - delta
    hi = 1.0 / scale
    f_hi = achieved(hi) - delta
    evals = 1
    while f_hi > 0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        if hi > lam_cap:
            # budget sits numerically on the limit; its witness is feasible
            res = limit_result()
            res.iterations = evals
            return res
        f_hi = achieved(hi) - delta
        evals += 1
    lam, evals, converged = _illinois(achieved, delta, lo, f_lo, hi, f_hi, evals, scale)
    log_v, log_z = _tilted_rows(log_qh, d, lam)
    V = np.exp(log_v)
    value = mismatched_objective(Qx, V, Qxh)
    dual = -math.fsum(Qx[live] * log_z[live]) - lam * delta
    residual = max(0.0, achieved(lam) - delta)
    return RDResult(value, V, float(lam), evals, converged, residual, dual)


# -- rate-distortion function -----------------------------------------------

def _log_mixture_oracle(q, a):
    """``f(x) = -sum_k q_k log (a x)_k`` with gradient and Hessian."""
    def oracle(x):
        z = a @ x
        if np.any(z <= 0):
            return math.inf, None, None
        w = q / z
        g = -(w @ a)
        H = (a * (w / z)[:, None]).T @ a
        return -float(q @ np.log(z)), g, H
    return oracle


def _min_log_mixture(q, a, start, controls: SolverControls):
    """Minimise ``-sum_x q_x log (a qh)_x`` over reproduction laws.

    This is the fixed-slope Blahut-Arimoto problem; it is solved by active-set
    Newton and certified by the Frank-Wolfe gap ``max_j c_j - 1``.  Returns
    ``(qh, value, lower, iterations)``.
    """
    sol = minimize_on_simplex(_log_mixture_oracle(q, a), start,
                              gap_tol=controls.gap_tol, max_iter=controls.max_iter)
    return sol.x, sol.value, sol.lower, sol.iterations


def rate_distortion(Qx, model: DistortionModel, controls: SolverControls = DEFAULT_CONTROLS) -> RDResult:
    """``R(Q|delta)``: Blahut-Arimoto at fixed slope, bisection on the slope.

    The final output law is handed to :func:`mismatched_rd`, whose witness is
    feasible for the exact budget, so ``value`` is an achievable rate and
    ``lower_bound`` the best dual bound met along the search.
    """
    Qx = check_pmf(Qx, "Q_X")
    d = model.d
    if d.shape[0] != Qx.size:
        raise DimensionMismatch("source law and distortion matrix disagree")
    delta = model.delta
    live = Qx > 0
    q = Qx[live]
    dl = d[live]
    m = d.shape[1]

    col_cost = np.array([math.fsum(q * dl[:, j]) for j in range(m)])
    if col_cost.min() <= delta:
        j = int(np.argmin(col_cost))
        V = np.zeros(d.shape)
        V[:, j] = 1.0
        return RDResult(0.0, V, 0.0, 0, True, 0.0, 0.0)

    dmin = dl.min(axis=1)
    d_min = math.fsum(q * dmin)
    total_iter = 0
    if d_min >= delta:
        # only nearest-neighbour channels are feasible
        a = (dl == dmin[:, None]).astype(float)
        qh, _, lower, it = _min_log_mixture(q, a, np.full(m, 1.0 / m), controls)
        total_iter += it
        res = mismatched_rd(Qx, qh, model, controls)
        return RDResult(res.value, res.witness_channel, math.inf, total_iter,
                        res.value - lower <= 1e-9, res.residual, lower, {"output_law": qh})

    shift = dmin[:, None]
    scale = model.max_distortion
    lam_cap = controls.lambda_cap_factor / scale
    qh = np.full(m, 1.0 / m)
    best_lower = -math.inf

    def solve(lam, start):
        nonlocal total_iter, best_lower
        start = 0.999 * start + 0.001 / m
        a = np.exp(-lam * (dl - shift))
        qh_l, _, low, it = _min_log_mixture(q, a, start, controls)
        total_iter += it
        # undo the row shift: F(lam) gains lam * d_min
        best_lower = max(best_lower, low + lam * d_min - lam * delta)
        v = a * qh_l[None, :]
        v /= v.sum(axis=1, keepdims=True)
        return qh_l, math.fsum((q[:, None] * v * dl).ravel())

    lo, hi = 0.0, 1.0 / scale
    qh, dist = solve(hi, qh)
    while dist > delta and hi < lam_cap:
        lo, hi = hi, hi * 2.0
        qh, dist = solve(hi, qh)
    hi_qh = qh
    for _ in range(200):
        if hi - lo <= 1e-12 * hi:
            break
        mid = 0.5 * (lo + hi)
        qh_mid, dist = solve(mid, hi_qh)
        if dist > delta:
            lo = mid
        else:
            hi, hi_qh = mid, qh_mid
    res = mismatched_rd(Qx, hi_qh, model, controls)
    converged = res.value - best_lower <= 1e-9
    return RDResult(res.value, res.witness_channel, hi, total_iter, converged,
                    res.residual, best_lower, {"output_law": hi_qh})


@dataclass
class MinIdentityReport:
    min_value: float
    rd_value: float
    output_law: np.ndarray
    iterations: int
    converged: bool
    lower_bound: float = -math.inf
    method: str = "newton"

    @property
    def gap(self) -> float:
        return self.min_value - self.rd_value


def _mismatched_oracle(Qx, model, controls):
    """Value, gradient and envelope Hessian of ``qh -> R(Q, qh | delta)``.

    With ``lam`` the optimal slope and ``G`` the dual function, the Hessian
    is ``G_qq + G_ql G_lq / |G_ll|`` (implicit function theorem on the
    stationarity condition in ``lam``).
    """
    d = model.d
    live = Qx > 0
    q = Qx[live]
    dl = d[live]

    def oracle(qh):
        res = mismatched_rd(Qx, qh, model, controls)
        if res.is_infinite:
            return math.inf, None, None
        lam = res.lagrange_lambda
        m = qh.size
        if lam == 0:
            return res.value, np.zeros(m), np.zeros((m, m))
        if math.isinf(lam):
            ds = np.where(qh[None, :] > 0, dl, np.inf)
            a = (ds == ds.min(axis=1)[:, None]).astype(float)
        else:
            a = np.exp(-lam * (dl - dl.min(axis=1)[:, None]))
        z = a @ qh
        w = q / z
        g = -(w @ a)
        H = (a * (w / z)[:, None]).T @ a
        if math.isfinite(lam):
            v = a * qh[None, :] / z[:, None]
            mean_d = np.sum(v * dl, axis=1)
            var_d = np.sum(v * (dl - mean_d[:, None]) ** 2, axis=1)
            curv = float(q @ var_d)
            if curv > 0:
                u = ((w[:, None] * a) * (dl - mean_d[:, None])).sum(axis=0)
                H = H + np.outer(u, u) / curv
        return res.value, g, H

    return oracle


def verify_min_identity(Qx, model: DistortionModel, controls: SolverControls = DEFAULT_CONTROLS,
                        start=None, method: str = "newton") -> MinIdentityReport:
    """Minimise the mismatched function over reproduction laws and compare.

    ``method="alternating"`` alternates between the optimal channel for the
    current law and that channel's output marginal, stopping after
    ``patience`` consecutive value changes below ``value_tol``.  It slows to
    a crawl when a reproduction symbol is about to leave the optimal support,
    so the default ``"newton"`` minimises the same convex function directly
    and certifies the result with a Frank-Wolfe gap.
    """
    Qx = check_pmf(Qx, "Q_X")
    m = model.shape[1]
    qh = np.full(m, 1.0 / m) if start is None else check_pmf(start, "start")
    rd = rate_distortion(Qx, model, controls)
    if method == "newton":
        oracle = _mismatched_oracle(Qx, model, controls)
        if not math.isfinite(oracle(qh)[0]):
            qh = rd.extras.get("output_law", Qx @ rd.witness_channel)
        sol = minimize_on_simplex(oracle, qh, gap_tol=controls.gap_tol,
                                  max_iter=min(controls.max_iter, 1000))
        return MinIdentityReport(sol.value, rd.value, sol.x, sol.iterations,
                                 sol.converged, sol.lower, method)
    if method != "alternating":
        raise ValueError(f"unknown method {method!r}")
    prev = math.inf
    calm = 0
    value = math.inf
    for it in range(1, controls.max_iter + 1):
        res = mismatched_rd(Qx, qh, model, controls)
        value = res.value
        calm = calm + 1 if abs(prev - value) < controls.value_tol else 0
        if calm >= controls.patience:
            break
        prev = value
        qh = Qx @ res.witness_channel
    else:
        raise NonConvergence("alternating minimisation hit the iteration cap",
                             certificate=value)
    return MinIdentityReport(value, rd.value, qh, it, True, method=method)
