"""Exponents of the guessing moments of i.i.d. and synchronous strategies.

Everything here is computed through the slope ``lam`` of the distortion
constraint.  For a reproduction law ``qh`` put

    Z_x(lam) = sum_xh qh(xh) exp(-lam (d(x, xh) - delta))
    H(qh, lam) = log sum_x P(x) Z_x(lam) ** (-rho)

Writing the mismatched rate as a supremum over ``lam`` and doing the
maximisation over source laws in closed form (Gibbs variational principle):

    max_Q [rho R(Q, qh | delta) - D(Q || P)] = sup_{lam >= 0} H(qh, lam)

with maximiser ``Q*(x) ~ P(x) Z_x(lam*) ** (-rho)``.  ``H`` is convex in
``qh``, so the i.i.d. exponent ``min_qh sup_lam H`` is a convex program, while
the synchronous exponent equals ``sup_lam min_qh H``.  The penalty is the
gap between the two orders of optimisation.

The direct maximisation over ``Q`` (with :func:`mismatched_rd` inside) is kept
in :func:`primal_strategy_exponent` as an independent check.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog, minimize, minimize_scalar
from scipy.special import logsumexp

from ._simplex import minimize_on_simplex
from .distortion import DistortionModel, check_pmf
from .errors import DimensionMismatch, InfiniteExponent, InstanceTooLarge, NonConvergence
from .moments import _check_rho
from .rd import DEFAULT_CONTROLS, SolverControls, divergence, mismatched_rd, rate_distortion

ALPHABET_CAP = 12
_GRID_DECADES = (-3.0, 6.0)


@dataclass
class ExponentReport:
    value: float
    inner_witness: np.ndarray | None
    outer_witness: np.ndarray | None
    lagrange_lambda: float = math.nan
    lower_bound: float = -math.inf
    upper_bound: float = math.inf
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def bracket(self) -> float:
        return self.upper_bound - self.lower_bound


class _Problem:
    """Arrays shared by every evaluation for one ``(P, model, rho)``."""

    def __init__(self, P, model: DistortionModel, rho: float, cap: int = ALPHABET_CAP):
        _check_rho(rho)
        P = check_pmf(P, "P_X")
        if model.shape[0] != P.size:
            raise DimensionMismatch("source law and distortion matrix disagree")
        if max(model.shape) > cap:
            raise InstanceTooLarge(f"alphabets {model.shape} exceed the cap {cap}")
        self.P = P
        self.live = P > 0
        self.logp = np.log(P[self.live])
        self.d = model.d[self.live]
        self.delta = model.delta
        self.dd = self.d - self.delta
        self.rho = float(rho)
        self.model = model
        self.m = model.shape[1]
        spread = float(self.d.max() - self.d.min())
        self.lam_unit = 1.0 / spread if spread > 0 else 1.0
        # rows whose nearest reproduction sits exactly on the threshold
        dmin = self.d.min(axis=1)
        self.nearest = self.d == dmin[:, None]
        self.on_edge = dmin == self.delta

    # -- H and its derivatives ------------------------------------------------

    def log_z(self, qh, lam):
        with np.errstate(divide="ignore"):
            log_qh = np.log(qh)
        return logsumexp(log_qh[None, :] - lam * self.dd, axis=1)

    def h_grid(self, qh, lams):
        """``H(qh, lam)`` for a vector of finite ``lam``."""
        with np.errstate(divide="ignore"):
            log_qh = np.log(qh)
        log_z = logsumexp(log_qh[None, None, :] - lams[:, None, None] * self.dd[None], axis=2)
        return logsumexp(self.logp[None, :] - self.rho * log_z, axis=1)

    def h_slope(self, qh, lam):
        """``dH/dlam``: rho times the tilted excess distortion."""
        log_z = self.log_z(qh, lam)
        expo = self.logp - self.rho * log_z
        w = np.exp(expo - logsumexp(expo))
        v = qh[None, :] * np.exp(-lam * self.dd - log_z[:, None])
        return self.rho * float(w @ np.sum(v * self.dd, axis=1))

    def h_limit(self, qh):
        """``lim_{lam -> inf} H(qh, lam)`` with the matching gradient data."""
        supp = qh > 0
        ds = np.where(supp[None, :], self.d, np.inf)
        dmin = ds.min(axis=1)
        if np.any(dmin > self.delta):
            return math.inf, None
        rel = dmin == self.delta
        if not rel.any():
            return -math.inf, None
        near = (ds == dmin[:, None]) & supp[None, :]
        mass = np.where(near, qh[None, :], 0.0).sum(axis=1)
        expo = self.logp[rel] - self.rho * np.log(mass[rel])
        return float(logsumexp(expo)), (rel, near, mass, expo)

    def derivs(self, qh, lam):
        """Value, ``qh``-gradient, ``qh``-Hessian, ``dH/dlam``,
        ``d2H/dlam2`` and the mixed derivative, at finite ``lam``."""
        rho = self.rho
        log_z = self.log_z(qh, lam)
        expo = self.logp - rho * log_z
        f = float(logsumexp(expo))
        w = np.exp(expo - f)
        # r = a / Z; only unsupported coordinates can get near the clip
        r = np.exp(np.minimum(-lam * self.dd - log_z[:, None], 300.0))
        g = -rho * (w @ r)
        Hqq = rho * (rho + 1.0) * (r * w[:, None]).T @ r - np.outer(g, g)
        v = r * qh[None, :]
        mean_d = np.sum(v * self.dd, axis=1)
        var_d = np.sum(v * (self.dd - mean_d[:, None]) ** 2, axis=1)
        e1 = rho * mean_d
        h_l = float(w @ e1)
        h_ll = float(w @ (-rho * var_d) + w @ e1**2 - h_l**2)
        u = ((w * e1)[:, None] * (-rho * r - g[None, :])).sum(axis=0)
        u += rho * ((w[:, None] * r) * (self.dd - mean_d[:, None])).sum(axis=0)
        return f, g, Hqq, h_l, h_ll, u

    def limit_derivs(self, qh):
        f, data = self.h_limit(qh)
        if data is None:
            return f, None, None
        rel, near, mass, expo = data
        rho = self.rho
        w = np.exp(expo - f)
        r = near[rel] / mass[rel][:, None]
        g = -rho * (w @ r)
        Hqq = rho * (rho + 1.0) * (r * w[:, None]).T @ r - np.outer(g, g)
        return f, g, Hqq

    def gibbs(self, qh, lam):
        """Maximising source law ``Q*`` at ``(qh, lam)`` on the full alphabet."""
        out = np.zeros(self.P.size)
        if math.isinf(lam):
            f, data = self.h_limit(qh)
            rel, _, _, expo = data
            inner = np.zeros(rel.size)
            inner[rel] = np.exp(expo - f)
        else:
            expo = self.logp - self.rho * self.log_z(qh, lam)
            inner = np.exp(expo - logsumexp(expo))
        out[self.live] = inner
        return out

    # -- sup over lam ---------------------------------------------------------

    def lam_grid(self, controls: SolverControls, points: int = 161):
        hi = math.log10(controls.lambda_cap_factor)
        lo = _GRID_DECADES[0]
        return np.concatenate([[0.0], self.lam_unit * np.logspace(lo, hi, points)])

    def sup_lambda(self, qh, controls: SolverControls = DEFAULT_CONTROLS):
        """``sup_{lam >= 0} H(qh, lam)`` and a maximising ``lam``.

        A log-spaced grid locates the candidate peaks (``H`` need not be
        concave in ``lam``); every one is refined by root-finding on ``dH/dlam``.
        The ``lam -> inf`` limit competes as its own candidate.
        """
        lim, _ = self.h_limit(qh)
        if lim == math.inf:
            return math.inf, math.inf
        lams = self.lam_grid(controls)
        vals = self.h_grid(qh, lams)
        best_val, best_lam = -math.inf, 0.0
        # a plateau counts once, at its right end
        peaks = [k for k in range(lams.size)
                 if (k == 0 or vals[k] >= vals[k - 1])
                 and (k == lams.size - 1 or vals[k] > vals[k + 1])]
        for k in peaks:
            lam, val = self._refine(qh, lams, k, vals[k])
            if val > best_val:
                best_val, best_lam = val, lam
        if lim > best_val:
            best_val, best_lam = lim, math.inf
        return float(best_val), best_lam

    def _refine(self, qh, lams, k, val):
        slope = lambda t: self.h_slope(qh, t)
        if k == 0:
            if slope(0.0) <= 0:
                return 0.0, float(val)
            lo, hi = 0.0, lams[1]
        elif k == lams.size - 1:
            return float(lams[k]), float(val)
        else:
            lo, hi = lams[k - 1], lams[k + 1]
        s_lo, s_hi = slope(lo), slope(hi)
        if s_lo > 0 > s_hi:
            lam = brentq(slope, lo, hi, xtol=1e-14 * hi, rtol=4 * np.finfo(float).eps)
        else:
            lam = lams[k]
        return float(lam), float(self.h_grid(qh, np.array([lam]))[0])

    def t_oracle(self, controls: SolverControls = DEFAULT_CONTROLS, record=None):
        """``qh -> sup_lam H`` with Danskin gradient and envelope Hessian.

        The point is first floored at ``controls.floor`` and renormalised, so
        every gradient is finite.  ``record`` collects ``(point, value,
        gradient)`` at the floored point; those are exact supporting cuts.
        """
        floor = controls.floor

        def oracle(qh):
            y = np.maximum(qh, floor)
            y /= y.sum()
            val, lam = self.sup_lambda(y, controls)
            if not math.isfinite(val):
                return math.inf, None, None
            if math.isinf(lam):
                f, g, H = self.limit_derivs(y)
            else:
                f, g, H, _, h_ll, u = self.derivs(y, lam)
                if lam > 0 and h_ll < 0:
                    H = H - np.outer(u, u) / h_ll
            if record is not None:
                record.append((y, val, g.copy()))
            return val, g, H
        return oracle

    def fixed_lambda_oracle(self, lam):
        """``qh -> H(qh, lam)`` (``lam`` may be ``inf``)."""
        if math.isinf(lam):
            return self.limit_derivs
        def oracle(qh):
            f, g, H, *_ = self.derivs(qh, lam)
            return f, g, H
        return oracle


# -- the i.i.d. strategy exponent -------------------------------------------

def strategy_objective(Q, P, Qh, model: DistortionModel, rho: float,
                       controls: SolverControls = DEFAULT_CONTROLS) -> float:
    """``rho R(Q, Qh | delta) - D(Q || P)`` evaluated directly."""
    div = divergence(Q, P)
    if math.isinf(div):
        return -math.inf
    rate = mismatched_rd(Q, Qh, model, controls).value
    return rho * rate - div


def iid_strategy_exponent(P, Qh, model: DistortionModel, rho: float,
                          controls: SolverControls = DEFAULT_CONTROLS) -> ExponentReport:
    """Exponent of the rho-th moment of the i.i.d. strategy ``Qh``.

    Raises :class:`InfiniteExponent` when some source letter of positive
    probability has no supported reproduction within the threshold.
    """
    prob = _Problem(P, model, rho)
    Qh = check_pmf(Qh, "Q_Xh")
    if Qh.size != prob.m:
        raise DimensionMismatch("strategy and distortion matrix disagree")
    value, lam = prob.sup_lambda(Qh, controls)
    if value == math.inf:
        raise InfiniteExponent("the strategy misses the ball of a source letter")
    inner = prob.gibbs(Qh, lam)
    return ExponentReport(value, inner, Qh.copy(), lam, value, value, True,
                          {"method": "tilted dual"})


def simplex_grid(m: int, step: float) -> np.ndarray:
    """All pmfs on ``m`` points whose entries are multiples of ``step``."""
    N = int(round(1.0 / step))
    if not math.isclose(N * step, 1.0, rel_tol=1e-9):
        raise ValueError("step must divide 1")
    rows = []
    for cuts in itertools.combinations(range(N + m - 1), m - 1):
        parts = np.diff(np.concatenate([[-1], cuts, [N + m - 1]])) - 1
        rows.append(parts)
    return np.array(rows, dtype=float) / N


def primal_strategy_exponent(P, Qh, model: DistortionModel, rho: float,
                             controls: SolverControls = DEFAULT_CONTROLS,
                             grid_step: float | None = None) -> ExponentReport:
    """Direct maximisation over source laws, for cross-checking.

    The objective is a difference of convex functions of ``Q``, so it is
    searched globally: a simplex grid on the support of ``P`` (up to three
    letters) or random starts, each followed by a Nelder-Mead polish.
    """
    P = check_pmf(P, "P_X")
    live = np.flatnonzero(P > 0)
    k = live.size

    def embed(y):
        Q = np.zeros(P.size)
        Q[live] = y
        return Q

    def obj(y):
        return strategy_objective(embed(y), P, Qh, model, rho, controls)

    if k == 1:
        y = np.ones(1)
        return ExponentReport(obj(y), embed(y), np.asarray(Qh, float), diagnostics={"method": "primal"})
    rng = np.random.default_rng(controls.seed)
    if k <= 3:
        cands = simplex_grid(k, grid_step or controls.grid_step)
    else:
        cands = rng.dirichlet(np.ones(k), size=max(controls.restarts, 1) * 10)
    vals = np.array([obj(y) for y in cands])
    order = np.argsort(-vals, kind="stable")[: max(3, min(controls.restarts, 5))]

    def to_simplex(z):
        y = np.abs(np.concatenate([z, [1.0 - np.sum(z)]]))
        return y / y.sum()

    best_val, best_y = -math.inf, None
    for idx in order:
        y0 = cands[idx]
        res = minimize(lambda z: -obj(to_simplex(z)), y0[:-1], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        y = to_simplex(res.x)
        val = obj(y)
        if vals[idx] > val:
            y, val = y0, vals[idx]
        if val > best_val:
            best_val, best_y = val, y
    return ExponentReport(float(best_val), embed(best_y), np.asarray(Qh, float),
                          diagnostics={"method": "primal"})


def danskin_check(P, Qh, model: DistortionModel, rho: float, h: float = 1e-6,
                  controls: SolverControls = DEFAULT_CONTROLS) -> float:
    """Largest relative error between the Danskin gradient and central
    differences along the simplex directions ``e_i - e_j``.

    Meaningful away from the simplex boundary and away from kinks, where
    two slopes ``lam`` attain the supremum.
    """
    prob = _Problem(P, model, rho)
    Qh = check_pmf(Qh, "Q_Xh")
    oracle = prob.t_oracle(controls)
    _, g, _ = oracle(Qh)
    # directional derivatives near zero are compared on the gradient's scale
    scale = 1e-3 * max(float(np.abs(g).max()), 1e-12)
    worst = 0.0
    for i, j in itertools.permutations(range(prob.m), 2):
        e = np.zeros(prob.m)
        e[i], e[j] = 1.0, -1.0
        fd = (prob.sup_lambda(Qh + h * e, controls)[0]
              - prob.sup_lambda(Qh - h * e, controls)[0]) / (2 * h)
        an = float(g @ e)
        worst = max(worst, abs(fd - an) / max(abs(an), scale))
    return worst


@dataclass
class ConcavityProbe:
    segments: int
    violations: int
    worst_violation: float


def concavity_probe(P, Qh, model: DistortionModel, rho: float, rng: np.random.Generator,
                    segments: int = 50, controls: SolverControls = DEFAULT_CONTROLS) -> ConcavityProbe:
    """Midpoint test of the source-law objective along random segments.

    Reports how often ``f(mid) < (f(a) + f(b)) / 2`` beyond 1e-12.
    """
    P = check_pmf(P, "P_X")
    live = np.flatnonzero(P > 0)
    worst, bad = 0.0, 0
    for _ in range(segments):
        a = np.zeros(P.size)
        b = np.zeros(P.size)
        a[live] = rng.dirichlet(np.ones(live.size))
        b[live] = rng.dirichlet(np.ones(live.size))
        fa = strategy_objective(a, P, Qh, model, rho, controls)
        fb = strategy_objective(b, P, Qh, model, rho, controls)
        fm = strategy_objective(0.5 * (a + b), P, Qh, model, rho, controls)
        excess = 0.5 * (fa + fb) - fm
        if excess > 1e-12:
            bad += 1
            worst = max(worst, excess)
    return ConcavityProbe(segments, bad, worst)


# -- outer minimisation over strategies -------------------------------------

def _lp_model(cuts, m, center=None, radius=None):
    """Minimise the cutting-plane model ``max_k f_k + g_k (y - y_k)``."""
    A = np.array([np.concatenate([g, [-1.0]]) for _, _, g in cuts])
    b = np.array([float(g @ y) - f for y, f, g in cuts])
    bounds = [(0.0, 1.0)] * m + [(None, None)]
    if center is not None:
        bounds = [(max(0.0, c - radius), min(1.0, c + radius)) for c in center] + [(None, None)]
    c = np.zeros(m + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A, b_ub=b, A_eq=np.concatenate([np.ones(m), [0.0]])[None, :],
                  b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        return None, -math.inf
    y = np.maximum(res.x[:m], 0.0)
    return y / y.sum(), float(res.x[-1])


def _cutting_plane(fun, cuts, tol, max_iter=300):
    """Kelley's method with an alternating trust region.

    ``fun(y) -> (y_eval, f, g)`` returns the point actually evaluated with
    the value and a subgradient of a convex function there.
    ``cuts`` holds ``(y, f, g)`` triples already known.  Returns the best
    point, its value, the global lower bound and the iteration count.
    """
    m = cuts[0][0].size
    best = min(range(len(cuts)), key=lambda k: cuts[k][1])
    y_best, f_best = cuts[best][0], cuts[best][1]
    radius = 0.25
    lower = -math.inf
    for it in range(max_iter):
        y_free, lower = _lp_model(cuts, m)
        if f_best - lower <= tol:
            return y_best, f_best, lower, it
        if it % 2 == 0 or y_free is None:
            y_new, t_model = _lp_model(cuts, m, y_best, radius)
        else:
            y_new, t_model = y_free, lower
        if y_new is None:
            break
        y_new, f_new, g_new = fun(y_new)
        if not math.isfinite(f_new):
            radius *= 0.5
            continue
        cuts.append((y_new, f_new, g_new))
        if f_new < f_best:
            if f_best - f_new >= 0.5 * (f_best - t_model):
                radius = min(1.0, 2.0 * radius)
            y_best, f_best = y_new, f_new
        elif it % 2 == 0:
            radius = max(radius * 0.5, 1e-9)
    return y_best, f_best, lower, max_iter


def _seeds(m, controls: SolverControls, extra=()):
    rng = np.random.default_rng(controls.seed)
    seeds = [np.full(m, 1.0 / m)]
    seeds += [np.asarray(s, float) for s in extra]
    seeds += list(rng.dirichlet(np.ones(m), size=controls.restarts))
    return seeds


def optimal_iid_exponent(P, model: DistortionModel, rho: float,
                         controls: SolverControls = DEFAULT_CONTROLS, start=None,
                         cap: int = ALPHABET_CAP) -> ExponentReport:
    """Best exponent over i.i.d. strategies, with a certified bracket.

    The function ``qh -> sup_lam H`` is convex; it is minimised by
    active-set Newton (Danskin gradient, envelope Hessian) from the best of
    several seeds.  Every evaluated point contributes a supporting cut and
    the cutting-plane linear program gives the lower end of the bracket;
    Kelley iterations close it when the Newton phase stalls at a kink.
    """
    prob = _Problem(P, model, rho, cap)
    m = prob.m
    record: list = []
    oracle = prob.t_oracle(controls, record)
    seeds = _seeds(m, controls, [] if start is None else [start])
    seed_vals = [oracle(s)[0] for s in seeds]
    x0 = seeds[int(np.argmin(seed_vals))]
    sol = minimize_on_simplex(oracle, x0, gap_tol=1e-12, max_iter=40)
    cuts = [c for c in record if math.isfinite(c[1])]

    def fun(y):
        n = len(record)
        oracle(y)
        return record[-1] if len(record) > n else (y, math.inf, None)

    y_best, f_best, lower, kelley_it = _cutting_plane(fun, cuts, controls.bracket_tol)
    value, lam = prob.sup_lambda(y_best, controls)
    report = ExponentReport(
        value, prob.gibbs(y_best, lam), y_best, lam, lower, value,
        value - lower <= controls.bracket_tol,
        {"newton_iterations": sol.iterations, "kelley_iterations": kelley_it,
         "evaluations": len(record)},
    )
    if not report.converged:
        raise NonConvergence("i.i.d. exponent bracket did not close",
                             residual=report.bracket, certificate=report)
    return report


def synchronous_exponent(P, model: DistortionModel, rho: float,
                         controls: SolverControls = DEFAULT_CONTROLS,
                         cap: int = ALPHABET_CAP) -> ExponentReport:
    """``max_Q [rho R(Q | delta) - D(Q || P)]`` as ``sup_lam min_qh H``.

    The inner convex minimisation is solved by active-set Newton with
    warm starts along a grid in ``lam``; the best grid point is refined by
    bounded Brent search and compared with the ``lam -> inf`` limit.
    """
    prob = _Problem(P, model, rho, cap)
    m = prob.m
    tol = 1e-13
    state = {"x": np.full(m, 1.0 / m)}
    cache: dict = {}

    def phi(lam):
        if lam in cache:
            return cache[lam]
        x0 = 0.9 * state["x"] + 0.1 / m
        sol = minimize_on_simplex(prob.fixed_lambda_oracle(lam), x0, gap_tol=tol, max_iter=500)
        state["x"] = sol.x
        cache[lam] = sol
        return sol

    lams = prob.lam_grid(controls, points=91)
    # H(q, lam) bounds min_q H from above; skip grid points it rules out
    probes = [np.full(m, 1.0 / m)]
    best_val, k, best = -math.inf, 0, None
    sols = {}
    for i, lam in enumerate(lams):
        if best is not None:
            bound = min(prob.h_grid(q, lams[i:i + 1])[0] for q in probes + [state["x"]])
            if bound < best_val:
                continue
        sol = phi(float(lam))
        sols[i] = sol
        if sol.value > best_val:
            best_val, k, best = sol.value, i, sol
            probes = [np.full(m, 1.0 / m), sol.x]
    lam_star = float(lams[k])
    if 0 < k < lams.size - 1:
        res = minimize_scalar(lambda t: -phi(float(t)).value, bounds=(lams[k - 1], lams[k + 1]),
                              method="bounded", options={"xatol": 1e-12 * lams[k + 1]})
        cand = phi(float(res.x))
        if cand.value > best.value:
            lam_star, best = float(res.x), cand
    elif k == 0:
        cand = phi(0.0)
        lam_star, best = 0.0, cand
    if prob.on_edge.any():
        lim = minimize_on_simplex(prob.fixed_lambda_oracle(math.inf), np.full(m, 1.0 / m),
                                  gap_tol=tol, max_iter=500)
        if lim.value >= best.value:
            lam_star, best = math.inf, lim
    inner = prob.gibbs(best.x, lam_star)
    return ExponentReport(best.value, inner, best.x, lam_star, best.lower, best.value,
                          best.converged, {"grid_points": lams.size, "evaluations": len(cache)})


def primal_synchronous_exponent(P, model: DistortionModel, rho: float,
                                controls: SolverControls = DEFAULT_CONTROLS,
                                grid_step: float = 1e-3) -> ExponentReport:
    """Grid search of ``rho R(Q | delta) - D(Q || P)`` over source laws
    (binary or ternary support only)."""
    P = check_pmf(P, "P_X")
    live = np.flatnonzero(P > 0)
    if live.size > 3:
        raise InstanceTooLarge("grid oracle handles at most three source letters")
    best_val, best_Q = -math.inf, None
    for y in simplex_grid(live.size, grid_step):
        Q = np.zeros(P.size)
        Q[live] = y
        val = rho * rate_distortion(Q, model, controls).value - divergence(Q, P)
        if val > best_val:
            best_val, best_Q = val, Q
    return ExponentReport(best_val, best_Q, None, diagnostics={"method": "grid"})


def iid_penalty(P, model: DistortionModel, rho: float,
                controls: SolverControls = DEFAULT_CONTROLS) -> float:
    """Loss in exponent from restricting to i.i.d. strategies."""
    sync = synchronous_exponent(P, model, rho, controls)
    iid = optimal_iid_exponent(P, model, rho, controls, start=sync.outer_witness)
    return iid.value - sync.value


def uncertainty_exponent(sources, model: DistortionModel, rho: float,
                         controls: SolverControls = DEFAULT_CONTROLS) -> ExponentReport:
    """Best i.i.d. exponent against the worst source of a finite class.

    ``qh -> max_P sup_lam H_P`` is convex but kinked where the worst source
    changes, so it is minimised by the cutting-plane method, seeded with the
    optimal strategy of every member.
    """
    unique = []
    for P in sources:
        P = check_pmf(P, "P_X")
        if not any(np.array_equal(P, U) for U in unique):
            unique.append(P)
    if not unique:
        raise ValueError("the source class is empty")
    if len(unique) == 1:
        return optimal_iid_exponent(unique[0], model, rho, controls)
    probs = [_Problem(P, model, rho) for P in unique]
    oracles = [p.t_oracle(controls) for p in probs]
    m = probs[0].m

    def fun(y):
        y = np.maximum(y, controls.floor)
        y /= y.sum()
        best_f, best_g = -math.inf, None
        for orc in oracles:
            f, g, _ = orc(y)
            if f > best_f:
                best_f, best_g = f, g
        return y, best_f, best_g

    extra = [optimal_iid_exponent(P, model, rho, controls).outer_witness for P in unique]
    cuts = []
    for s in _seeds(m, controls, extra):
        y, f, g = fun(s)
        if math.isfinite(f):
            cuts.append((y, f, g))
    y, value, lower, it = _cutting_plane(fun, cuts, controls.bracket_tol, max_iter=600)
    worst = max(range(len(probs)), key=lambda k: probs[k].sup_lambda(y, controls)[0])
    val_k, lam = probs[worst].sup_lambda(y, controls)
    report = ExponentReport(value, probs[worst].gibbs(y, lam), y, lam, lower, value,
                            value - lower <= controls.bracket_tol,
                            {"kelley_iterations": it, "worst_source": worst})
    if not report.converged:
        raise NonConvergence("uncertainty exponent bracket did not close",
                             residual=report.bracket, certificate=report)
    return report
