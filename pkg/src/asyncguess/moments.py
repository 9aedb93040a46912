"""One-shot randomized guessing.

With strategy ``P`` over reproductions, the guesswork for a source symbol
``x`` is geometric with success probability ``q_x = P(A(x))``.  This module
computes ``q_x``, the binomial-smoothed moment ``V = q_x**-rho``, the true
moment ``G = E[K**rho]``, the tilted strategy, and the one-shot bounds built
from the greedy quantizer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, gammasgn, logsumexp

from .distortion import BallIndex, DistortionModel, FiniteSource, build_ball_index, check_pmf
from .errors import InstanceTooLarge, RhoNonpositive, RhoTooLarge, ZeroBallMass
from .quantizer import Quantizer, distortion_renyi

RHO_MAX = 12
LOG_OVERFLOW = 700.0


def _eulerian_table(n_max: int) -> list[list[int]]:
    # A(n, k): permutations of n with k ascents; A(n,k) = (k+1)A(n-1,k) + (n-k)A(n-1,k-1)
    table = [[1]]
    for n in range(1, n_max + 1):
        prev = table[-1]
        row = []
        for k in range(n):
            a = (k + 1) * prev[k] if k < len(prev) else 0
            b = (n - k) * prev[k - 1] if k >= 1 else 0
            row.append(a + b)
        table.append(row)
    return table


# E[K^rho] = A_rho(1 - q) / q^rho, A_rho the Eulerian polynomial; this is the
# rho-th derivative of the geometric MGF at 0, tabulated once at import.
EULERIAN = _eulerian_table(RHO_MAX)


def _check_rho(rho):
    if not rho > 0 or not math.isfinite(rho):
        raise RhoNonpositive(f"rho must be positive, got {rho}")


def log_factorial(rho: float) -> float:
    """``log Gamma(rho + 1)``, i.e. ``log rho!`` for integers."""
    return float(gammaln(rho + 1.0))


def tilted_strategy(base, rho: float) -> np.ndarray:
    """Normalised ``base ** (1 / (1 + rho))``; zero atoms stay zero."""
    _check_rho(rho)
    base = check_pmf(base, "base")
    out = np.zeros_like(base)
    pos = base > 0
    logs = np.log(base[pos]) / (1.0 + rho)
    out[pos] = np.exp(logs - logsumexp(logs))
    return out


def ball_mass(strategy, balls: BallIndex, x: int) -> float:
    return math.fsum(np.asarray(strategy, dtype=float)[balls.forward[x]])


def ball_masses(strategy, balls: BallIndex) -> np.ndarray:
    return np.array([ball_mass(strategy, balls, x) for x in range(balls.forward.shape[0])])


def _check_q(q):
    if not q > 0:
        raise ZeroBallMass()
    if q > 1 + 1e-12:
        raise ValueError(f"ball mass must lie in (0, 1], got {q}")


def log_v_moment(q: float, rho: float) -> float:
    _check_q(q)
    _check_rho(rho)
    return -rho * math.log(min(q, 1.0))


def v_moment(q: float, rho: float) -> float:
    """``V_rho = q**-rho`` (``inf`` when the value overflows a double)."""
    lv = log_v_moment(q, rho)
    return math.exp(lv) if lv < LOG_OVERFLOW else math.inf


def generalized_binomial(a: float, b: float) -> float:
    """``Gamma(a+1) / (Gamma(b+1) Gamma(a-b+1))``.

    Integer ``b >= 0`` uses the falling-factorial product, which is also valid
    at negative integer ``a``; otherwise log-Gamma with sign tracking.
    """
    if float(b).is_integer() and b >= 0:
        k = int(b)
        num = 1.0
        for i in range(k):
            num *= (a - i) / (i + 1)
        return num
    terms = (a + 1.0, b + 1.0, a - b + 1.0)
    # 1/Gamma vanishes at the poles of the denominator
    if any(t <= 0 and float(t).is_integer() for t in terms[1:]):
        return 0.0
    sign = gammasgn(terms[0]) * gammasgn(terms[1]) * gammasgn(terms[2])
    return float(sign * math.exp(gammaln(terms[0]) - gammaln(terms[1]) - gammaln(terms[2])))


def _geometric_tail(log_term, ratio_bound, k_next):
    """Bound on sum_{k >= k_next} t_k given t_{k_next} and a ratio bound < 1."""
    return math.exp(log_term(k_next)) / (1.0 - ratio_bound)


def v_moment_series(q: float, rho: float, tol: float = 1e-13, chunk: int = 4096) -> float:
    """``sum_m C(m+rho-1, rho) (1-q)^(m-1) q`` with certified truncation.

    Independent check of ``V = q**-rho``.  For m >= M the term ratio
    ``(1 + rho/m)(1-q)`` is at most ``(1 + rho/M)(1-q)``, so once that bound
    drops below one the tail is dominated by a geometric series.
    """
    _check_q(q)
    _check_rho(rho)
    if q >= 1.0:
        return 1.0
    log_r = math.log1p(-q)
    lg_rho1 = gammaln(rho + 1.0)

    def log_term(m):
        return gammaln(m + rho) - lg_rho1 - gammaln(m) + (m - 1) * log_r + math.log(q)

    total = []
    m0 = 1
    while True:
        m = np.arange(m0, m0 + chunk, dtype=float)
        logs = gammaln(m + rho) - lg_rho1 - gammaln(m) + (m - 1) * log_r + math.log(q)
        total.extend(np.exp(logs).tolist())
        m0 += chunk
        ratio = (1.0 + rho / m0) * (1.0 - q)
        if ratio < 1.0 and _geometric_tail(log_term, ratio, m0) < tol:
            return math.fsum(total)


def g_moment_closed_form(q: float, rho: int) -> float:
    """Textbook first four moments of the geometric law on {1, 2, ...}."""
    p = q
    if rho == 1:
        return 1.0 / p
    if rho == 2:
        return (2.0 - p) / p**2
    if rho == 3:
        return (p**2 - 6.0 * p + 6.0) / p**3
    if rho == 4:
        return (-(p**3) + 14.0 * p**2 - 36.0 * p + 24.0) / p**4
    raise RhoTooLarge("closed forms exist for rho <= 4 only")


def eulerian_factor(q: float, rho: int) -> float:
    """``A_rho(1 - q)``; lies in [1, rho!] and equals ``G_rho * q**rho``."""
    t = 1.0 - q
    acc = 0.0
    for c in reversed(EULERIAN[rho]):
        acc = acc * t + c
    return acc


def _check_int_rho(rho, rho_max):
    if isinstance(rho, float) and rho.is_integer():
        rho = int(rho)
    if not isinstance(rho, (int, np.integer)) or rho < 1:
        raise RhoNonpositive(f"rho must be a positive integer, got {rho}")
    if rho > min(rho_max, RHO_MAX):
        raise RhoTooLarge(f"rho={rho} exceeds rho_max={min(rho_max, RHO_MAX)}")
    return int(rho)


def log_g_moment_integer(q: float, rho: int, rho_max: int = RHO_MAX) -> float:
    rho = _check_int_rho(rho, rho_max)
    _check_q(q)
    q = min(q, 1.0)
    return math.log(eulerian_factor(q, rho)) - rho * math.log(q)


def g_moment_integer(q: float, rho: int, rho_max: int = RHO_MAX) -> float:
    """Exact ``E[K**rho]`` for geometric ``K`` with success probability ``q``.

    Closed forms for rho <= 4, the Eulerian-polynomial expansion above.
    """
    rho = _check_int_rho(rho, rho_max)
    _check_q(q)
    q = min(q, 1.0)
    if rho <= 4:
        return g_moment_closed_form(q, rho)
    lg = log_g_moment_integer(q, rho, rho_max)
    return math.exp(lg) if lg < LOG_OVERFLOW else math.inf


def g_moment_series(q: float, rho: float, tol: float = 1e-12, chunk: int = 1 << 16) -> float:
    """``sum_k k^rho (1-q)^(k-1) q`` summed until a certified tail bound < ``tol``.

    For k > K the ratio of consecutive terms ``(1 + 1/k)^rho (1-q)`` is at most
    ``theta = (1 + 1/(K+1))^rho (1-q)``; when theta < 1 the tail from K+1 on is
    at most ``t_{K+1} / (1 - theta)``.  ``tol`` bounds only the truncation;
    floating rounding of the partial sum is kept at one ulp by ``math.fsum``.
    """
    _check_q(q)
    _check_rho(rho)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if q >= 1.0:
        return 1.0
    log_r = math.log1p(-q)
    log_q = math.log(q)
    parts = []
    k0 = 1
    while True:
        k = np.arange(k0, k0 + chunk, dtype=float)
        parts.extend(np.exp(rho * np.log(k) + (k - 1) * log_r + log_q).tolist())
        k0 += chunk
        theta = (1.0 + 1.0 / k0) ** rho * (1.0 - q)
        if theta < 1.0:
            tail = math.exp(rho * math.log(k0) + (k0 - 1) * log_r + log_q) / (1.0 - theta)
            if tail < tol:
                return math.fsum(parts)


def g_moment(q: float, rho: float, tol: float = 1e-12) -> float:
    """Exact for integer ``rho`` up to ``RHO_MAX``, certified series otherwise."""
    if float(rho).is_integer() and 1 <= rho <= RHO_MAX:
        return g_moment_integer(q, int(rho))
    return g_moment_series(q, rho, tol)


def log_g_moment(q: float, rho: float, tol: float = 1e-12) -> float:
    if float(rho).is_integer() and 1 <= rho <= RHO_MAX:
        return log_g_moment_integer(q, int(rho))
    return math.log(g_moment_series(q, rho, tol))


def geometric_moment_lower_bound(q: float, rho: float) -> float:
    """``max(((1-q)/q)^rho e^{-1/(1-q)}, 2^-rho e^-2 q^-rho)``; valid for q < 1/2."""
    _check_q(q)
    _check_rho(rho)
    first = ((1.0 - q) / q) ** rho * math.exp(-1.0 / (1.0 - q))
    second = 2.0**-rho * math.exp(-2.0) * q**-rho
    return max(first, second)


def geometric_moment_upper_envelope(q: float, rho: float) -> float:
    """Upper bound ``Gamma(rho+1) q^-rho (1 + eps(q))`` on ``E[K**rho]``.

    ``f(x) = x^rho r^(x-1)`` with ``r = 1-q`` is unimodal on [0, inf), so
    ``sum_{k>=1} f(k) <= int_0^inf f + max f``.  With ``L = -log r`` this gives
    ``(q/r) [Gamma(rho+1) L^-(rho+1) + (rho/(e L))^rho]``, and eps(q) is what
    that is relative to ``Gamma(rho+1) q^-rho``.
    """
    _check_q(q)
    _check_rho(rho)
    if q >= 1.0:
        return 1.0
    r = 1.0 - q
    L = -math.log1p(-q)
    return (q / r) * (math.gamma(rho + 1.0) * L ** -(rho + 1.0) + (rho / (math.e * L)) ** rho)


def envelope_excess(q: float, rho: float) -> float:
    """``eps(q)`` of :func:`geometric_moment_upper_envelope`."""
    return geometric_moment_upper_envelope(q, rho) / (math.gamma(rho + 1.0) * q**-rho) - 1.0


@dataclass
class MomentReport:
    rho: float
    ball_mass: np.ndarray
    log_v: np.ndarray
    log_g: np.ndarray
    log_expected_v: float
    log_expected_g: float
    g_method: str
    strategy: np.ndarray
    log_bound_rhs: float | None = None
    log_factorial_rhs: float | None = None
    quantizer: Quantizer | None = None
    pushforward: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def expected_v(self) -> float:
        return math.exp(self.log_expected_v) if self.log_expected_v < LOG_OVERFLOW else math.inf

    @property
    def expected_g(self) -> float:
        return math.exp(self.log_expected_g) if self.log_expected_g < LOG_OVERFLOW else math.inf

    @property
    def integer_rho(self) -> bool:
        return float(self.rho).is_integer() and 1 <= self.rho <= RHO_MAX

    def sandwich_holds(self, slack: float = 1e-12) -> bool:
        """``E[V] <= E[G] <= rho! E[V]`` (log domain); integer rho only."""
        lv, lg = self.log_expected_v, self.log_expected_g
        return lv <= lg + slack and lg <= lv + log_factorial(self.rho) + slack

    @property
    def v_bound_slack(self) -> float | None:
        if self.log_bound_rhs is None:
            return None
        return self.log_bound_rhs - self.log_expected_v

    @property
    def g_bound_slack(self) -> float | None:
        if self.log_factorial_rhs is None:
            return None
        return self.log_factorial_rhs - self.log_expected_g


def expected_moments(
    source: FiniteSource, strategy, balls: BallIndex, rho: float, tol: float = 1e-12
) -> MomentReport:
    """Per-symbol and averaged ``V_rho`` and ``G_rho`` for a one-shot strategy."""
    _check_rho(rho)
    strategy = check_pmf(strategy, "strategy")
    pmf = source.pmf
    q = ball_masses(strategy, balls)
    n = len(pmf)
    log_v = np.full(n, np.inf)
    log_g = np.full(n, np.inf)
    integer = float(rho).is_integer() and 1 <= rho <= RHO_MAX
    for x in range(n):
        if q[x] <= 0:
            if pmf[x] > 0:
                raise ZeroBallMass(source.symbols[x])
            continue
        log_v[x] = log_v_moment(q[x], rho)
        log_g[x] = log_g_moment(q[x], rho, tol)
    live = pmf > 0
    log_p = np.log(pmf[live])
    # sort for a summation order independent of symbol order
    lev = float(logsumexp(np.sort(log_p + log_v[live])))
    leg = float(logsumexp(np.sort(log_p + log_g[live])))
    return MomentReport(
        rho=rho,
        ball_mass=q,
        log_v=log_v,
        log_g=log_g,
        log_expected_v=lev,
        log_expected_g=leg,
        g_method="eulerian" if integer else "series",
        strategy=strategy,
    )


def oneshot_achievability(source: FiniteSource, model: DistortionModel, rho: float) -> MomentReport:
    """Optimal quantizer, tilted pushforward strategy and both one-shot bounds.

    The quantizer is the one returned by :func:`distortion_renyi`: the greedy
    covering map unless an exhaustive search finds a better one.

    ``log_bound_rhs`` is ``rho * H^Delta_{1/(1+rho)}``; for integer rho
    ``log_factorial_rhs`` adds ``log rho!``.
    """
    _check_rho(rho)
    balls = build_ball_index(model)
    h_delta, quant = distortion_renyi(source, model, 1.0 / (1.0 + rho))
    pushforward = quant.pushforward(source.pmf, model.shape[1])
    strategy = tilted_strategy(pushforward, rho)
    report = expected_moments(source, strategy, balls, rho)
    report.quantizer = quant
    report.pushforward = pushforward
    report.log_bound_rhs = rho * h_delta
    if report.integer_rho:
        report.log_factorial_rhs = rho * h_delta + log_factorial(rho)
    return report


@dataclass
class SyncResult:
    value: float
    ordering: tuple
    log_lower_bound: float
    log_upper_bound: float

    @property
    def log_value(self) -> float:
        return math.log(self.value)

    def within_bracket(self, slack: float = 1e-12) -> bool:
        lv = self.log_value
        return self.log_lower_bound - slack <= lv <= self.log_upper_bound + slack


def sync_log_factor(n_src: int, n_rep: int) -> float:
    """``log(1 + ln M)`` with ``M = min(|X|, |Xh|)``: the list-size loss factor."""
    return math.log1p(math.log(min(n_src, n_rep)))


def sync_penalty_bound(rho: float, n_src: int, n_rep: int) -> float:
    """Upper bound on the log-moment cost of giving up synchronisation."""
    return log_factorial(rho) + rho * sync_log_factor(n_src, n_rep)


def optimal_sync_guesswork(
    source: FiniteSource, model: DistortionModel, rho: float, max_repro: int = 8
):
    """Best deterministic guessing order by exhaustive search.

    Returns a :class:`SyncResult`; ``ordering`` lists reproduction indices in
    the order they are guessed (lexicographically first among optimal ones).
    The bracket is ``rho*H - rho*log(1 + ln M) <= log E <= rho*H`` with
    ``H = H^Delta_{1/(1+rho)}``.
    """
    _check_rho(rho)
    n_src, n_rep = model.shape
    if n_rep > max_repro:
        raise InstanceTooLarge(f"{n_rep}! orderings exceed the enumeration limit")
    balls = build_ball_index(model)
    perms = np.array(list(itertools.permutations(range(n_rep))), dtype=np.int64)
    # position[k, xh] = 1-based guess index of xh under ordering k
    position = np.empty_like(perms)
    rows = np.arange(perms.shape[0])[:, None]
    position[rows, perms] = np.arange(1, n_rep + 1)
    pmf = source.pmf
    values = np.zeros(perms.shape[0])
    for x in range(n_src):
        if pmf[x] == 0:
            continue
        g = position[:, balls.forward[x]].min(axis=1).astype(float)
        values += pmf[x] * g**rho
    best = int(np.argmin(values))
    order = perms[best]
    # recompute the winner with an exactly rounded sum
    pos = np.empty(n_rep, dtype=np.int64)
    pos[order] = np.arange(1, n_rep + 1)
    value = math.fsum(
        pmf[x] * float(pos[balls.forward[x]].min()) ** rho for x in range(n_src) if pmf[x] > 0
    )
    h_delta, _ = distortion_renyi(source, model, 1.0 / (1.0 + rho))
    upper = rho * h_delta
    lower = upper - rho * sync_log_factor(n_src, n_rep)
    return SyncResult(value, tuple(int(v) for v in order), lower, upper)
