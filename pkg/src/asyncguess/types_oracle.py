"""Exact small-blocklength computations by the method of types.

Three independent routes give the probability that an i.i.d. block drawn
from ``Qh`` lands in the distortion ball of a source block:

* enumeration of every reproduction block, with the same left-to-right
  floating point accumulation as :func:`block_distortion`;
* dynamic programming over the cumulative distortion when the distortion
  matrix is integer valued after scaling (exact rationals or integer floats);
* the conditional-type census, whose feasible cells partition the ball.

Because ``Qh`` is i.i.d. and the distortion is additive, the ball
probability only depends on the type of the source block, which is what
makes exact block moments cheap.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .distortion import DistortionModel, check_pmf
from .errors import InstanceTooLarge, LengthMismatch, ZeroBallMass
from .exponents import iid_strategy_exponent
from .moments import _check_rho, log_factorial, log_g_moment, log_g_moment_integer, RHO_MAX
from .rd import DEFAULT_CONTROLS, SolverControls

TYPE_CAP = 10**7
ENUM_CAP = 10**7
_CHUNK = 1 << 18


# -- types --------------------------------------------------------------------

@dataclass(frozen=True)
class TypeClass:
    counts: tuple

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def pmf(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.n

    @property
    def log_size(self) -> float:
        """``log |T_Q|`` (multinomial coefficient)."""
        return float(gammaln(self.n + 1) - sum(gammaln(c + 1) for c in self.counts))

    @property
    def size(self) -> int:
        return _multinomial(self.counts)

    def representative(self) -> tuple:
        """The lexicographically smallest block of this type."""
        return tuple(a for a, c in enumerate(self.counts) for _ in range(c))

    def log_prob(self, P) -> float:
        """``log P^n(x)`` of any single block of this type."""
        total = 0.0
        for c, p in zip(self.counts, P):
            if c:
                if p == 0:
                    return -math.inf
                total += c * math.log(p)
        return total


def _multinomial(counts) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def _compositions(n: int, m: int):
    """Compositions of ``n`` into ``m`` parts, lexicographically descending."""
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, m - 1):
            yield (first,) + rest


def enumerate_types(n: int, alphabet_size: int, cap: int = TYPE_CAP) -> list[TypeClass]:
    if n < 1 or alphabet_size < 1:
        raise ValueError("blocklength and alphabet size must be positive")
    count = math.comb(n + alphabet_size - 1, alphabet_size - 1)
    if count > cap:
        raise InstanceTooLarge(f"{count} types exceed the cap {cap}")
    return [TypeClass(c) for c in _compositions(n, alphabet_size)]


def type_of(x_seq, alphabet_size: int) -> TypeClass:
    counts = [0] * alphabet_size
    for a in x_seq:
        counts[a] += 1
    return TypeClass(tuple(counts))


@dataclass(frozen=True)
class ConditionalType:
    """Joint counts ``counts[x][xh]`` over pairs; rows match the base type."""

    counts: tuple

    @property
    def row_counts(self) -> tuple:
        return tuple(sum(r) for r in self.counts)

    @property
    def column_counts(self) -> tuple:
        return tuple(sum(col) for col in zip(*self.counts))

    @property
    def size(self) -> int:
        """``|T_V(x)|``: product of one multinomial per source letter."""
        out = 1
        for row in self.counts:
            out *= _multinomial(row)
        return out

    @property
    def log_size(self) -> float:
        return float(sum(gammaln(sum(r) + 1) - sum(gammaln(c + 1) for c in r) for r in self.counts))

    def log_prob(self, Qh) -> float:
        """``log Qh^n(xh)`` of any single reproduction block in the cell."""
        total = 0.0
        for c, q in zip(self.column_counts, Qh):
            if c:
                if q == 0:
                    return -math.inf
                total += c * math.log(q)
        return total

    def conditional_entropy(self) -> float:
        """``H(V | P_x)`` of the empirical channel, in nats."""
        n = sum(self.row_counts)
        total = 0.0
        for row in self.counts:
            k = sum(row)
            for c in row:
                if c:
                    total -= c * math.log(c / k)
        return total / n


# -- integer scaling of the distortion ----------------------------------------

@dataclass(frozen=True)
class _IntegerForm:
    d: np.ndarray  # int64 scaled distortion
    limit: int     # largest feasible scaled total for the given n


def _integer_form(model: DistortionModel, n: int) -> _IntegerForm | None:
    """Scaled integer distortion with the exact feasibility threshold.

    Exact mode scales by the common denominator.  Float mode only qualifies
    when every entry is an integer; the threshold is then the largest total
    ``S`` with ``S / n <= delta`` under the same float division that
    :func:`block_distortion` performs.
    """
    if model.is_exact:
        entries = [v for row in model.exact_d for v in row] + [model.exact_delta]
        lcd = 1
        for v in entries:
            lcd = lcd * v.denominator // math.gcd(lcd, v.denominator)
        d = np.array([[int(v * lcd) for v in row] for row in model.exact_d], dtype=np.int64)
        limit = math.floor(n * model.exact_delta * lcd)
        return _IntegerForm(d, limit)
    d = model.d
    if not np.all(d == np.floor(d)) or d.max() * n >= 2**53:
        return None
    top = int(d.max()) * n
    limit = -1
    for s in range(top + 1):
        if float(s) / n <= model.delta:
            limit = s
        else:
            break
    return _IntegerForm(d.astype(np.int64), limit)


# -- ball probabilities -------------------------------------------------------

def _check_block(x_seq, model):
    x_seq = tuple(int(a) for a in x_seq)
    if not x_seq:
        raise LengthMismatch("source block must be nonempty")
    if min(x_seq) < 0 or max(x_seq) >= model.shape[0]:
        raise LengthMismatch("source block uses symbols outside the alphabet")
    return x_seq


def _log_ball_enumerate(x_seq, log_q, model: DistortionModel, cap: int) -> float:
    n = len(x_seq)
    m = model.shape[1]
    total = m**n
    if total > cap:
        raise InstanceTooLarge(f"{m}^{n} reproduction blocks exceed the cap {cap}")
    form = _integer_form(model, n) if model.is_exact else None
    rows = [model.d[a] for a in x_seq]
    pieces = []
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        dist = np.zeros(idx.size, dtype=np.int64 if form else float)
        logp = np.zeros(idx.size)
        for i in range(n):
            digit = (idx // m ** (n - 1 - i)) % m
            if form:
                dist += form.d[x_seq[i]][digit]
            else:
                dist += rows[i][digit]
            logp += log_q[digit]
        ok = dist <= form.limit if form else dist / n <= model.delta
        if ok.any():
            pieces.append(logsumexp(logp[ok]))
    return float(logsumexp(pieces)) if pieces else -math.inf


def _log_ball_dp(x_seq, log_q, form: _IntegerForm) -> float:
    if form.limit < 0:
        return -math.inf
    width = form.limit + 1
    state = np.full(width, -np.inf)
    state[0] = 0.0
    for a in x_seq:
        new = np.full(width, -np.inf)
        for j, c in enumerate(form.d[a]):
            if c >= width or log_q[j] == -np.inf:
                continue
            shifted = state[: width - c] + log_q[j]
            new[c:] = np.logaddexp(new[c:], shifted)
        state = new
    return float(logsumexp(state))


def log_ball_probability(x_seq, Qh, model: DistortionModel, method: str = "auto",
                         cap: int = ENUM_CAP) -> float:
    """``log Qh^n(A(x))`` for the block ``x_seq``.

    ``method`` is ``"enumerate"``, ``"dp"`` or ``"auto"`` (dynamic programming
    when the distortion is integral after scaling, enumeration otherwise).
    """
    x_seq = _check_block(x_seq, model)
    Qh = check_pmf(Qh, "Q_Xh")
    if Qh.size != model.shape[1]:
        raise LengthMismatch("strategy and distortion matrix disagree")
    with np.errstate(divide="ignore"):
        log_q = np.log(Qh)
    if method == "enumerate":
        return _log_ball_enumerate(x_seq, log_q, model, cap)
    form = _integer_form(model, len(x_seq))
    if method == "dp":
        if form is None:
            raise InstanceTooLarge("dynamic programming needs an integral distortion")
        return _log_ball_dp(x_seq, log_q, form)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if form is not None and (form.limit + 1) * len(x_seq) * model.shape[1] <= 10**9:
        return _log_ball_dp(x_seq, log_q, form)
    return _log_ball_enumerate(x_seq, log_q, model, cap)


def exact_ball_probability(x_seq, Qh, model: DistortionModel, method: str = "auto",
                           cap: int = ENUM_CAP) -> float:
    return math.exp(log_ball_probability(x_seq, Qh, model, method, cap))


# -- conditional-type census --------------------------------------------------

@dataclass(frozen=True)
class CensusCell:
    ctype: ConditionalType
    size: int
    feasible: bool


def conditional_type_census(x_seq, model: DistortionModel, cap: int = 10**6) -> list[CensusCell]:
    """Partition of all reproduction blocks by conditional type given ``x_seq``.

    Feasibility of a cell is decided on its total distortion: exactly in
    exact mode or for integer entries, otherwise with a correctly rounded sum.
    """
    x_seq = _check_block(x_seq, model)
    n = len(x_seq)
    n_src, m = model.shape
    base = type_of(x_seq, n_src).counts
    n_cells = 1
    for k in base:
        n_cells *= math.comb(k + m - 1, m - 1)
    if n_cells > cap:
        raise InstanceTooLarge(f"{n_cells} conditional types exceed the cap {cap}")
    form = _integer_form(model, n)
    per_row = [list(_compositions(k, m)) for k in base]
    cells = []
    for rows in itertools.product(*per_row):
        if form is not None:
            total = sum(int(c) * int(form.d[a][j]) for a, row in enumerate(rows)
                        for j, c in enumerate(row))
            feasible = total <= form.limit
        else:
            total = math.fsum(c * model.d[a, j] for a, row in enumerate(rows)
                              for j, c in enumerate(row))
            feasible = total / n <= model.delta
        ct = ConditionalType(tuple(rows))
        cells.append(CensusCell(ct, ct.size, bool(feasible)))
    return cells


def census_log_ball_probability(cells, Qh) -> float:
    """``log`` of the sum of ``|T_V(x)| Qh^n(cell)`` over feasible cells."""
    terms = [math.log(c.size) + c.ctype.log_prob(Qh) for c in cells if c.feasible]
    terms = [t for t in terms if t > -math.inf]
    return float(logsumexp(terms)) if terms else -math.inf


# -- block moments ------------------------------------------------------------

@dataclass
class BlockMoment:
    n: int
    rho: float
    log_expected_v: float
    log_expected_g: float
    rows: list

    @property
    def expected_v(self) -> float:
        return math.exp(self.log_expected_v)

    @property
    def expected_g(self) -> float:
        return math.exp(self.log_expected_g)

    def sandwich_holds(self, slack: float = 1e-12) -> bool:
        upper = self.log_expected_v + log_factorial(self.rho)
        return (self.log_expected_v <= self.log_expected_g + slack
                and self.log_expected_g <= upper + slack)


def exact_block_moment(P, Qh, model: DistortionModel, n: int, rho: float,
                       method: str = "auto", cap: int = ENUM_CAP) -> BlockMoment:
    """Exact ``E[V_rho]`` and ``E[G_rho]`` for blocks of length ``n``.

    Sequences are grouped by type; one representative per type fixes the
    common ball probability.  ``rows`` holds ``(counts, log |T|, log q)``.
    For integer ``rho`` the sandwich ``E[V] <= E[G] <= rho! E[V]`` is
    asserted.
    """
    _check_rho(rho)
    P = check_pmf(P, "P_X")
    if P.size != model.shape[0]:
        raise LengthMismatch("source law and distortion matrix disagree")
    integer = float(rho).is_integer() and rho <= RHO_MAX
    v_terms, g_terms, rows = [], [], []
    for t in enumerate_types(n, P.size):
        log_w = t.log_size + t.log_prob(P)
        if log_w == -math.inf:
            continue
        log_q = log_ball_probability(t.representative(), Qh, model, method, cap)
        if log_q == -math.inf:
            raise ZeroBallMass(t.counts)
        rows.append((t.counts, t.log_size, log_q))
        v_terms.append(log_w - rho * log_q)
        q = math.exp(log_q)
        if integer:
            g_terms.append(log_w + log_g_moment_integer(min(q, 1.0), int(rho)))
        else:
            g_terms.append(log_w + log_g_moment(min(q, 1.0), rho))
    report = BlockMoment(n, float(rho), float(logsumexp(v_terms)), float(logsumexp(g_terms)), rows)
    if integer and not report.sandwich_holds(1e-9):
        raise AssertionError("block moments violate E[V] <= E[G] <= rho! E[V]")
    return report


# -- convergence to the exponent ----------------------------------------------

@dataclass
class ConvergenceRow:
    n: int
    exact: float
    limit: float
    gap: float


@dataclass
class ConvergenceTable:
    rows: list
    limit: float
    fitted_c: float
    monotone_tail: bool
    within_envelope: bool

    def as_tuples(self):
        return [(r.n, r.exact, r.limit, r.gap) for r in self.rows]


def exponent_convergence_check(P, Qh, model: DistortionModel, rho: float, n_list,
                               controls: SolverControls = DEFAULT_CONTROLS,
                               moment: str = "g") -> ConvergenceTable:
    """Exact normalised log-moments against the limiting exponent.

    ``gap = |exact - limit|``.  ``monotone_tail`` says whether the gaps of the
    last three blocklengths strictly decrease.  ``fitted_c`` is the smallest
    ``C`` with ``gap <= C log(n) / n`` over the earlier rows (over all rows
    when there are fewer than four) and ``within_envelope`` checks the last
    three rows against it.  Both are reported, not enforced.
    """
    n_list = sorted(int(k) for k in n_list)
    limit = iid_strategy_exponent(P, Qh, model, rho, controls).value
    rows = []
    for n in n_list:
        bm = exact_block_moment(P, Qh, model, n, rho)
        exact = (bm.log_expected_g if moment == "g" else bm.log_expected_v) / n
        rows.append(ConvergenceRow(n, exact, limit, abs(exact - limit)))
    tail = rows[-3:]
    monotone = all(a.gap > b.gap for a, b in zip(tail, tail[1:])) if len(tail) >= 2 else True

    def ratio(r):
        return r.gap * r.n / math.log(r.n) if r.n > 1 else math.inf

    head = rows[:-3] if len(rows) >= 4 else rows
    fitted = max((ratio(r) for r in head if r.n > 1), default=0.0)
    envelope = all(r.gap <= fitted * math.log(r.n) / r.n + 1e-12 for r in tail if r.n > 1)
    return ConvergenceTable(rows, limit, fitted, monotone, envelope)
