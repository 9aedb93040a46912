"""Majorization, Rényi entropies and the greedy covering quantizer.

The greedy quantizer repeatedly picks the reproduction symbol whose ball
covers the largest not-yet-covered source mass.  Its pushforward often
majorizes the output law of every channel supported on the distortion
balls, but not always: greedy maximum coverage can be beaten by a pair of
smaller balls with a larger union.  :func:`distortion_renyi` therefore
searches all deterministic quantizers when that is affordable.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .distortion import BallIndex, DistortionModel, FiniteSource, build_ball_index, check_pmf
from .errors import (
    AlphaOutOfRange, GreedyBoundWarning, InstanceTooLarge, LengthMismatch, NegativeEntry,
)

MAJORIZATION_ATOL = 1e-12


class MajorizationVerdict(NamedTuple):
    majorizes: bool
    first_violated_prefix: int | None


def _prefix_sums(v: np.ndarray) -> np.ndarray:
    s = np.sort(v, axis=-1)[..., ::-1]
    return np.cumsum(s, axis=-1)


def majorizes(q, p, atol: float = MAJORIZATION_ATOL) -> MajorizationVerdict:
    """Does ``q`` majorize ``p``?

    Prefix sums of the nonincreasing rearrangements must satisfy
    ``sum_{i<=j} p_[i] <= sum_{i<=j} q_[i]`` for j < m, and the totals must be
    equal.  ``atol`` absorbs rounding in the prefix sums; pass 0 for a strict
    check.  ``first_violated_prefix`` is a 1-based prefix length.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape or q.ndim != 1:
        raise LengthMismatch("majorization needs two vectors of equal length")
    if np.any(q < 0) or np.any(p < 0):
        raise NegativeEntry("majorization is defined for nonnegative vectors")
    cq = _prefix_sums(q)
    cp = _prefix_sums(p)
    m = q.size
    for j in range(m - 1):
        if cp[j] > cq[j] + atol:
            return MajorizationVerdict(False, j + 1)
    if abs(cp[-1] - cq[-1]) > atol:
        return MajorizationVerdict(False, m)
    return MajorizationVerdict(True, None)


def majorizes_all(q, rows, atol: float = MAJORIZATION_ATOL) -> np.ndarray:
    """Vectorised :func:`majorizes` of one vector against many rows."""
    cq = _prefix_sums(np.asarray(q, dtype=float))
    cp = _prefix_sums(np.asarray(rows, dtype=float))
    ok = np.all(cp[:, :-1] <= cq[:-1] + atol, axis=1)
    return ok & (np.abs(cp[:, -1] - cq[-1]) <= atol)


def _check_alpha(alpha):
    if not (alpha > 0) or alpha == 1 or not math.isfinite(alpha):
        raise AlphaOutOfRange(f"Rényi order must lie in (0,1) or (1,inf), got {alpha}")


def renyi_entropy(p, alpha: float) -> float:
    """Rényi entropy of order ``alpha`` in nats.

    Atoms are sorted before the log-sum-exp so that any rearrangement of the
    same values gives a bit-identical result.
    """
    _check_alpha(alpha)
    p = check_pmf(p)
    atoms = np.sort(p[p > 0])[::-1]
    # normalise by the exactly rounded total so a point mass gives exactly 0
    log_total = math.log(math.fsum(atoms))
    return float((logsumexp(alpha * np.log(atoms)) - alpha * log_total) / (1.0 - alpha))


def renyi_entropy_rows(rows, alpha: float) -> np.ndarray:
    """Rényi entropy of each row of a matrix of pmfs (no validation)."""
    rows = np.asarray(rows, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.where(rows > 0, alpha * np.log(rows), -np.inf)
    log_total = np.log(rows.sum(axis=1))
    return (logsumexp(logs, axis=1) - alpha * log_total) / (1.0 - alpha)


@dataclass(frozen=True)
class Quantizer:
    map: tuple

    def pushforward(self, pmf, repro_size: int) -> np.ndarray:
        """Law of ``pi(X)``; each cell mass is an exactly rounded sum."""
        cells = [[] for _ in range(repro_size)]
        for x, xh in enumerate(self.map):
            cells[xh].append(pmf[x])
        return np.array([math.fsum(c) for c in cells])

    def is_feasible(self, balls: BallIndex) -> bool:
        return all(balls.forward[x, xh] for x, xh in enumerate(self.map))


def greedy_quantizer(source: FiniteSource, balls: BallIndex) -> Quantizer:
    """Greedy covering quantizer; ties go to the smallest reproduction index.

    Source symbols with zero probability that are still uncovered once all
    the mass is covered go to the smallest-index member of their own ball.
    """
    pmf = source.pmf
    n_src, n_rep = balls.forward.shape
    if n_src != len(pmf):
        raise LengthMismatch("ball index and source disagree on alphabet size")
    uncovered = np.ones(n_src, dtype=bool)
    mapping = [-1] * n_src
    chosen = np.zeros(n_rep, dtype=bool)
    while np.any(uncovered & (pmf > 0)):
        best, best_mass = -1, -1.0
        for xh in range(n_rep):
            if chosen[xh]:
                continue
            mass = math.fsum(pmf[balls.reverse[xh] & uncovered])
            if mass > best_mass:
                best, best_mass = xh, mass
        cell = balls.reverse[best] & uncovered
        for x in np.flatnonzero(cell):
            mapping[x] = best
        uncovered &= ~cell
        chosen[best] = True
    for x in np.flatnonzero(uncovered):
        mapping[x] = int(np.flatnonzero(balls.forward[x])[0])
    return Quantizer(tuple(int(v) for v in mapping))


def distortion_renyi(source: FiniteSource, model: DistortionModel, alpha: float,
                     cap: int = 10**6):
    """Smallest Rényi entropy of a reproduction confined to the balls.

    Returns ``(value, quantizer)``.  For orders in (0, 1) the entropy is
    concave in the channel, so the infimum is attained by a deterministic
    quantizer.  The greedy covering quantizer does not always attain it (it
    solves a maximum-coverage step greedily), so every feasible quantizer is
    searched when there are at most ``cap`` of them; ties keep the greedy
    witness.  Above the cap the greedy value is returned with a
    :class:`GreedyBoundWarning`.
    """
    _check_alpha(alpha)
    if alpha > 1:
        raise AlphaOutOfRange("deterministic quantizers are only optimal for alpha in (0,1)")
    balls = build_ball_index(model)
    n_rep = model.shape[1]
    quant = greedy_quantizer(source, balls)
    value = renyi_entropy(quant.pushforward(source.pmf, n_rep), alpha)
    try:
        maps = feasible_quantizers(balls, cap)
    except InstanceTooLarge:
        warnings.warn("too many quantizers to search; greedy value is an upper bound",
                      GreedyBoundWarning, stacklevel=2)
        return value, quant
    best, best_quant = _exhaustive_minimum(source.pmf, maps, n_rep, alpha)
    if best < value:
        return best, best_quant
    return value, quant


class RenyiBound(NamedTuple):
    value: float
    quantizer: Quantizer
    is_upper_bound: bool


def greedy_renyi_upper_bound(source: FiniteSource, model: DistortionModel, alpha: float) -> RenyiBound:
    """Greedy value for any order.

    ``is_upper_bound`` is false only when an exhaustive search over at most
    ``10**6`` quantizers confirms the greedy value is the minimum (which can
    only happen for ``alpha < 1``).
    """
    _check_alpha(alpha)
    balls = build_ball_index(model)
    quant = greedy_quantizer(source, balls)
    value = renyi_entropy(quant.pushforward(source.pmf, model.shape[1]), alpha)
    certified = False
    if alpha < 1:
        try:
            certified = value <= exhaustive_quantizer_oracle(source, model, alpha)
        except InstanceTooLarge:
            pass
    return RenyiBound(value, quant, not certified)


def feasible_quantizers(balls: BallIndex, cap: int = 10**6) -> np.ndarray:
    """All maps with ``pi(x)`` in A(x), one per row."""
    n_src, n_rep = balls.forward.shape
    if n_rep**n_src > cap:
        raise InstanceTooLarge(f"{n_rep}^{n_src} quantizers exceed the cap {cap}")
    choices = [np.flatnonzero(balls.forward[x]) for x in range(n_src)]
    return np.array(list(itertools.product(*choices)), dtype=np.int64).reshape(-1, n_src)


def quantizer_pushforwards(pmf, maps: np.ndarray, repro_size: int) -> np.ndarray:
    pf = np.zeros((maps.shape[0], repro_size))
    rows = np.arange(maps.shape[0])
    for x in range(maps.shape[1]):
        pf[rows, maps[:, x]] += pmf[x]
    return pf


def _exhaustive_minimum(pmf, maps, n_rep, alpha):
    values = renyi_entropy_rows(quantizer_pushforwards(pmf, maps, n_rep), alpha)
    near = np.flatnonzero(values <= values.min() + 1e-9)
    # re-evaluate the near-minimal ones with exactly rounded cell sums
    scored = [(renyi_entropy(Quantizer(tuple(int(v) for v in maps[k])).pushforward(pmf, n_rep),
                             alpha), k) for k in near]
    best, k = min(scored)
    return best, Quantizer(tuple(int(v) for v in maps[k]))


def exhaustive_quantizer_oracle(
    source: FiniteSource, model: DistortionModel, alpha: float, cap: int = 10**6
) -> float:
    """Minimum Rényi entropy over every feasible deterministic quantizer."""
    _check_alpha(alpha)
    balls = build_ball_index(model)
    maps = feasible_quantizers(balls, cap)
    return _exhaustive_minimum(source.pmf, maps, model.shape[1], alpha)[0]


def sample_feasible_channel(balls: BallIndex, rng: np.random.Generator,
                            size: int | None = None) -> np.ndarray:
    """Random channel whose rows are Dirichlet(1) draws on each ball.

    With ``size`` a stack of ``size`` independent channels is returned.
    """
    fwd = balls.forward
    shape = fwd.shape if size is None else (size,) + fwd.shape
    chan = np.zeros(shape)
    for x in range(fwd.shape[0]):
        idx = np.flatnonzero(fwd[x])
        draws = rng.dirichlet(np.ones(idx.size), size=size)
        if size is None:
            chan[x, idx] = draws
        else:
            chan[:, x, idx] = draws
    return chan
