"""Sources, distortion models and distortion balls.

Symbols are dense integer indices everywhere inside the library; labels only
matter when reading configs or writing reports.

Two numeric modes are supported for the distortion matrix:

* float mode: ``d`` is a float array and every comparison is a plain ``<=``
  on IEEE doubles (no tolerance).
* exact mode: entries and threshold are :class:`fractions.Fraction`, and block
  feasibility is decided in rational arithmetic.  The float view ``d`` is
  still populated for the numerical solvers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyBall,
    InvalidDistribution,
    LengthMismatch,
    NegativeEntry,
)

PMF_ATOL = 1e-12


def check_pmf(p, name="pmf") -> np.ndarray:
    """Validate and return ``p`` as a float vector summing to one."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistribution(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidDistribution(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PMF_ATOL:
        raise InvalidDistribution(f"{name} sums to {p.sum():.15g}, not 1")
    return p


@dataclass(frozen=True)
class FiniteSource:
    symbols: tuple
    pmf: np.ndarray

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if len(set(symbols)) != len(symbols):
            raise InvalidDistribution("symbol labels must be unique")
        pmf = check_pmf(self.pmf)
        if pmf.size != len(symbols):
            raise LengthMismatch(
                f"{len(symbols)} symbols but pmf has {pmf.size} entries"
            )
        pmf.setflags(write=False)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def from_pmf(cls, pmf) -> "FiniteSource":
        pmf = np.asarray(pmf, dtype=float)
        return cls(tuple(range(pmf.size)), pmf)

    def __len__(self):
        return len(self.symbols)


def _as_exact(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    return None


@dataclass(frozen=True, eq=False)
class DistortionModel:
    """Distortion matrix ``d[x, xh]`` together with the threshold ``delta``.

    Pass ``Fraction`` (or ``"a/b"`` strings / ints) for every entry and for
    ``delta`` to get exact mode.
    """

    source_alphabet: tuple
    repro_alphabet: tuple
    d: np.ndarray
    delta: float
    exact_d: tuple | None = field(default=None, repr=False)
    exact_delta: Fraction | None = field(default=None, repr=False)

    def __post_init__(self):
        src = tuple(self.source_alphabet)
        rep = tuple(self.repro_alphabet)
        raw = self.d
        rows = raw.tolist() if isinstance(raw, np.ndarray) else [list(r) for r in raw]
        if len(rows) != len(src) or any(len(r) != len(rep) for r in rows):
            raise DimensionMismatch(
                f"distortion matrix must be {len(src)}x{len(rep)}"
            )
        exact_rows = [[_as_exact(v) for v in r] for r in rows]
        exact_delta = _as_exact(self.delta)
        exact = (
            exact_delta is not None
            and all(v is not None for r in exact_rows for v in r)
            and not isinstance(raw, np.ndarray)
        )
        d = np.array(
            [[float(e if e is not None else v) for e, v in zip(er, r)] for er, r in zip(exact_rows, rows)],
            dtype=float,
        )
        if not np.all(np.isfinite(d)):
            raise InvalidDistribution("distortion entries must be finite")
        if np.any(d < 0):
            raise NegativeEntry("distortion entries must be nonnegative")
        delta = float(exact_delta if exact_delta is not None else self.delta)
        if not np.isfinite(delta) or delta < 0:
            raise NegativeEntry("delta must be a finite nonnegative number")
        d.setflags(write=False)
        object.__setattr__(self, "source_alphabet", src)
        object.__setattr__(self, "repro_alphabet", rep)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "delta", delta)
        if exact:
            object.__setattr__(self, "exact_d", tuple(tuple(r) for r in exact_rows))
            object.__setattr__(self, "exact_delta", exact_delta)
        else:
            object.__setattr__(self, "exact_d", None)
            object.__setattr__(self, "exact_delta", None)
        # standing assumption: every ball is nonempty
        mask = self.ball_mask()
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise EmptyBall(src[empty[0]])

    @property
    def is_exact(self) -> bool:
        return self.exact_d is not None

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape

    @property
    def max_distortion(self) -> float:
        return float(self.d.max())

    def ball_mask(self, delta=None) -> np.ndarray:
        """Boolean matrix ``mask[x, xh] = d(x, xh) <= delta``."""
        if delta is None and self.is_exact:
            return np.array(
                [[v <= self.exact_delta for v in row] for row in self.exact_d],
                dtype=bool,
            )
        return self.d <= (self.delta if delta is None else delta)

    def with_delta(self, delta) -> "DistortionModel":
        if self.is_exact:
            return DistortionModel(
                self.source_alphabet, self.repro_alphabet, self.exact_d, delta
            )
        return DistortionModel(self.source_alphabet, self.repro_alphabet, self.d, delta)

    @classmethod
    def hamming(cls, symbols, delta=0, repro=None) -> "DistortionModel":
        symbols = tuple(symbols)
        repro = symbols if repro is None else tuple(repro)
        rows = [[0 if a == b else 1 for b in repro] for a in symbols]
        if isinstance(delta, (int, Fraction, str)):
            return cls(symbols, repro, rows, delta)
        return cls(symbols, repro, np.array(rows, dtype=float), delta)

    @classmethod
    def absolute(cls, values, delta) -> "DistortionModel":
        """``d(x, xh) = |x - xh|`` on a common numeric alphabet."""
        values = tuple(values)
        rows = [[abs(a - b) for b in values] for a in values]
        if isinstance(delta, (int, Fraction, str)) and all(
            isinstance(v, (int, Fraction)) for v in values
        ):
            return cls(values, values, rows, delta)
        return cls(values, values, np.array(rows, dtype=float), delta)


@dataclass(frozen=True, eq=False)
class BallIndex:
    """``forward[x]`` is the mask of A(x); ``reverse[xh]`` the mask of B(xh)."""

    forward: np.ndarray
    reverse: np.ndarray

    def ball(self, x) -> list[int]:
        return np.flatnonzero(self.forward[x]).tolist()

    def coverage(self, xh) -> list[int]:
        return np.flatnonzero(self.reverse[xh]).tolist()


def build_ball_index(model: DistortionModel) -> BallIndex:
    forward = model.ball_mask()
    empty = np.flatnonzero(~forward.any(axis=1))
    if empty.size:
        raise EmptyBall(model.source_alphabet[empty[0]])
    forward = forward.copy()
    forward.setflags(write=False)
    reverse = forward.T.copy()
    reverse.setflags(write=False)
    return BallIndex(forward, reverse)


def _check_pair(x_seq: Sequence[int], xh_seq: Sequence[int]) -> int:
    n = len(x_seq)
    if n != len(xh_seq):
        raise LengthMismatch(f"sequence lengths differ: {n} vs {len(xh_seq)}")
    if n < 1:
        raise LengthMismatch("sequences must be nonempty")
    return n


def block_distortion(x_seq, xh_seq, model: DistortionModel):
    """Per-letter average distortion.

    Float mode accumulates left to right starting from 0.0 and divides once,
    which is the same operation order used by the vectorised enumerators in
    :mod:`asyncguess.types_oracle`.  Exact mode returns a ``Fraction``.
    """
    n = _check_pair(x_seq, xh_seq)
    if model.is_exact:
        return sum((model.exact_d[a][b] for a, b in zip(x_seq, xh_seq)), Fraction(0)) / n
    total = 0.0
    for a, b in zip(x_seq, xh_seq):
        total += model.d[a, b]
    return total / n


def block_ball_membership(x_seq, xh_seq, model: DistortionModel) -> bool:
    value = block_distortion(x_seq, xh_seq, model)
    if model.is_exact:
        return value <= model.exact_delta
    return bool(value <= model.delta)
