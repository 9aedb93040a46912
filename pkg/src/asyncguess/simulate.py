"""Monte Carlo guessing with reproducible counter-based random streams.

Trials are cut into fixed blocks of ``SimConfig.block_size``.  Block ``b``
draws from ``Philox(SeedSequence(master_seed, spawn_key=(b,)))``, so the
sampled trajectories depend only on the seed and the trial index, never on
how many workers process the blocks.  Per-block sums are reduced in block
order.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .distortion import DistortionModel, check_pmf
from .errors import CapTooLowWarning, ConfigError, InstanceTooLarge, LengthMismatch, ZeroBallMass
from .moments import _check_rho, g_moment
from .types_oracle import (
    _integer_form, enumerate_types, exact_block_moment, log_ball_probability, type_of,
)

CENSOR_WARN = 0.01


@dataclass(frozen=True)
class SimConfig:
    master_seed: int = 0
    trials: int = 10_000
    n: int = 1
    rho_list: tuple = (1.0,)
    guess_cap: int = 10**6
    workers: int = 1
    mode: str = "analytic"
    block_size: int = 1 << 14

    def __post_init__(self):
        object.__setattr__(self, "rho_list", tuple(float(r) for r in self.rho_list))
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.guess_cap < 1:
            raise ConfigError("guess_cap must be at least 1")
        if self.n < 1:
            raise ConfigError("blocklength n must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.block_size < 1:
            raise ConfigError("block_size must be at least 1")
        if self.mode not in ("analytic", "literal"):
            raise ConfigError(f"mode must be 'analytic' or 'literal', got {self.mode!r}")
        if not self.rho_list:
            raise ConfigError("rho_list must be nonempty")
        for r in self.rho_list:
            _check_rho(r)


@dataclass
class MomentEstimate:
    rho: float
    mean: float
    stderr: float
    log_mean: float
    exact: float = math.nan
    conditional_mean: float = math.nan

    @property
    def z_score(self) -> float:
        if math.isnan(self.exact) or self.stderr == 0:
            return 0.0 if self.mean == self.exact else math.nan
        return (self.mean - self.exact) / self.stderr


@dataclass
class SimReport:
    mode: str
    n: int
    trials: int
    estimates: list
    censored_fraction: float
    master_seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def biased_low(self) -> bool:
        """Censoring at the cap can only shrink the moment estimates."""
        return self.censored_fraction > 0

    def estimate(self, rho: float) -> MomentEstimate:
        for e in self.estimates:
            if e.rho == float(rho):
                return e
        raise KeyError(rho)


# -- sampling -----------------------------------------------------------------

def block_stream(master_seed: int, block: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(seq))


def _geometric(q, u):
    """Inverse-CDF geometric sample(s) from uniforms ``u`` in (0, 1]."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        k = np.ceil(np.log(u) / np.log1p(-q))
    k = np.where(q >= 1.0, 1.0, np.maximum(k, 1.0))
    return k


def sample_guesswork(q_x: float, rng: np.random.Generator) -> int:
    if not q_x > 0:
        raise ZeroBallMass()
    if q_x > 1:
        raise ValueError(f"ball mass must lie in (0, 1], got {q_x}")
    if q_x == 1.0:
        return 1
    u = 1.0 - rng.random()
    return int(_geometric(q_x, u))


# -- per-block accumulation ---------------------------------------------------

@dataclass
class _BlockSums:
    log_s1: np.ndarray   # per rho: log sum k^rho
    log_s2: np.ndarray   # per rho: log sum k^(2 rho)
    cond: np.ndarray     # per rho: sum of exact conditional moments (analytic mode)
    censored: int
    count: int


def _sums(k: np.ndarray, rhos: np.ndarray) -> tuple:
    logk = np.log(k)
    s1 = logsumexp(rhos[:, None] * logk[None, :], axis=1)
    s2 = logsumexp(2.0 * rhos[:, None] * logk[None, :], axis=1)
    return s1, s2


def _reduce(blocks, cfg: SimConfig, exact, mode, n, analytic: bool) -> SimReport:
    rhos = np.array(cfg.rho_list)
    s1 = logsumexp(np.stack([b.log_s1 for b in blocks]), axis=0)
    s2 = logsumexp(np.stack([b.log_s2 for b in blocks]), axis=0)
    total = sum(b.count for b in blocks)
    censored = sum(b.censored for b in blocks)
    estimates = []
    for i, rho in enumerate(rhos):
        log_mean = float(s1[i] - math.log(total))
        mean = math.exp(log_mean)
        if total > 1:
            ratio = math.exp(float(s2[i] - math.log(total) - 2 * log_mean))
            var = max(ratio - 1.0, 0.0) * mean * mean * total / (total - 1)
            stderr = math.sqrt(var / total)
        else:
            stderr = math.inf
        cond = math.fsum(b.cond[i] for b in blocks) / total if analytic else math.nan
        estimates.append(MomentEstimate(float(rho), mean, stderr, log_mean,
                                        exact.get(float(rho), math.nan), cond))
    frac = censored / total
    if frac > CENSOR_WARN:
        warnings.warn(f"{frac:.2%} of trials hit guess_cap={cfg.guess_cap}", CapTooLowWarning,
                      stacklevel=3)
    return SimReport(mode, n, total, estimates, frac, int(cfg.master_seed),
                     {"blocks": len(blocks), "cap_warning": frac > CENSOR_WARN})


def _run_blocks(cfg: SimConfig, work):
    starts = list(range(0, cfg.trials, cfg.block_size))
    jobs = [(b, min(cfg.block_size, cfg.trials - s)) for b, s in enumerate(starts)]
    if cfg.workers == 1:
        return [work(b, size) for b, size in jobs]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(lambda job: work(*job), jobs))


# -- one-shot at a fixed ball mass --------------------------------------------

def simulate_geometric(q_x: float, cfg: SimConfig) -> SimReport:
    """Guesswork moments for a fixed ball mass ``q_x`` (no source sampling)."""
    if not q_x > 0:
        raise ZeroBallMass()
    rhos = np.array(cfg.rho_list)

    def work(b, size):
        rng = block_stream(cfg.master_seed, b)
        k = _geometric(q_x, 1.0 - rng.random(size))
        cens = k > cfg.guess_cap
        k = np.minimum(k, cfg.guess_cap)
        s1, s2 = _sums(k, rhos)
        return _BlockSums(s1, s2, np.zeros(rhos.size), int(cens.sum()), size)

    exact = {float(r): g_moment(min(q_x, 1.0), r) for r in cfg.rho_list}
    return _reduce(_run_blocks(cfg, work), cfg, exact, "geometric", 1, analytic=False)


# -- block guessing -----------------------------------------------------------

def _sample_letters(cdf: np.ndarray, rng, shape) -> np.ndarray:
    u = rng.random(shape)
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


class _Membership:
    """Vectorised ball test with the same semantics as ``block_ball_membership``."""

    def __init__(self, model: DistortionModel, n: int):
        self.n = n
        self.delta = model.delta
        form = _integer_form(model, n) if model.is_exact else None
        self.int_d = form.d if form else None
        self.limit = form.limit if form else None
        self.d = model.d

    def __call__(self, x: np.ndarray, xh: np.ndarray) -> np.ndarray:
        # x: (..., n), xh: (..., n) broadcastable
        if self.int_d is not None:
            total = np.zeros(np.broadcast_shapes(x.shape, xh.shape)[:-1], dtype=np.int64)
            for i in range(self.n):
                total = total + self.int_d[x[..., i], xh[..., i]]
            return total <= self.limit
        total = np.zeros(np.broadcast_shapes(x.shape, xh.shape)[:-1])
        for i in range(self.n):
            total = total + self.d[x[..., i], xh[..., i]]
        return total / self.n <= self.delta


def simulate_block(P, Qh, model: DistortionModel, cfg: SimConfig, chunk: int = 32) -> SimReport:
    """Randomised guessing of ``n``-blocks under the i.i.d. strategy ``Qh``.

    ``literal`` mode draws guesses until one lands in the ball or the cap is
    reached.  ``analytic`` mode computes the exact ball mass of each sampled
    source block and draws the guesswork from the geometric law; it also
    averages the exact conditional moments (``conditional_mean``).  Exact
    expectations are attached when the type enumeration is small enough.
    """
    P = check_pmf(P, "P_X")
    Qh = check_pmf(Qh, "Q_Xh")
    if P.size != model.shape[0] or Qh.size != model.shape[1]:
        raise LengthMismatch("pmfs and distortion matrix disagree")
    n = cfg.n
    rhos = np.array(cfg.rho_list)
    p_cdf = np.cumsum(P)
    q_cdf = np.cumsum(Qh)
    m_src = P.size
    cache: dict = {}

    def ball_mass(x_row) -> float:
        key = type_of(x_row, m_src).counts
        if key not in cache:
            rep = tuple(a for a, c in enumerate(key) for _ in range(c))
            lq = log_ball_probability(rep, Qh, model)
            if lq == -math.inf:
                raise ZeroBallMass(tuple(model.source_alphabet[a] for a in x_row))
            cache[key] = math.exp(lq)
        return cache[key]

    if cfg.mode == "analytic":
        # warm the cache deterministically so worker threads only read it
        for t in _types_or_none(n, m_src):
            ball_mass(t)

        def work(b, size):
            rng = block_stream(cfg.master_seed, b)
            x = _sample_letters(p_cdf, rng, (size, n))
            q = np.array([ball_mass(tuple(row)) for row in x])
            k = _geometric(q, 1.0 - rng.random(size))
            cens = k > cfg.guess_cap
            k = np.minimum(k, cfg.guess_cap)
            s1, s2 = _sums(k, rhos)
            vals, counts = np.unique(q, return_counts=True)
            cond = np.array([math.fsum(int(c) * g_moment(min(float(v), 1.0), r)
                                       for v, c in zip(vals, counts)) for r in rhos])
            return _BlockSums(s1, s2, cond, int(cens.sum()), size)
    else:
        member = _Membership(model, n)

        def work(b, size):
            rng = block_stream(cfg.master_seed, b)
            x = _sample_letters(p_cdf, rng, (size, n))
            k = np.zeros(size)
            active = np.arange(size)
            drawn = 0
            while active.size and drawn < cfg.guess_cap:
                c = min(chunk, cfg.guess_cap - drawn)
                xh = _sample_letters(q_cdf, rng, (active.size, c, n))
                hit = member(x[active][:, None, :], xh)
                found = hit.any(axis=1)
                k[active[found]] = drawn + 1 + np.argmax(hit[found], axis=1)
                active = active[~found]
                drawn += c
            cens = active.size
            k[active] = cfg.guess_cap
            s1, s2 = _sums(k, rhos)
            return _BlockSums(s1, s2, np.zeros(rhos.size), int(cens), size)

    exact = {}
    try:
        for r in cfg.rho_list:
            exact[float(r)] = exact_block_moment(P, Qh, model, n, r).expected_g
    except (InstanceTooLarge, ZeroBallMass):
        exact = {}
    return _reduce(_run_blocks(cfg, work), cfg, exact, cfg.mode, n, cfg.mode == "analytic")


def _types_or_none(n, m):
    """Representatives of every type when the enumeration is small, else nothing."""
    try:
        types = enumerate_types(n, m, cap=10**5)
    except InstanceTooLarge:
        return []
    return [t.representative() for t in types]
