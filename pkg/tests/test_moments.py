import math

import mpmath as mp
import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from asyncguess import (
    DistortionModel, FiniteSource, RhoNonpositive, RhoTooLarge, ZeroBallMass, ball_mass,
    build_ball_index, distortion_renyi, exhaustive_quantizer_oracle, expected_moments,
    g_moment_integer, g_moment_series, generalized_binomial, geometric_moment_lower_bound,
    geometric_moment_upper_envelope, oneshot_achievability, optimal_sync_guesswork,
    renyi_entropy, tilted_strategy, v_moment, v_moment_series,
)
from asyncguess.moments import (
    RHO_MAX, envelope_excess, g_moment_closed_form, log_g_moment, sync_log_factor,
)
from instances import random_model

Q_GRID = [round(0.05 * k, 2) for k in range(1, 20)]


# -- strategies and ball masses -----------------------------------------------

def test_tilted_examples():
    assert np.allclose(tilted_strategy(np.full(4, 0.25), 2.0), 0.25, atol=1e-16)
    assert np.array_equal(tilted_strategy([0, 1, 0], 3.0), [0, 1, 0])
    t = tilted_strategy([0.75, 0.25], 1.0)
    z = math.sqrt(0.75) + math.sqrt(0.25)
    assert np.allclose(t, [math.sqrt(0.75) / z, 0.5 / z], atol=1e-15)
    assert np.allclose(t, [0.63397, 0.36603], atol=1e-5)
    with pytest.raises(RhoNonpositive):
        tilted_strategy([0.5, 0.5], 0)


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 10))
def test_tilted_renormalizes_and_keeps_zeros(seed, rho):
    rng = np.random.default_rng(seed)
    base = rng.dirichlet(np.ones(6))
    base[rng.integers(0, 6, 2)] = 0
    base /= base.sum()
    t = tilted_strategy(base, rho)
    assert math.fsum(t) == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(t == 0, base == 0)


def test_ball_mass_examples():
    balls = build_ball_index(DistortionModel.absolute((0, 1, 2), 1))
    assert ball_mass(np.full(3, 1 / 3), balls, 0) == pytest.approx(2 / 3, abs=1e-16)
    assert ball_mass(np.full(3, 1 / 3), balls, 1) == pytest.approx(1.0, abs=1e-16)
    assert ball_mass([0, 0, 1], balls, 0) == 0.0


# -- V moments ----------------------------------------------------------------

def test_v_moment_examples():
    assert v_moment(1.0, 3.3) == 1.0
    assert v_moment(0.5, 2) == 4.0
    assert v_moment(0.25, 0.5) == pytest.approx(2.0, abs=1e-15)
    assert v_moment_series(0.25, 0.5) == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(ZeroBallMass):
        v_moment(0.0, 1.0)


@pytest.mark.parametrize("m", [1, 2, 3, 7, 15])
@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0, 3.7])
def test_generalized_binomial_sign_identity(m, rho):
    lhs = generalized_binomial(m + rho - 1, rho)
    rhs = (-1) ** (m - 1) * generalized_binomial(-rho - 1, m - 1)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert lhs == pytest.approx(float(mp.binomial(m + rho - 1, rho)), rel=1e-12)


# -- G moments ----------------------------------------------------------------

def test_g_moment_integer_at_half():
    assert [g_moment_integer(0.5, r) for r in (1, 2, 3, 4)] == [2, 6, 26, 150]
    assert 4 <= g_moment_integer(0.5, 2) <= 8
    assert all(g_moment_integer(1.0, r) == 1.0 for r in range(1, RHO_MAX + 1))
    with pytest.raises(RhoTooLarge):
        g_moment_integer(0.5, RHO_MAX + 1)
    with pytest.raises(ZeroBallMass):
        g_moment_integer(0.0, 2)


def _mgf_moments(rho_max):
    """Exact moments from derivatives of the geometric MGF at t = 0."""
    t, p = sp.symbols("t p", positive=True)
    mgf = p * sp.exp(t) / (1 - (1 - p) * sp.exp(t))
    out, expr = {}, mgf
    for r in range(1, rho_max + 1):
        expr = sp.diff(expr, t)
        out[r] = sp.lambdify(p, sp.simplify(expr.subs(t, 0)), "mpmath")
    return out


MGF = _mgf_moments(RHO_MAX)


@pytest.mark.parametrize("rho", range(1, RHO_MAX + 1))
def test_g_moment_integer_matches_mgf(rho):
    for q in (0.05, 0.3, 0.5, 0.77, 0.95):
        with mp.workdps(60):
            exact = MGF[rho](mp.mpf(q))
        assert g_moment_integer(q, rho) == pytest.approx(float(exact), rel=1e-12)


@pytest.mark.parametrize("rho", [1, 2, 3, 4])
def test_closed_forms_agree_with_eulerian_path(rho):
    from asyncguess.moments import eulerian_factor

    for q in Q_GRID:
        eulerian = eulerian_factor(q, rho) / q**rho
        assert g_moment_closed_form(q, rho) == pytest.approx(eulerian, rel=1e-12)


def test_g_series_matches_integer():
    assert g_moment_series(0.5, 2, tol=1e-10) == pytest.approx(6.0, abs=1e-10)
    for q in Q_GRID:
        for rho in (1, 2, 5, 9):
            assert g_moment_series(q, rho) == pytest.approx(g_moment_integer(q, rho), rel=1e-11)


@pytest.mark.parametrize("rho", [0.5, 1.5, 2.7, 6.3])
def test_g_series_matches_polylog(rho):
    for q in (0.07, 0.3, 0.62):
        with mp.workdps(30):
            r = 1 - mp.mpf(q)
            exact = mp.mpf(q) / r * mp.polylog(-mp.mpf(rho), r)
        assert g_moment_series(q, rho) == pytest.approx(float(exact), rel=1e-11)


def test_g_series_bounds_and_limit():
    value = g_moment_series(0.3, 1.5)
    assert value >= ((0.7 / 0.3) ** 1.5) * math.exp(-1 / 0.7)
    assert value >= 2**-1.5 * math.exp(-2) * 0.3**-1.5
    assert value >= geometric_moment_lower_bound(0.3, 1.5)
    assert g_moment_series(1.0, 2.5) == 1.0
    assert g_moment_series(1 - 1e-9, 2.5) == pytest.approx(1.0, abs=1e-6)


def test_upper_envelope_dominates_series():
    for q in np.linspace(0.02, 0.98, 25):
        for rho in (0.5, 1.0, 1.5, 2.5, 4.0):
            assert g_moment_series(q, rho) <= geometric_moment_upper_envelope(q, rho)
    # the envelope is asymptotically tight as q -> 0
    for rho in (0.5, 1.5, 2.5):
        assert abs(envelope_excess(1e-4, rho)) < 1e-3


def test_factorial_sandwich_integer_grid():
    for q in Q_GRID:
        for rho in range(1, RHO_MAX + 1):
            lg = log_g_moment(q, rho)
            lv = -rho * math.log(q)
            assert lv <= lg + 1e-12
            assert lg <= lv + math.lgamma(rho + 1) + 1e-12


# -- expected moments ---------------------------------------------------------

def test_expected_moments_large_threshold():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 1, (3, 4))
    model = DistortionModel(range(3), range(4), d, 1.0)
    source = FiniteSource.from_pmf([0.2, 0.3, 0.5])
    rep = expected_moments(source, rng.dirichlet(np.ones(4)), build_ball_index(model), 2.5)
    assert rep.expected_v == pytest.approx(1.0, abs=1e-15)
    assert rep.expected_g == pytest.approx(1.0, abs=1e-15)


def test_expected_moments_lossless_tilted():
    source = FiniteSource.from_pmf([0.75, 0.25])
    model = DistortionModel.hamming(range(2), 0)
    strat = tilted_strategy([0.75, 0.25], 1.0)
    rep = expected_moments(source, strat, build_ball_index(model), 1.0)
    expected = 0.75 / strat[0] + 0.25 / strat[1]
    assert rep.expected_v == pytest.approx(expected, rel=1e-14)
    assert rep.expected_v == pytest.approx(1.86603, abs=1e-5)
    assert rep.log_expected_v == pytest.approx(renyi_entropy([0.75, 0.25], 0.5), abs=1e-14)
    assert rep.expected_g == pytest.approx(rep.expected_v, rel=1e-14)


def test_expected_moments_zero_ball_names_symbol():
    source = FiniteSource(("a", "b"), [0.5, 0.5])
    model = DistortionModel.hamming(("a", "b"), 0)
    with pytest.raises(ZeroBallMass) as err:
        expected_moments(source, [1.0, 0.0], build_ball_index(model), 1.0)
    assert err.value.symbol == "b"


def test_zero_probability_symbol_may_have_zero_ball():
    source = FiniteSource.from_pmf([1.0, 0.0])
    rep = expected_moments(source, [1.0, 0.0], build_ball_index(DistortionModel.hamming(range(2), 0)), 2)
    assert rep.expected_g == 1.0


# -- one-shot achievability ---------------------------------------------------

def test_oneshot_constant_quantizer():
    source = FiniteSource((0, 1, 2), [0.5, 0.3, 0.2])
    rep = oneshot_achievability(source, DistortionModel.absolute((0, 1, 2), 1), 2.0)
    assert rep.log_bound_rhs == 0.0
    assert rep.expected_v == 1.0


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0, 3.0])
def test_oneshot_lossless_equality(rho):
    source = FiniteSource.from_pmf([0.6, 0.3, 0.1])
    rep = oneshot_achievability(source, DistortionModel.hamming(range(3), 0), rho)
    assert rep.log_expected_v == pytest.approx(rep.log_bound_rhs, abs=1e-12)
    assert rep.log_bound_rhs == pytest.approx(rho * renyi_entropy(source.pmf, 1 / (1 + rho)), abs=1e-14)


def test_oneshot_bounds_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(60):
        nx, nh = rng.integers(2, 7, size=2)
        model = random_model(rng, nx, nh)
        source = FiniteSource.from_pmf(rng.dirichlet(np.ones(nx)))
        rho = int(rng.integers(1, 4))
        rep = oneshot_achievability(source, model, rho)
        exact_h = exhaustive_quantizer_oracle(source, model, 1 / (1 + rho))
        assert rep.log_bound_rhs == pytest.approx(rho * exact_h, abs=1e-15)
        assert rep.v_bound_slack >= -1e-12
        assert rep.g_bound_slack >= -1e-12
        assert rep.sandwich_holds()


# -- synchronous one-shot guessing --------------------------------------------

def test_sync_examples():
    source = FiniteSource.from_pmf([0.75, 0.25])
    res = optimal_sync_guesswork(source, DistortionModel.hamming(range(2), 0), 1.0)
    assert res.ordering == (0, 1)
    assert res.value == pytest.approx(1.25, abs=1e-15)
    rng = np.random.default_rng(1)
    d = rng.uniform(0, 1, (3, 3))
    full = optimal_sync_guesswork(FiniteSource.from_pmf([0.2, 0.3, 0.5]),
                                  DistortionModel(range(3), range(3), d, 1.0), 2.0)
    assert full.value == 1.0


def test_sync_lossless_orders_by_probability():
    rng = np.random.default_rng(2)
    for _ in range(10):
        p = rng.dirichlet(np.ones(5))
        res = optimal_sync_guesswork(FiniteSource.from_pmf(p), DistortionModel.hamming(range(5), 0), 1.5)
        assert res.ordering == tuple(int(i) for i in np.argsort(-p, kind="stable"))


def test_sync_bracket_random_instances():
    rng = np.random.default_rng(3)
    for _ in range(60):
        nx, nh = rng.integers(2, 6, size=2)
        model = random_model(rng, nx, nh)
        source = FiniteSource.from_pmf(rng.dirichlet(np.ones(nx)))
        rho = float(rng.choice([0.5, 1.0, 2.0, 3.0]))
        res = optimal_sync_guesswork(source, model, rho)
        h, _ = distortion_renyi(source, model, 1 / (1 + rho))
        assert res.log_upper_bound == pytest.approx(rho * h)
        assert res.within_bracket()


def test_sync_log_factor_definition():
    assert sync_log_factor(4, 7) == pytest.approx(math.log(1 + math.log(4)), abs=1e-15)
    assert sync_log_factor(1, 3) == 0.0
