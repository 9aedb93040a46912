import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncguess import (
    DistortionModel, InfiniteExponent, concavity_probe, danskin_check, iid_penalty,
    iid_strategy_exponent, optimal_iid_exponent, primal_strategy_exponent,
    primal_synchronous_exponent, renyi_entropy, strategy_objective, synchronous_exponent,
    tilted_strategy, uncertainty_exponent,
)
from instances import exponent_instance

P_LOSSLESS = np.array([0.75, 0.25])
LOSSLESS = DistortionModel.hamming(range(2), 0)


# -- fixed i.i.d. strategy --------------------------------------------------

def test_strategy_exponent_large_threshold_is_zero():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 1, (3, 3))
    model = DistortionModel(range(3), range(3), d, d.max())
    for _ in range(3):
        rep = iid_strategy_exponent(rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3)), model, 2.0)
        assert rep.value == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0, 3.0]))
def test_strategy_exponent_lossless_closed_form(seed, rho):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(3))
    qh = rng.dirichlet(np.ones(3))
    rep = iid_strategy_exponent(P, qh, DistortionModel.hamming(range(3), 0), rho)
    assert rep.value == pytest.approx(math.log(float(P @ qh**-rho)), abs=1e-9)
    star = P * qh**-rho
    assert np.allclose(rep.inner_witness, star / star.sum(), atol=1e-6)


def test_strategy_exponent_tilted_lossless_example():
    rep = iid_strategy_exponent(P_LOSSLESS, tilted_strategy(P_LOSSLESS, 1.0), LOSSLESS, 1.0)
    assert rep.value == pytest.approx(renyi_entropy(P_LOSSLESS, 0.5), abs=1e-12)
    assert rep.value == pytest.approx(2 * math.log(1.36603), abs=1e-5)


def test_strategy_exponent_infinite():
    with pytest.raises(InfiniteExponent):
        iid_strategy_exponent(P_LOSSLESS, [1.0, 0.0], LOSSLESS, 1.0)


def test_dual_matches_primal_and_witness_plugs_back():
    rng = np.random.default_rng(5)
    for _ in range(8):
        P, model, rho = exponent_instance(rng)
        qh = rng.dirichlet(np.ones(model.shape[1]))
        dual = iid_strategy_exponent(P, qh, model, rho)
        primal = primal_strategy_exponent(P, qh, model, rho)
        assert primal.value <= dual.value + 1e-7
        assert dual.value - primal.value < 1e-5
        plug = strategy_objective(dual.inner_witness, P, qh, model, rho)
        assert plug == pytest.approx(dual.value, abs=1e-6)


# -- optimal and synchronous exponents --------------------------------------

@pytest.mark.parametrize("rho", [1.0, 2.0])
def test_lossless_exponents_equal_renyi(rho):
    target = rho * renyi_entropy(P_LOSSLESS, 1 / (1 + rho))
    iid = optimal_iid_exponent(P_LOSSLESS, LOSSLESS, rho)
    sync = synchronous_exponent(P_LOSSLESS, LOSSLESS, rho)
    assert iid.value == pytest.approx(target, abs=1e-3)
    assert sync.value == pytest.approx(target, abs=1e-3)
    assert np.allclose(iid.outer_witness, tilted_strategy(P_LOSSLESS, rho), atol=1e-3)
    assert iid.bracket <= 1e-4


def test_exponents_vanish_at_large_threshold():
    rng = np.random.default_rng(8)
    d = rng.uniform(0, 1, (3, 2))
    model = DistortionModel(range(3), range(2), d, d.max())
    P = rng.dirichlet(np.ones(3))
    assert optimal_iid_exponent(P, model, 1.5).value == pytest.approx(0.0, abs=1e-9)
    assert synchronous_exponent(P, model, 1.5).value == pytest.approx(0.0, abs=1e-9)
    assert iid_penalty(P, model, 1.5) == pytest.approx(0.0, abs=1e-9)


def test_synchronous_matches_grid_oracle():
    model = DistortionModel.hamming(range(2), 0.05)
    P = [0.9, 0.1]
    sync = synchronous_exponent(P, model, 1.0)
    grid = primal_synchronous_exponent(P, model, 1.0, grid_step=1e-3)
    assert sync.value == pytest.approx(grid.value, abs=1e-3)
    assert grid.value <= sync.value + 1e-9


def test_lossless_penalty_is_zero():
    assert abs(iid_penalty(P_LOSSLESS, LOSSLESS, 1.0)) < 1e-3


@settings(max_examples=8)
@given(st.integers(0, 2**32 - 1))
def test_minmax_ordering(seed):
    rng = np.random.default_rng(seed)
    P, model, rho = exponent_instance(rng)
    sync = synchronous_exponent(P, model, rho)
    iid = optimal_iid_exponent(P, model, rho, start=sync.outer_witness)
    assert iid.value >= sync.value - 1e-6
    assert iid.converged and iid.bracket <= 1e-4
    # the reported strategy reproduces the reported value
    assert iid_strategy_exponent(P, iid.outer_witness, model, rho).value == pytest.approx(iid.value, abs=1e-6)


def test_penalty_nonnegative_random_3x3():
    rng = np.random.default_rng(17)
    for _ in range(3):
        P = rng.dirichlet(np.ones(3))
        d = rng.uniform(0, 1, (3, 3))
        lo = d.min(axis=1).max()
        model = DistortionModel(range(3), range(3), d, lo + 0.3 * max((P @ d).min() - lo, 0))
        assert iid_penalty(P, model, 2.0) >= -1e-6


def test_weak_duality_sandwich():
    rng = np.random.default_rng(23)
    P, model, rho = exponent_instance(rng)
    iid = optimal_iid_exponent(P, model, rho)
    for _ in range(10):
        qh = rng.dirichlet(np.ones(model.shape[1]))
        Q = rng.dirichlet(np.ones(model.shape[0]))
        # inner value at any Q <= exponent of qh >= min-max lower end
        assert strategy_objective(Q, P, qh, model, rho) <= iid_strategy_exponent(P, qh, model, rho).value + 1e-9
        assert iid_strategy_exponent(P, qh, model, rho).value >= iid.lower_bound - 1e-9


# -- uncertainty --------------------------------------------------------------

def test_uncertainty_degenerate_classes():
    rng = np.random.default_rng(4)
    P, model, rho = exponent_instance(rng)
    single = uncertainty_exponent([P], model, rho)
    assert single.value == pytest.approx(optimal_iid_exponent(P, model, rho).value, abs=1e-9)
    assert uncertainty_exponent([P, P.copy()], model, rho).value == pytest.approx(single.value, abs=1e-9)


def test_uncertainty_symmetric_pair():
    rep = uncertainty_exponent([[0.9, 0.1], [0.1, 0.9]], LOSSLESS, 1.0)
    assert rep.value == pytest.approx(math.log(2), abs=1e-4)
    assert np.allclose(rep.outer_witness, [0.5, 0.5], atol=1e-3)


def test_uncertainty_dominates_members():
    rng = np.random.default_rng(6)
    P, model, rho = exponent_instance(rng, sizes=(3, 3))
    other = rng.dirichlet(np.ones(model.shape[0]))
    rep = uncertainty_exponent([P, other], model, rho)
    for member in (P, other):
        assert rep.value >= optimal_iid_exponent(member, model, rho).value - 1e-6


# -- solver diagnostics ------------------------------------------------------

def test_danskin_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    for _ in range(5):
        P, model, rho = exponent_instance(rng)
        qh = 0.5 * rng.dirichlet(np.ones(model.shape[1])) + 0.5 / model.shape[1]
        assert danskin_check(P, qh, model, rho) <= 1e-4


def test_concavity_probe_lossless_has_no_violations():
    rng = np.random.default_rng(0)
    probe = concavity_probe(P_LOSSLESS, [0.3, 0.7], LOSSLESS, 1.0, rng, segments=40)
    assert probe.violations == 0


def test_concavity_probe_detects_nonconcave_objective():
    # the source-law objective need not be concave when delta > 0
    P = [0.5914234714097, 0.00023174270471312093, 0.4083447858855868]
    d = [[0.2697867137638703, 0.04097352393619469, 0.016527635528529094],
         [0.8132702392002724, 0.9127555772777217, 0.6066357757671799],
         [0.7294965609839984, 0.5436249914654229, 0.9350724237877682]]
    model = DistortionModel(range(3), range(3), d, 0.6066357757671799)
    probe = concavity_probe(P, np.full(3, 1 / 3), model, 2.0, np.random.default_rng(1), segments=30)
    assert probe.violations > 0
