import math
import warnings

import numpy as np
import pytest
from scipy import stats

from asyncguess import (
    CapTooLowWarning, ConfigError, DistortionModel, RhoNonpositive, SimConfig, ZeroBallMass,
    sample_guesswork, simulate_block, simulate_geometric,
)
from asyncguess.simulate import _geometric, block_stream

HALF = DistortionModel.hamming(range(2), 0.5)


def test_sample_guesswork_edges():
    rng = np.random.default_rng(0)
    assert sample_guesswork(1.0, rng) == 1
    with pytest.raises(ZeroBallMass):
        sample_guesswork(0.0, rng)
    draws = [sample_guesswork(0.3, rng) for _ in range(200)]
    assert min(draws) >= 1 and all(isinstance(k, int) for k in draws)


def test_config_validation():
    for bad in ({"trials": 0}, {"guess_cap": 0}, {"n": 0}, {"workers": 0},
                {"mode": "exact"}, {"rho_list": ()}, {"master_seed": -1}):
        with pytest.raises(ConfigError):
            SimConfig(**bad)
    with pytest.raises(RhoNonpositive):
        SimConfig(rho_list=(1.0, -2.0))


def test_block_streams_are_independent_and_reproducible():
    a = block_stream(7, 0).random(5)
    assert np.array_equal(a, block_stream(7, 0).random(5))
    assert not np.array_equal(a, block_stream(7, 1).random(5))
    assert not np.array_equal(a, block_stream(8, 0).random(5))


def test_geometric_moments_within_three_sigma():
    rep = simulate_geometric(0.5, SimConfig(master_seed=1, trials=200_000, rho_list=(1, 2)))
    for rho, exact in ((1, 2.0), (2, 6.0)):
        e = rep.estimate(rho)
        assert e.exact == exact
        assert abs(e.mean - exact) <= 3 * e.stderr
    assert rep.censored_fraction == 0.0 and not rep.biased_low


def test_geometric_distribution_matches_cdf():
    q = 0.3
    rng = block_stream(3, 0)
    k = _geometric(q, 1.0 - rng.random(100_000)).astype(int)
    grid = np.arange(1, k.max() + 1)
    ecdf = np.searchsorted(np.sort(k), grid, side="right") / k.size
    ks = float(np.max(np.abs(ecdf - stats.geom.cdf(grid, q))))
    # the discrete statistic at integer points, against the DKW band at level 1e-3
    assert ks < math.sqrt(math.log(2 / 1e-3) / (2 * k.size))


def test_worker_count_does_not_change_results():
    base = SimConfig(master_seed=5, trials=50_000, rho_list=(1, 2.5), block_size=4096)
    one = simulate_geometric(0.2, base)
    four = simulate_geometric(0.2, SimConfig(**{**base.__dict__, "workers": 4}))
    assert one == four
    P, Qh = [0.75, 0.25], [0.5, 0.5]
    cfg = SimConfig(master_seed=5, trials=5000, n=3, rho_list=(1,), block_size=700)
    assert simulate_block(P, Qh, HALF, cfg) == simulate_block(P, Qh, HALF, SimConfig(**{**cfg.__dict__, "workers": 3}))


def test_seed_changes_results():
    a = simulate_geometric(0.2, SimConfig(master_seed=1, trials=1000))
    b = simulate_geometric(0.2, SimConfig(master_seed=2, trials=1000))
    assert a.estimates[0].mean != b.estimates[0].mean


@pytest.mark.parametrize("mode", ["analytic", "literal"])
def test_block_simulation_n2(mode):
    cfg = SimConfig(master_seed=11, trials=40_000, n=2, rho_list=(1,), mode=mode)
    rep = simulate_block([0.75, 0.25], [0.5, 0.5], HALF, cfg)
    e = rep.estimate(1)
    assert e.exact == pytest.approx(4 / 3, abs=1e-14)
    assert abs(e.z_score) <= 3
    if mode == "analytic":
        # every ball has mass 3/4, so the conditional mean is exact
        assert e.conditional_mean == pytest.approx(4 / 3, abs=1e-12)
    else:
        assert math.isnan(e.conditional_mean)


def test_literal_and_analytic_agree_on_random_instance():
    rng = np.random.default_rng(2)
    d = rng.uniform(0, 1, (3, 3))
    model = DistortionModel(range(3), range(3), d, float(d.min(axis=1).max()) + 0.1)
    P = rng.dirichlet(np.ones(3))
    Qh = rng.dirichlet(np.ones(3))
    cfg = dict(master_seed=4, trials=20_000, n=3, rho_list=(1,))
    a = simulate_block(P, Qh, model, SimConfig(mode="analytic", **cfg)).estimate(1)
    b = simulate_block(P, Qh, model, SimConfig(mode="literal", **cfg)).estimate(1)
    assert abs(a.z_score) <= 3.5 and abs(b.z_score) <= 3.5
    assert abs(a.mean - b.mean) <= 4 * math.hypot(a.stderr, b.stderr)


def test_censoring_warns_and_flags():
    with pytest.warns(CapTooLowWarning):
        rep = simulate_geometric(0.01, SimConfig(trials=2000, guess_cap=50))
    assert rep.biased_low
    assert rep.censored_fraction == pytest.approx((0.99) ** 50, abs=0.05)
    assert rep.estimate(1).mean < rep.estimate(1).exact


def test_small_censoring_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate_geometric(0.5, SimConfig(trials=2000, guess_cap=40))


def test_block_simulation_zero_ball():
    cfg = SimConfig(trials=10, n=2)
    with pytest.raises(ZeroBallMass):
        simulate_block([0.5, 0.5], [1.0, 0.0], DistortionModel.hamming(range(2), 0), cfg)


def test_larger_blocklength_against_exact():
    cfg = SimConfig(master_seed=9, trials=30_000, n=8, rho_list=(1,))
    rep = simulate_block([0.75, 0.25], [0.5, 0.5], DistortionModel.hamming(range(2), 0.25), cfg)
    e = rep.estimate(1)
    assert e.exact == pytest.approx(6.9189, abs=1e-4)
    assert abs(e.z_score) <= 3
    # averaging the exact conditional moments has far less noise
    assert e.conditional_mean == pytest.approx(e.exact, rel=0.02)
