import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from fadealloc.curve import UnachievableRateError
from fadealloc.delay_limited import (InfeasibleError, MeanPowerSample, PowerBudget,
                                     ThresholdPolicy, ZeroPolicy, alloc_av, alloc_papr,
                                     alloc_peak, b1_log_threshold_s, b1_outage_analytic,
                                     b1_threshold_P0, b1_threshold_s, diversity_slope_fit,
                                     mean_min_power, min_power_alloc, outage_mc,
                                     outage_papr_decomposition, outage_sweep,
                                     peak_max_rate_alloc, sample_mean_power,
                                     singleton_diversity, threshold_s, tw_diversity,
                                     tw_min_power_alloc)
from fadealloc.fading import FadingSpec, sample_power_gains
from oracles import brute_force_b2


@pytest.mark.parametrize("seed", range(6))
def test_min_power_matches_brute_force(cm16, seed):
    rng = np.random.default_rng(seed)
    g = rng.exponential(size=2) + 0.05
    R = float(rng.uniform(0.5, 3.5))
    a = min_power_alloc(cm16, g, R)
    assert a.p.sum() <= brute_force_b2(cm16, g, R) * (1 + 1e-6)
    assert a.achieved_rate == pytest.approx(R, abs=1e-10)


def test_min_power_kkt(cm16):
    g = np.array([0.2, 0.9, 1.7, 3.0])
    a = min_power_alloc(cm16, g, 2.5)
    active = a.p > 0
    lhs = g[active] * cm16.mmse(a.p[active] * g[active])
    assert np.allclose(lhs, 1 / a.eta, rtol=1e-8)
    # inactive blocks are those where even MMSE(0) cannot meet the level
    assert np.all(g[~active] * cm16.mmse0 <= 1 / a.eta * (1 + 1e-9))


def test_b1_closed_form(cm16):
    a = min_power_alloc(cm16, [0.5], 1.0)
    assert a.p[0] == pytest.approx(cm16.inverse_info(1.0) / 0.5, rel=1e-14)


def test_gaussian_reduces_to_waterfilling(gauss_curve):
    g = np.array([0.3, 1.2, 0.7, 2.0])
    a = min_power_alloc(gauss_curve, g, 3.0)
    level = a.eta
    assert np.allclose(a.p, np.maximum(level - 1 / g, 0), atol=1e-12)
    assert np.mean(np.log2(1 + a.p * g)) == pytest.approx(3.0, abs=1e-12)


def test_zero_gains(cm16):
    a = min_power_alloc(cm16, [0.0, 1.0], 1.0)
    assert a.p[0] == 0.0
    with pytest.raises(InfeasibleError):
        min_power_alloc(cm16, [0.0, 1.0], 2.0)     # needs 4 bits on one block
    with pytest.raises(InfeasibleError):
        min_power_alloc(cm16, [0.0, 0.0], 0.5)


def test_rate_checks(cm16):
    with pytest.raises(UnachievableRateError):
        min_power_alloc(cm16, [1.0, 1.0], 4.0)
    with pytest.raises(ValueError):
        min_power_alloc(cm16, [1.0, -1.0], 1.0)
    assert min_power_alloc(cm16, [1.0, 2.0], 0.0).p.sum() == 0


def test_truncated_caps_snr(cm16):
    g = np.array([0.1, 0.5, 2.0, 8.0])
    beta = 10 ** 1.2
    a = tw_min_power_alloc(cm16, g, 2.0, beta)
    assert np.all(a.p * g <= beta * (1 + 1e-12))
    assert a.achieved_rate == pytest.approx(2.0, abs=1e-10)
    assert a.p.sum() >= min_power_alloc(cm16, g, 2.0).p.sum() * (1 - 1e-9)


def test_truncated_feasibility(cm16):
    beta = 3.0
    cap = float(cm16.info(beta))
    with pytest.raises(InfeasibleError):
        tw_min_power_alloc(cm16, [1.0, 1.0], cap * 1.01, beta)
    a = tw_min_power_alloc(cm16, [1.0, 2.0], cap, beta)
    assert np.allclose(a.p * np.array([1.0, 2.0]), beta)


def test_truncated_gaussian_infinite_cap_is_waterfilling(gauss_curve):
    g = np.array([0.4, 1.1, 2.5])
    a = tw_min_power_alloc(gauss_curve, g, 2.0, math.inf)
    b = min_power_alloc(gauss_curve, g, 2.0)
    assert np.allclose(a.p, b.p, rtol=1e-9)


@pytest.mark.parametrize("beta", [None, 10.0])
@pytest.mark.parametrize("which", ["cm16", "bicm16", "gauss_curve"])
def test_fast_path_agrees_with_exact(request, which, beta):
    curve = request.getfixturevalue(which)
    g = sample_power_gains(FadingSpec(1.0, 4), 300, seed=2)
    fast = mean_min_power(curve, g, 2.0, beta)
    for row, f in zip(g, fast):
        try:
            a = (min_power_alloc(curve, row, 2.0) if beta is None
                 else tw_min_power_alloc(curve, row, 2.0, beta))
        except InfeasibleError:
            assert math.isinf(f)
            continue
        assert f == pytest.approx(a.mean_power, rel=1e-6)


def test_peak_threshold_matches_direct_allocator(cm16):
    # transmitting iff the minimum power fits equals the direct peak allocator reaching R
    g = sample_power_gains(FadingSpec(1.0, 2), 60, seed=4)
    P_peak, R = 3.0, 2.0
    for row in g:
        gated = alloc_peak(cm16, row, R, P_peak)
        direct = peak_max_rate_alloc(cm16, row, P_peak)
        assert gated.transmits == (direct.achieved_rate >= R - 1e-9)
        assert np.mean(direct.p) == pytest.approx(P_peak, rel=1e-9)


def test_gated_allocators(cm16):
    g = np.array([0.05, 0.1])
    big = min_power_alloc(cm16, g, 1.0).mean_power
    assert not alloc_peak(cm16, g, 1.0, big * 0.99).transmits
    assert alloc_peak(cm16, g, 1.0, big * 1.01).transmits
    assert not alloc_av(cm16, g, 1.0, big * 0.5).transmits
    assert alloc_papr(cm16, g, 1.0, PowerBudget(big, 1.0), math.inf).transmits   # boundary transmits
    assert not alloc_papr(cm16, g, 1.0, PowerBudget(big * 0.99, 1.0), math.inf).transmits
    assert not alloc_papr(cm16, g, 1.0, PowerBudget(big, 2.0), big * 0.99).transmits


def test_power_budget():
    b = PowerBudget.from_db(10.0, 3.0)
    assert b.P_peak == pytest.approx(10 * 10**0.3)
    with pytest.raises(ValueError):
        PowerBudget(1.0, 0.9)
    with pytest.raises(ValueError):
        PowerBudget(0.0)


def test_threshold_sample_semantics():
    sample = MeanPowerSample(np.array([1.0, 2.0, 3.0, 4.0]))
    assert sample.full_mean == 2.5
    assert math.isinf(sample.threshold(2.5).s)
    th = sample.threshold(1.5)                  # (1+2+3)/4 = 1.5 exactly at s = 3
    assert th.s == pytest.approx(3.0)
    assert sample.spent_power(th.s) == pytest.approx(1.5)
    assert sample.silence_fraction(3.0) == 0.25
    with_inf = MeanPowerSample(np.array([1.0, math.inf]))
    assert math.isinf(with_inf.full_mean)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=5, max_size=60), st.floats(0.01, 10.0))
@example([1.0, 1.0, 1.0, 4.0, 4.0], 2.0)        # budget crossed inside a run of ties
def test_threshold_meets_budget(values, P_av):
    sample = MeanPowerSample(np.array(values))
    th = sample.threshold(P_av)
    if math.isinf(th.s):
        assert sample.full_mean <= P_av
    else:
        assert sample.spent_power(th.s) <= P_av * (1 + 1e-12)


def test_threshold_monotone_in_budget(cm16):
    fs = FadingSpec(1.0, 2)
    s = [threshold_s(cm16, 2.0, P, fs, n=20000, seed=1).s for P in (1.0, 3.0, 10.0)]
    assert s[0] < s[1] < s[2]


def test_b1_threshold_matches_monte_carlo(cm16):
    fs = FadingSpec(1.0, 1)
    exact = b1_threshold_s(cm16, fs, 1.0, 3.0)
    mc = threshold_s(cm16, 1.0, 3.0, fs, n=400_000, seed=3).s
    assert mc == pytest.approx(exact, rel=0.05)


def test_b1_threshold_large_budget(cm16):
    fs = FadingSpec(1.0, 1)
    assert math.isinf(b1_threshold_s(cm16, fs, 1.0, 1e4))          # exp(P/c) overflows
    assert b1_log_threshold_s(cm16, fs, 1.0, 1e4) > 709
    c = float(cm16.inverse_info(1.0))
    assert math.isinf(b1_threshold_s(cm16, FadingSpec(2.0, 1), 1.0, 2 * c * 1.01))


def test_b1_threshold_P0(cm16):
    fs = FadingSpec(1.0, 1)
    P0 = b1_threshold_P0(cm16, fs, 1.0, 10.0)
    # at P0 the average threshold equals the peak budget
    assert b1_threshold_s(cm16, fs, 1.0, P0) == pytest.approx(10.0 * P0, rel=1e-8)
    assert b1_threshold_P0(cm16, fs, 1.0, 2.0) == 0.0               # peak binds everywhere
    assert math.isinf(b1_threshold_P0(cm16, fs, 1.0, math.inf))
    c = float(cm16.inverse_info(1.0))
    assert b1_threshold_P0(cm16, FadingSpec(3.0, 1), 1.0, math.inf) == pytest.approx(1.5 * c)


def test_b1_outage_regimes(cm16):
    fs = FadingSpec(1.0, 1)
    c = float(cm16.inverse_info(1.0))
    P0 = b1_threshold_P0(cm16, fs, 1.0, 10.0)
    high = PowerBudget(P0 * 10, 10.0)
    assert b1_outage_analytic(cm16, fs, 1.0, high) == pytest.approx(
        1 - math.exp(-c / high.P_peak), rel=1e-12)
    low = PowerBudget(P0 / 3, 10.0)
    s = b1_threshold_s(cm16, fs, 1.0, low.P_av)
    assert b1_outage_analytic(cm16, fs, 1.0, low) == pytest.approx(1 - math.exp(-c / s), rel=1e-12)


def test_outage_mc_matches_sweep(cm16):
    fs = FadingSpec(1.0, 2)
    pol = ThresholdPolicy.peak(cm16, 5.0)
    one = outage_mc(pol, 2.0, fs, 50_000, seed=8)
    sweep = outage_sweep(cm16, 2.0, fs, [5.0], 1.0, "peak", n=50_000, seed=8)
    assert one.p_hat == sweep[0].p_hat


def test_outage_determinism_and_shards(cm16):
    fs = FadingSpec(1.0, 2)
    a = outage_sweep(cm16, 2.0, fs, [1.0, 4.0], 4.0, n=30_000, seed=2, threshold_n=30_000)
    b = outage_sweep(cm16, 2.0, fs, [1.0, 4.0], 4.0, n=30_000, seed=2, threshold_n=30_000)
    assert [r.p_hat for r in a] == [r.p_hat for r in b]
    c = outage_sweep(cm16, 2.0, fs, [1.0, 4.0], 4.0, n=30_000, seed=2, threshold_n=30_000,
                     shards=3, workers=2)
    d = outage_sweep(cm16, 2.0, fs, [1.0, 4.0], 4.0, n=30_000, seed=2, threshold_n=30_000,
                     shards=3, workers=1)
    assert [r.p_hat for r in c] == [r.p_hat for r in d]


def test_sample_prefix_stable(cm16):
    fs = FadingSpec(1.0, 2)
    a = sample_mean_power(cm16, fs, 1.5, 1000, seed=4)
    b = sample_mean_power(cm16, fs, 1.5, 3000, seed=4)
    assert np.array_equal(a, b[:1000])


def test_outage_orderings(cm16):
    fs = FadingSpec(1.0, 2)
    P = [0.5, 2.0, 8.0]
    papr = outage_sweep(cm16, 2.0, fs, P, 4.0, "papr", n=40_000, seed=1, threshold_n=40_000)
    av = outage_sweep(cm16, 2.0, fs, P, 4.0, "av", n=40_000, seed=1, threshold_n=40_000)
    peak = outage_sweep(cm16, 2.0, fs, P, 4.0, "peak", n=40_000, seed=1)
    for x, y, z in zip(papr, av, peak):
        assert x.p_hat == max(y.p_hat, z.p_hat)
    assert papr[0].p_hat >= papr[1].p_hat >= papr[2].p_hat


def test_truncated_outage_not_better(cm16):
    fs = FadingSpec(1.0, 2)
    opt = outage_sweep(cm16, 2.0, fs, [2.0], 4.0, "peak", n=40_000, seed=1)[0]
    tw = outage_sweep(cm16, 2.0, fs, [2.0], 4.0, "peak", beta=10.0, n=40_000, seed=1)[0]
    assert tw.p_hat >= opt.p_hat


def test_zero_policy(cm16):
    est = outage_mc(ZeroPolicy(), 1.0, FadingSpec(1.0, 2), 1000, seed=0)
    assert est.p_hat == 1.0
    assert outage_mc(ZeroPolicy(), 0.0, FadingSpec(1.0, 2), 1000, seed=0).p_hat == 0.0


def test_sweep_argument_checks(cm16):
    fs = FadingSpec(1.0, 1)
    with pytest.raises(ValueError):
        outage_sweep(cm16, 1.0, fs, [1.0], math.inf, "peak", n=10)
    with pytest.raises(ValueError):
        outage_sweep(cm16, 1.0, fs, [1.0], 0.5, n=10)
    with pytest.raises(ValueError):
        outage_sweep(cm16, 1.0, fs, [-1.0], 2.0, n=10)


def test_decomposition():
    xp = np.arange(0.0, 41.0, 1.0)
    yp = 10 ** (-xp / 10)
    xa = np.arange(0.0, 31.0, 1.0)
    ya = np.where(xa < 15, 10 ** (-xa / 5), 1e-9)
    x, y = outage_papr_decomposition((xp, yp), (xa, ya), 10.0)
    assert np.array_equal(x, xa)
    assert np.allclose(y, np.maximum(10 ** (-(xa + 10) / 10), ya), rtol=1e-12)
    with pytest.raises(ValueError):
        outage_papr_decomposition((xp, yp), (np.arange(0.0, 41.0), yp), 10.0)


def test_singleton_diversity():
    assert singleton_diversity(1, 4, 1.0) == 1
    assert singleton_diversity(4, 4, 3.0) == 2
    assert singleton_diversity(4, 4, 2.0) == 3           # exact arithmetic at the boundary
    assert singleton_diversity(8, 2, 0.5) == 7
    with pytest.raises(ValueError):
        singleton_diversity(2, 4, 4.0)


def test_tw_diversity(cm16):
    beta = 100.0
    assert tw_diversity(4, cm16, beta, 2.5) == singleton_diversity(4, 4, 2.5)
    # on a floor boundary any finite cap loses one order
    assert tw_diversity(4, cm16, beta, 3.0) == singleton_diversity(4, 4, 3.0) - 1
    small = 2.0
    assert tw_diversity(4, cm16, small, 1.0) <= singleton_diversity(4, 4, 1.0)


def test_slope_fit():
    x = np.arange(10.0, 40.0, 2.0)
    y = 3e-1 * 10 ** (-2 * x / 10)
    assert diversity_slope_fit(x, y) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        diversity_slope_fit(x, y, window=(10, 14))
    with pytest.raises(ValueError):
        diversity_slope_fit(x, y, n=100)
