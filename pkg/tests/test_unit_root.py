import numpy as np
import pytest

from dynpanel import AdfSpec, PanelDataset, adf_stat, ips_test, llc_test
from dynpanel.simulate import gen_ar_panel, gen_random_walk_panel
from dynpanel.unit_root import (DegenerateRegressionError, InsufficientDataError, UnitRootError,
                                ips_moments, llc_adjustment, select_lag_bic,
                                simulate_ips_moments, simulate_llc_adjustment)

SERIES_20 = np.array([0.31, -0.12, 0.55, 1.02, 0.87, 1.44, 1.21, 0.96, 1.58, 2.03,
                      1.77, 2.41, 2.12, 2.65, 3.01, 2.74, 3.22, 3.05, 3.61, 3.40])

# t statistics of the lagged level from dense normal equations (X'X) b = X'y on SERIES_20
ORACLE_20 = {
    (1, "intercept"): -1.082608415560166,
    (0, "intercept"): -0.8751923129379079,
    (2, "trend"): -2.899131272548425,
    (1, "none"): 2.093353518748653,
}


def panel_of(Y):
    Y = np.asarray(Y)
    return PanelDataset([f"u{i:03d}" for i in range(Y.shape[0])], range(Y.shape[1]), {"y": Y})


@pytest.mark.parametrize("key", sorted(ORACLE_20))
def test_adf_matches_normal_equation_oracle(key):
    lags, det = key
    assert adf_stat(SERIES_20, AdfSpec(lags=lags, deterministic=det)) == pytest.approx(
        ORACLE_20[key], abs=1e-10)


def test_pure_trend_is_degenerate():
    with pytest.raises(DegenerateRegressionError):
        adf_stat(np.arange(30.0), AdfSpec(lags=0, deterministic="trend"))


def test_insufficient_observations():
    with pytest.raises(InsufficientDataError):
        adf_stat([1.0, 2.0, 1.5], AdfSpec(lags=1))


def test_invalid_spec():
    with pytest.raises(UnitRootError):
        AdfSpec(lags=-1)
    with pytest.raises(UnitRootError):
        AdfSpec(deterministic="quadratic")


@pytest.mark.slow
def test_long_random_walk_t_follows_dickey_fuller():
    # T=500, intercept, no lags: Dickey-Fuller tau_mu has 5% quantile -2.86 and median -1.57
    ts = np.array([adf_stat(np.cumsum(np.random.default_rng(50000 + s).standard_normal(500)),
                            AdfSpec(lags=0)) for s in range(1000)])
    assert 0.93 <= np.mean(ts > -2.86) <= 0.97
    assert abs(np.median(ts) + 1.57) < 0.1


def test_intercept_invariance():
    rng = np.random.default_rng(4)
    y = np.cumsum(rng.normal(size=60))
    for lags in (0, 1, 3):
        spec = AdfSpec(lags=lags)
        assert adf_stat(y + 123.4, spec) == pytest.approx(adf_stat(y, spec), abs=1e-8)


def test_bic_selection_prefers_true_order():
    rng = np.random.default_rng(8)
    e = rng.normal(size=2000)
    dy = np.zeros(2000)
    for t in range(2, 2000):
        dy[t] = 0.6 * dy[t - 1] - 0.3 * dy[t - 2] + e[t]
    assert select_lag_bic(np.cumsum(dy), AdfSpec(max_lags=5)) == 2


def test_tables_match_simulation():
    mu, sd = llc_adjustment(25, "intercept")
    mu_s, sd_s = simulate_llc_adjustment(25, "intercept", reps=20_000, seed=99)
    assert mu == pytest.approx(mu_s, abs=0.02) and sd == pytest.approx(sd_s, abs=0.03)
    m, v = ips_moments(30, 1, "intercept")
    m_s, v_s = simulate_ips_moments(30, 1, "intercept", reps=20_000, seed=99)
    assert m == pytest.approx(m_s, abs=0.02) and v == pytest.approx(v_s, abs=0.03)


def test_missing_moments_without_simulation():
    with pytest.raises(UnitRootError, match="simulation"):
        ips_moments(6, 1, "intercept")
    assert np.isfinite(ips_moments(6, 1, "intercept", simulate=True)).all()


def test_panel_tests_reject_single_unit():
    p = panel_of(np.cumsum(np.ones((1, 30)), axis=1))
    with pytest.raises(UnitRootError, match="adf_stat"):
        llc_test(p, "y")
    with pytest.raises(UnitRootError, match="adf_stat"):
        ips_test(p, "y")


def test_all_units_insufficient():
    p = panel_of(np.random.default_rng(0).normal(size=(3, 3)))
    with pytest.raises(InsufficientDataError):
        llc_test(p, "y")


def test_identical_units_ips_mean_is_that_t():
    y = np.cumsum(np.random.default_rng(5).normal(size=40))
    res = ips_test(panel_of(np.tile(y, (5, 1))), "y")
    t = adf_stat(y, AdfSpec())
    assert res.unit_stats == [t] * 5 and res.raw_statistic == pytest.approx(t, abs=1e-14)


def test_determinism_and_permutation():
    p = gen_random_walk_panel(12, 30, seed=3)
    a, b = llc_test(p, "y"), llc_test(p, "y")
    assert a.statistic == b.statistic
    perm = np.random.default_rng(1).permutation(12)
    q = p.select_units(perm)
    ips_p, ips_q = ips_test(p, "y"), ips_test(q, "y")
    assert ips_q.unit_stats == [ips_p.unit_stats[i] for i in perm]
    assert ips_q.statistic == pytest.approx(ips_p.statistic, abs=1e-12)
    assert llc_test(q, "y").statistic == pytest.approx(a.statistic, abs=1e-10)


def test_reported_subset_reproduces_statistic():
    p = gen_random_walk_panel(8, 30, seed=9)
    Y = np.array(p["y"])
    Y[2, 3:] = np.nan          # too short: dropped
    Y[5, :4] = np.nan          # shorter but usable
    p = panel_of(Y)
    for test in (llc_test, ips_test):
        res = test(p, "y")
        assert res.units_dropped == ["u002"] and len(res.units_used) == 7
        idx = [p.units.index(u) for u in res.units_used]
        again = test(p.select_units(idx), "y")
        assert again.statistic == res.statistic
        assert 0.0 <= res.pvalue <= 1.0


def test_ips_per_unit_list_length_matches_units_used():
    res = ips_test(gen_ar_panel(10, 25, 0.5, seed=2), "y")
    assert len(res.unit_stats) == res.n_units == 10


def test_bic_lag_selection_runs_per_unit():
    res = ips_test(gen_ar_panel(6, 40, 0.5, seed=6), "y",
                   AdfSpec(select_lags=True, max_lags=3))
    assert len(res.unit_lags) == 6 and all(0 <= p <= 3 for p in res.unit_lags)


def test_stationary_panel_strongly_rejected():
    p = gen_ar_panel(50, 50, 0.5, seed=1)
    assert llc_test(p, "y").pvalue < 0.01 and ips_test(p, "y").pvalue < 0.01
