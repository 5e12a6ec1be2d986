"""Seeded Monte Carlo designs shared by the unit and acceptance suites.

Each ``*_reject`` function simulates one replication under the null and
returns whether the test rejects at 5%.
"""

import warnings

import numpy as np

from dynpanel import (DgpConfig, GmmStyle, InstrumentPlan, ModelSpec, ar_test, default_plan,
                      difference_in_hansen, estimate, gen_dynamic_panel, hansen_j, pesaran_cd,
                      sargan, wald_joint)
from dynpanel.unit_root import llc_test, ips_test
from dynpanel.simulate import gen_ar_panel, gen_random_walk_panel

ALPHA = 0.05
AR1 = ModelSpec("y", lags=1)
AB_PLAN = InstrumentPlan((GmmStyle("y", 2),), level_lag=None)     # all lags, uncollapsed
PRED = ModelSpec("y", (("x1", "predetermined"),), lags=1)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


def sargan_pvalue(seed, n=200, t=6):
    p = gen_dynamic_panel(DgpConfig(n=n, t=t, delta=0.5, seed=seed))
    return sargan(estimate(p, AR1, AB_PLAN, "difference", "one")).pvalue


def sargan_reject(s):
    return sargan_pvalue(1000 + s) < ALPHA


def dih_reject(s):
    p = gen_dynamic_panel(DgpConfig(n=200, t=6, delta=0.5, seed=2000 + s))
    est = quiet(estimate, p, AR1, default_plan(AR1), "system", "two")
    subset = [n for n in est.system.instrument_names if n.endswith("(level)") and n != "_cons(level)"]
    return quiet(difference_in_hansen, est, subset).pvalue < ALPHA


def ar2_reject(s):
    p = gen_dynamic_panel(DgpConfig(n=200, t=8, delta=0.5, seed=3000 + s))
    return ar_test(estimate(p, AR1, default_plan(AR1), "difference", "one"), 2).pvalue < ALPHA


def cd_statistic(s):
    return pesaran_cd(np.random.default_rng(4000 + s).standard_normal((30, 30))).statistic


def cd_reject(s):
    return abs(cd_statistic(s)) > 1.959963984540054


def wald_reject(s):
    p = gen_dynamic_panel(DgpConfig(n=200, t=8, delta=0.5, beta=(0.0,), seed=5000 + s))
    est = quiet(estimate, p, PRED, default_plan(PRED), "system", "two")
    return wald_joint(est, ["x1"]).pvalue < ALPHA


def consistency_draw(s):
    """(system, difference) two-step estimates of delta = 0.8, N=200, T=8."""
    p = gen_dynamic_panel(DgpConfig(n=200, t=8, delta=0.8, seed=90000 + s))
    plan = default_plan(AR1, max_lag=None, collapse=False)
    sys = quiet(estimate, p, AR1, plan, "system", "two").coef("L.y")
    dif = quiet(estimate, p, AR1, plan, "difference", "two").coef("L.y")
    return sys, dif


def unit_root_rejections(s, stationary):
    p = gen_ar_panel(50, 50, 0.5, seed=20000 + s) if stationary else \
        gen_random_walk_panel(50, 50, seed=10000 + s)
    return llc_test(p, "y").pvalue < ALPHA, ips_test(p, "y").pvalue < ALPHA


def rate(fn, reps):
    return float(np.mean([bool(fn(s)) for s in range(reps)]))
