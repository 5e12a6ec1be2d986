import numpy as np
import pytest

from dynpanel import DgpConfig, gen_dynamic_panel, oracle_iv
from dynpanel.ingest import replication_skeleton
from dynpanel.simulate import gen_ar_panel, gen_random_walk_panel, gen_replication_fixture


def test_degenerate_design_is_zero():
    p = gen_dynamic_panel(DgpConfig(n=4, t=6, delta=0.0, beta=(0.0,), fe_var=0.0, idio_var=0.0,
                                    seed=1))
    assert np.array_equal(p["y"], np.zeros((4, 6)))


def test_near_unit_root_is_finite():
    p = gen_dynamic_panel(DgpConfig(n=5, t=1000, delta=0.99999, seed=2))
    assert np.isfinite(p["y"]).all()


def test_lag_one_autocorrelation_of_pure_ar():
    p = gen_dynamic_panel(DgpConfig(n=500, t=50, delta=0.5, fe_var=0.0, seed=3))
    Y = np.asarray(p["y"])
    Y = Y - Y.mean(axis=1, keepdims=True)
    rho = np.sum(Y[:, 1:] * Y[:, :-1]) / np.sum(Y * Y)
    assert abs(rho - 0.5) < 0.05


def test_same_seed_same_panel_and_unit_independence():
    a = gen_dynamic_panel(DgpConfig(n=10, t=8, beta=(1.0,), seed=4))
    b = gen_dynamic_panel(DgpConfig(n=10, t=8, beta=(1.0,), seed=4))
    c = gen_dynamic_panel(DgpConfig(n=3, t=8, beta=(1.0,), seed=4))
    assert a.equals(b)
    assert np.array_equal(a["y"][:3], c["y"]) and np.array_equal(a["x1"][:3], c["x1"])
    assert a.meta["dgp"]["seed"] == 4 and a.names == ("y", "x1")


@pytest.mark.parametrize("kw", [dict(fe_var=-1.0), dict(idio_var=-0.1), dict(x_ar=1.0),
                                dict(invalid_corr=1.5), dict(delta=1.2), dict(n=0)])
def test_config_validation(kw):
    base = dict(n=2, t=3, seed=0)
    base.update(kw)
    with pytest.raises(ValueError):
        DgpConfig(**base)


def test_random_walk_and_ar_helpers():
    rw = gen_random_walk_panel(3, 20, seed=5)
    assert rw.meta["dgp"]["delta"] == 1.0 and rw.meta["dgp"]["fe_var"] == 0.0
    assert gen_ar_panel(3, 20, 0.3, seed=5).meta["dgp"]["delta"] == 0.3


def test_oracle_iv_identities():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    assert np.allclose(oracle_iv(y, X, X), np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-12)
    assert oracle_iv([1.0, 2.0], [[1.0], [1.0]], [[1.0], [1.0]]) == pytest.approx([1.5])
    with pytest.raises(np.linalg.LinAlgError):
        oracle_iv(y, X, np.column_stack([X[:, 0], X[:, 0], X[:, 1]]))
    with pytest.raises(ValueError):
        oracle_iv(y, X, X[:, :2])


def test_replication_fixture_is_deterministic_and_shaped():
    sk = replication_skeleton()
    a = gen_replication_fixture(sk.units, sk.group_tag, sk.periods, seed=42)
    b = gen_replication_fixture(sk.units, sk.group_tag, sk.periods, seed=42)
    assert a.equals(b) and a.n_units == 94 and a.n_periods == 11
    assert (np.asarray(a["GNI"]) > 0).all() and (np.asarray(a["FDI"]) < 0).any()
    assert not a.equals(gen_replication_fixture(sk.units, sk.group_tag, sk.periods, seed=43))
