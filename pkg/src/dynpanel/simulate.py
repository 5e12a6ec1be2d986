"""Seeded data-generating processes and independent numerical oracles.

Random draws are keyed by ``(seed, unit)`` through :class:`numpy.random.SeedSequence`
spawn keys, so a unit's series does not depend on how many other units are
generated or in which order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .panel import PanelDataset

BURN_IN = 50


@dataclass(frozen=True)
class DgpConfig:
    """Dynamic panel design ``y_it = delta y_i,t-1 + x_it'beta + u_i + eta_it``.

    ``invalid_corr`` correlates every regressor's innovation with the
    contemporaneous ``eta`` (making it endogenous); ``factor_loading`` adds a
    common time factor to ``eta`` with unit-specific loadings.
    """

    n: int
    t: int
    delta: float = 0.5
    beta: Tuple[float, ...] = ()
    fe_var: float = 1.0
    idio_var: float = 1.0
    x_ar: float = 0.5
    x_fe: float = 0.0
    factor_loading: float = 0.0
    invalid_corr: float = 0.0
    seed: int = 0
    burn_in: int = BURN_IN
    first_period: int = 1

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.n < 1 or self.t < 1:
            raise ValueError("n and t must be positive")
        if self.fe_var < 0 or self.idio_var < 0:
            raise ValueError("variances must be >= 0")
        if not -1.0 < self.x_ar < 1.0:
            raise ValueError("x_ar must lie in (-1, 1)")
        if not -1.0 <= self.invalid_corr <= 1.0:
            raise ValueError("invalid_corr must lie in [-1, 1]")
        if abs(self.delta) > 1.0:
            raise ValueError("|delta| must not exceed 1")


def unit_rng(seed: int, unit: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, unit))))


def common_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1 << 30,))))


def gen_dynamic_panel(cfg: DgpConfig) -> PanelDataset:
    """Simulate the design and discard the burn-in periods.

    Variables are ``y`` and ``x1 .. xk``; ``meta`` records the configuration.
    """
    n, k = cfg.n, len(cfg.beta)
    total = cfg.burn_in + cfg.t
    sd_e = math.sqrt(cfg.idio_var)
    c = cfg.invalid_corr
    u = np.empty(n)
    eta = np.empty((n, total))
    xi = np.empty((n, k, total))
    load = np.empty(n)
    y0 = np.empty(n)
    x0 = np.empty((n, k))
    for i in range(n):
        rng = unit_rng(cfg.seed, i)
        u[i] = math.sqrt(cfg.fe_var) * rng.standard_normal()
        eta[i] = rng.standard_normal(total)
        xi[i] = rng.standard_normal((k, total))
        load[i] = rng.uniform(0.5, 1.5)
        y0[i] = rng.standard_normal()
        x0[i] = rng.standard_normal(k)
    f = common_rng(cfg.seed).standard_normal(total)
    shock = sd_e * eta + cfg.factor_loading * load[:, None] * f[None, :]
    x_innov = math.sqrt(1.0 - c * c) * xi + c * eta[:, None, :]
    x = np.empty((n, k, total))
    x_prev = x0 / math.sqrt(1.0 - cfg.x_ar ** 2) + cfg.x_fe * u[:, None] / (1.0 - cfg.x_ar)
    beta = np.asarray(cfg.beta)
    if abs(cfg.delta) < 1.0:
        mean_x = cfg.x_fe * u / (1.0 - cfg.x_ar) * beta.sum() if k else 0.0
        y_prev = (u + mean_x) / (1.0 - cfg.delta) + sd_e * y0 / math.sqrt(1.0 - cfg.delta ** 2)
    else:
        y_prev = np.zeros(n)
    y = np.empty((n, total))
    for s in range(total):
        x[:, :, s] = cfg.x_ar * x_prev + cfg.x_fe * u[:, None] + x_innov[:, :, s]
        y[:, s] = cfg.delta * y_prev + x[:, :, s] @ beta + u + shock[:, s]
        x_prev, y_prev = x[:, :, s], y[:, s]
    keep = slice(cfg.burn_in, total)
    variables = {"y": y[:, keep]}
    for j in range(k):
        variables[f"x{j + 1}"] = x[:, j, keep]
    units = [f"u{i:04d}" for i in range(n)]
    periods = range(cfg.first_period, cfg.first_period + cfg.t)
    return PanelDataset(units, periods, variables, meta={"dgp": asdict(cfg)})


def gen_random_walk_panel(n: int, t: int, seed: int) -> PanelDataset:
    return gen_dynamic_panel(DgpConfig(n=n, t=t, delta=1.0, fe_var=0.0, seed=seed, burn_in=0))


def gen_ar_panel(n: int, t: int, rho: float, seed: int, fe_var: float = 0.0) -> PanelDataset:
    return gen_dynamic_panel(DgpConfig(n=n, t=t, delta=rho, fe_var=fe_var, seed=seed))


def oracle_iv(y: Sequence[float], X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Just-identified IV coefficients ``(Z'X)^-1 Z'y`` via an LU factorization."""
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    Z = np.asarray(Z, dtype=float).reshape(len(y), -1)
    if Z.shape[1] != X.shape[1]:
        raise ValueError("oracle_iv needs as many instruments as regressors")
    A = Z.T @ X
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)   # reported below
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if np.min(np.abs(np.diag(lu))) <= 1e-13 * np.max(np.abs(np.diag(lu))):
        raise np.linalg.LinAlgError("Z'X is singular")
    return scipy.linalg.lu_solve((lu, piv), Z.T @ y)


# --------------------------------------------------------------------------
# Synthetic replication fixture


GNI_SHIFT = 1.4     # intercept of the log-income equation; centres GNI near 10,000

RAW_VARIABLES = ("GNI", "EXPG", "IMPG", "ATCE", "PCT", "AFT", "QPI", "LPIAC", "LPICQ",
                 "LPIEA", "LPIEC", "LPIFS", "LPI", "LPIQTT", "TRF", "FDI", "GFCF")


def gen_replication_fixture(units: Sequence[str], groups: Sequence[str], periods: Sequence[int],
                            seed: int, upper_label: str = "upper-middle") -> PanelDataset:
    """Synthetic stand-in for the trade-facilitation panel.

    Magnitudes follow realistic descriptive ranges; trade and income
    follow dynamic equations in the trade-facilitation indicators so the
    estimators have something to find. FDI is signed.
    """
    n, T = len(units), len(periods)
    burn = 20
    total = burn + T
    out = {name: np.empty((n, T)) for name in RAW_VARIABLES}
    for i in range(n):
        rng = unit_rng(seed, i, stream=7)
        upper = groups[i] == upper_label
        size = rng.standard_normal() + (0.6 if upper else -0.6)
        e = rng.standard_normal((12, total))

        def ar(level, spread, persist, j):
            s = np.empty(total)
            prev = 0.0
            for t in range(total):
                prev = persist * prev + math.sqrt(1 - persist ** 2) * e[j, t]
                s[t] = level + spread * prev
            return s

        lpi_base = 2.65 + 0.12 * size
        comps = [np.clip(ar(lpi_base + 0.05 * (j - 3), 0.15, 0.6, j), 1.0, 5.0) for j in range(6)]
        lpi = np.mean(comps, axis=0)
        qpi = np.clip(ar(3.57 + 0.35 * size, 0.3, 0.7, 6), 1.0, 7.0)
        atce = np.clip(np.exp(ar(1.95 - 0.15 * size, 0.25, 0.7, 7)), 1.0, 26.0)
        ln_pct = ar(13.5 + 1.2 * size, 0.2, 0.8, 8)
        aft = np.exp(ar(4.0 + 1.3 * size, 0.3, 0.8, 9))
        trf = np.clip(ar(6.3 - 1.0 * size, 1.5, 0.7, 10), 0.3, 35.65)
        ln_gfcf = ar(23.5 + 1.2 * size, 0.15, 0.8, 11)
        fdi = -4.0e9 * (1 + 0.5 * size) + 6.0e9 * rng.standard_normal(total)

        u_exp, u_imp, u_gni = 0.3 * size + 0.1 * rng.standard_normal(3)
        u_gni *= 0.25                      # income varies less across countries than trade
        exp_ = np.empty(total)
        imp = np.empty(total)
        gni = np.empty(total)
        shocks = 0.05 * rng.standard_normal((3, total))
        drivers_x = 0.06 * ln_pct + 0.15 * lpi - 0.01 * trf - 0.004 * atce + 0.1 * ln_gfcf
        drivers_m = 0.05 * ln_pct + 0.12 * lpi - 0.012 * trf - 0.003 * atce + 0.12 * ln_gfcf
        exp_prev = (drivers_x[0] + u_exp + 6.3) / 0.4
        imp_prev = (drivers_m[0] + u_imp + 6.1) / 0.4
        gni_prev = 9.2
        for t in range(total):
            exp_[t] = 0.6 * exp_prev + drivers_x[t] + u_exp + 6.3 + shocks[0, t]
            imp[t] = 0.6 * imp_prev + drivers_m[t] + u_imp + 6.1 + shocks[1, t]
            gni[t] = (0.7 * gni_prev + 0.03 * exp_[t] + 0.02 * imp[t] + 0.05 * lpi[t]
                      - 0.003 * trf[t] + u_gni + GNI_SHIFT + shocks[2, t])
            exp_prev, imp_prev, gni_prev = exp_[t], imp[t], gni[t]
        keep = slice(burn, total)
        out["GNI"][i] = np.round(np.exp(gni[keep]), 3)
        out["EXPG"][i] = np.exp(exp_[keep])
        out["IMPG"][i] = np.exp(imp[keep])
        out["ATCE"][i] = np.round(atce[keep], 2)
        out["PCT"][i] = np.round(np.exp(ln_pct[keep]), 3)
        out["AFT"][i] = np.round(aft[keep], 3)
        out["QPI"][i] = np.round(qpi[keep], 3)
        for name, comp in zip(("LPIAC", "LPICQ", "LPIEA", "LPIEC", "LPIFS", "LPIQTT"), comps):
            out[name][i] = np.round(comp[keep], 6)
        out["LPI"][i] = np.round(lpi[keep], 6)
        out["TRF"][i] = np.round(trf[keep], 2)
        out["FDI"][i] = np.round(fdi[keep], 0)
        out["GFCF"][i] = np.exp(ln_gfcf[keep])
    return PanelDataset(units, periods, out, group_tag=groups, meta={"synthetic_seed": seed})
