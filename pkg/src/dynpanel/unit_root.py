"""Panel unit-root tests: Levin-Lin-Chu (pooled) and Im-Pesaran-Shin (mean ADF t).

Both tests are built on a shared augmented Dickey-Fuller kernel. Null-moment
inputs (the LLC mean/std adjustments and the IPS moments of the ADF t) are
read from the bundled table ``data/unitroot_moments.json``; values outside the
table can be simulated on demand with :func:`simulate_llc_adjustment` and
:func:`simulate_ips_moments`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .panel import PanelDataset

DETERMINISTICS = ("none", "intercept", "trend")


class UnitRootError(ValueError):
    pass


class InsufficientDataError(UnitRootError):
    pass


class DegenerateRegressionError(UnitRootError):
    pass


@dataclass(frozen=True)
class AdfSpec:
    """ADF lag order and deterministic terms (``none``, ``intercept`` or ``trend``)."""

    lags: int = 1
    deterministic: str = "intercept"
    select_lags: bool = False
    max_lags: int = 4

    def __post_init__(self):
        if self.lags < 0:
            raise UnitRootError("lag order must be >= 0")
        if self.deterministic not in DETERMINISTICS:
            raise UnitRootError(f"unknown deterministic term {self.deterministic!r}")

    @property
    def n_det(self) -> int:
        return DETERMINISTICS.index(self.deterministic)


@dataclass
class UnitRootResult:
    test: str
    statistic: float
    pvalue: float
    spec: AdfSpec
    n_units: int
    n_periods: int
    units_used: List[str]
    units_dropped: List[str]
    unit_stats: List[float] = field(default_factory=list)
    unit_lags: List[int] = field(default_factory=list)
    raw_statistic: float = float("nan")


def _adf_design(y: np.ndarray, lags: int, n_det: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rows of the ADF regression with every needed cell observed.

    Columns are ``[y_{t-1}, dy_{t-1}, ..., dy_{t-p}, 1, t]`` truncated to the
    deterministic terms requested.
    """
    y = np.asarray(y, dtype=float)
    dy = np.full_like(y, np.nan)
    dy[1:] = np.diff(y)
    rows, lhs = [], []
    for t in range(lags + 1, len(y)):
        vals = [y[t - 1]] + [dy[t - j] for j in range(1, lags + 1)]
        if np.isnan(dy[t]) or any(np.isnan(v) for v in vals):
            continue
        det = [1.0, float(t)][:n_det]
        rows.append(vals + det)
        lhs.append(dy[t])
    k = 1 + lags + n_det
    return np.asarray(lhs, dtype=float), np.asarray(rows, dtype=float).reshape(-1, k)


def _ols_t(lhs: np.ndarray, X: np.ndarray) -> Tuple[float, np.ndarray, float]:
    n, k = X.shape
    if n < k + 2:
        raise InsufficientDataError(f"ADF regression has {n} usable rows for {k} regressors")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise DegenerateRegressionError("ADF regressors are perfectly collinear")
    beta = np.linalg.solve(r, q.T @ lhs)
    resid = lhs - X @ beta
    s2 = resid @ resid / (n - k)
    scale = max(float(lhs @ lhs), 1.0) / n
    if s2 <= 1e-24 * scale:
        raise DegenerateRegressionError("ADF regression fits exactly; residual variance is zero")
    rinv = np.linalg.solve(r, np.eye(k))
    se = math.sqrt(s2 * (rinv[0] @ rinv[0]))
    return float(beta[0] / se), resid, float(s2)


def adf_stat(series: Sequence[float], spec: AdfSpec = AdfSpec()) -> float:
    """t statistic on the lagged level in the ADF regression."""
    lhs, X = _adf_design(np.asarray(series, dtype=float), spec.lags, spec.n_det)
    if lhs.size < spec.lags + 3:
        raise InsufficientDataError(
            f"need at least {spec.lags + 3} usable observations, have {lhs.size}"
        )
    return _ols_t(lhs, X)[0]


def select_lag_bic(series: Sequence[float], spec: AdfSpec) -> int:
    """BIC lag choice over ``0..spec.max_lags`` on a common estimation sample."""
    y = np.asarray(series, dtype=float)
    best, best_p = math.inf, 0
    lhs_max, _ = _adf_design(y, spec.max_lags, spec.n_det)
    n = lhs_max.size
    for p in range(spec.max_lags + 1):
        lhs, X = _adf_design(y, p, spec.n_det)
        lhs, X = lhs[-n:], X[-n:]
        if n < X.shape[1] + 2:
            break
        beta, *_ = np.linalg.lstsq(X, lhs, rcond=None)
        rss = float(np.sum((lhs - X @ beta) ** 2))
        if rss <= 0:
            return p
        bic = n * math.log(rss / n) + X.shape[1] * math.log(n)
        if bic < best:
            best, best_p = bic, p
    return best_p


# --------------------------------------------------------------------------
# Null moment tables


@lru_cache(maxsize=1)
def _moment_table() -> dict:
    text = resources.files("dynpanel").joinpath("data/unitroot_moments.json").read_text()
    return json.loads(text)


def _interp_in_inverse_t(grid: Dict[int, Tuple[float, float]], t: int) -> Tuple[float, float]:
    keys = sorted(grid)
    if t in grid:
        return grid[t]
    if t < keys[0] or t > keys[-1]:
        raise KeyError(t)
    hi = next(k for k in keys if k > t)
    lo = max(k for k in keys if k < t)
    w = (1 / t - 1 / hi) / (1 / lo - 1 / hi)
    a, b = grid[lo], grid[hi]
    return (w * a[0] + (1 - w) * b[0], w * a[1] + (1 - w) * b[1])


def llc_adjustment(t_tilde: int, deterministic: str, simulate: bool = False,
                   seed: int = 0) -> Tuple[float, float]:
    """Mean and standard-deviation adjustments ``(mu*, sigma*)`` for average length ``t_tilde``."""
    table = _moment_table()["llc"][deterministic]
    grid = {int(k): tuple(v) for k, v in table.items()}
    try:
        return _interp_in_inverse_t(grid, t_tilde)
    except KeyError:
        if t_tilde > max(grid):
            return grid[max(grid)]
        if not simulate:
            raise UnitRootError(
                f"no LLC adjustment for T~={t_tilde}, {deterministic}; enable simulation"
            ) from None
    return simulate_llc_adjustment(t_tilde, deterministic, seed=seed)


def ips_moments(n_obs: int, lags: int, deterministic: str, simulate: bool = False,
                seed: int = 0) -> Tuple[float, float]:
    """Null mean and variance of the ADF t for a series with ``n_obs`` observations."""
    table = _moment_table()["ips"][deterministic].get(str(lags))
    if table is not None:
        grid = {int(k): tuple(v) for k, v in table.items()}
        try:
            return _interp_in_inverse_t(grid, n_obs)
        except KeyError:
            pass
    if not simulate:
        raise UnitRootError(
            f"no IPS moments for T={n_obs}, p={lags}, {deterministic}; enable simulation"
        )
    return simulate_ips_moments(n_obs, lags, deterministic, seed=seed)


def _batched_adf(Y: np.ndarray, lags: int, n_det: int):
    """ADF pieces for many complete series of equal length at once.

    Returns the t statistics, the ADF residual variances and, for LLC, the
    partial-regression residuals of ``dy_t`` and ``y_{t-1}``.
    """
    R, T = Y.shape
    dY = np.diff(Y, axis=1)
    n = T - 1 - lags
    lhs = dY[:, lags:]
    ylag = Y[:, lags:T - 1]
    cols = [dY[:, lags - j:T - 1 - j] for j in range(1, lags + 1)]
    det = [np.ones((R, n)), np.broadcast_to(np.arange(lags + 1, T, dtype=float), (R, n))][:n_det]
    aux = np.stack(cols + det, axis=2) if cols or det else np.zeros((R, n, 0))
    if aux.shape[2]:
        ata = np.einsum("rti,rtj->rij", aux, aux)
        ainv = np.linalg.inv(ata)

        def resid(v):
            coef = np.einsum("rij,rj->ri", ainv, np.einsum("rti,rt->ri", aux, v))
            return v - np.einsum("rti,ri->rt", aux, coef)

        e, v = resid(lhs), resid(ylag)
    else:
        e, v = lhs, ylag
    vv = np.sum(v * v, axis=1)
    rho = np.sum(v * e, axis=1) / vv
    u = e - rho[:, None] * v
    k = 1 + lags + n_det
    s2 = np.sum(u * u, axis=1) / (n - k)
    t = rho / np.sqrt(s2 / vv)
    return t, s2, e, v, dY


def _long_run_variance(dY: np.ndarray, demean: bool, bandwidth: int) -> np.ndarray:
    """Bartlett-kernel long-run variance of each row of ``dY``.

    Differences are demeaned only for the trend model.
    """
    d = dY - dY.mean(axis=1, keepdims=True) if demean else dY
    m = d.shape[1]
    out = np.sum(d * d, axis=1) / m
    for L in range(1, min(bandwidth, m - 1) + 1):
        w = 1.0 - L / (bandwidth + 1.0)
        out = out + 2.0 * w * np.sum(d[:, L:] * d[:, :-L], axis=1) / m
    return out


def llc_bandwidth(n_periods: int) -> int:
    return int(round(3.21 * n_periods ** (1.0 / 3.0)))


def simulate_llc_adjustment(t_tilde: int, deterministic: str, reps: int = 50_000,
                            seed: int = 0, batch: int = 10_000) -> Tuple[float, float]:
    """Simulate ``(mu*, sigma*)`` from Gaussian random walks.

    ``mu*`` centres the pooled numerator ``sum(v e) - T~ S_N mu*`` and
    ``sigma*`` scales the centred t ratio to unit variance, both evaluated
    per unit and aggregated as in the pooled statistic.
    """
    n_det = DETERMINISTICS.index(deterministic)
    T = t_tilde + 1
    rng = np.random.default_rng(seed)
    num, den, shat, ssq = [], [], [], []
    done = 0
    while done < reps:
        r = min(batch, reps - done)
        Y = np.cumsum(rng.standard_normal((r, T)), axis=1)
        _, s2, e, v, dY = _batched_adf(Y, 0, n_det)
        sig = np.sqrt(s2)
        et, vt = e / sig[:, None], v / sig[:, None]
        lrv = _long_run_variance(dY, n_det == 2, llc_bandwidth(T))
        num.append(np.sum(vt * et, axis=1))
        den.append(np.sum(vt * vt, axis=1))
        shat.append(np.sqrt(lrv) / sig)
        ssq.append(np.sum(et * et, axis=1))
        done += r
    num, den, shat, ssq = map(np.concatenate, (num, den, shat, ssq))
    mu = num.mean() / (t_tilde * shat.mean())
    centred = num - t_tilde * shat * mu
    sigma2_eps = ssq.mean() / t_tilde
    sigma = math.sqrt(centred.var() / (den.mean() * sigma2_eps))
    return float(mu), float(sigma)


def simulate_ips_moments(n_obs: int, lags: int, deterministic: str, reps: int = 50_000,
                         seed: int = 0, batch: int = 10_000) -> Tuple[float, float]:
    """Simulate the null mean and variance of the ADF t for iid Gaussian random walks."""
    n_det = DETERMINISTICS.index(deterministic)
    rng = np.random.default_rng(seed)
    ts = []
    done = 0
    while done < reps:
        r = min(batch, reps - done)
        Y = np.cumsum(rng.standard_normal((r, n_obs)), axis=1)
        ts.append(_batched_adf(Y, lags, n_det)[0])
        done += r
    t = np.concatenate(ts)
    return float(t.mean()), float(t.var(ddof=1))


# --------------------------------------------------------------------------
# Panel tests


@dataclass
class _UnitAdf:
    unit: str
    lags: int
    n_obs: int
    rows: int
    t: float
    e: np.ndarray
    v: np.ndarray
    s2: float
    lrv: float


def _unit_pieces(y: np.ndarray, unit: str, spec: AdfSpec) -> Optional[_UnitAdf]:
    obs = y[~np.isnan(y)]
    lags = spec.lags
    if spec.select_lags:
        try:
            lags = select_lag_bic(y, spec)
        except (np.linalg.LinAlgError, ValueError):
            return None
    lhs, X = _adf_design(y, lags, spec.n_det)
    k = X.shape[1]
    if lhs.size < max(lags + 3, k + 2):
        return None
    t, _, s2 = _ols_t(lhs, X)
    aux = X[:, 1:]
    if aux.shape[1]:
        proj = aux @ np.linalg.lstsq(aux, np.column_stack([lhs, X[:, 0]]), rcond=None)[0]
        e, v = lhs - proj[:, 0], X[:, 0] - proj[:, 1]
    else:
        e, v = lhs, X[:, 0]
    dy = np.diff(y)
    dy = dy[~np.isnan(dy)]
    lrv = float(_long_run_variance(dy[None, :], spec.n_det == 2, llc_bandwidth(obs.size))[0])
    return _UnitAdf(unit, lags, int(obs.size), int(lhs.size), t, e, v, s2, lrv)


def _collect(panel: PanelDataset, variable: str, spec: AdfSpec):
    values = panel[variable]
    used, dropped = [], []
    for i, unit in enumerate(panel.units):
        piece = _unit_pieces(values[i], unit, spec)
        if piece is None:
            dropped.append(unit)
        else:
            used.append(piece)
    return used, dropped


def _periods_used(panel: PanelDataset, variable: str, units: Sequence[str]) -> int:
    idx = [panel.units.index(u) for u in units]
    observed = panel.mask(variable)[idx].any(axis=0)
    return int(observed.sum())


def llc_test(panel: PanelDataset, variable: str, spec: AdfSpec = AdfSpec(),
             simulate: bool = False) -> UnitRootResult:
    """Levin-Lin-Chu pooled test with the adjusted ``t*`` statistic.

    The null is a common unit root; the p-value is the lower normal tail.
    """
    if panel.n_units < 2:
        raise UnitRootError("LLC needs at least two units; use adf_stat for a single series")
    used, dropped = _collect(panel, variable, spec)
    if len(used) < 2:
        raise InsufficientDataError(
            f"{len(used)} unit(s) of {variable!r} have enough observations for LLC"
        )
    num = den = ssq = 0.0
    rows = 0
    shat = []
    for u in used:
        sig = math.sqrt(u.s2)
        et, vt = u.e / sig, u.v / sig
        num += float(vt @ et)
        den += float(vt @ vt)
        ssq += float(et @ et)
        rows += u.rows
        shat.append(math.sqrt(u.lrv) / sig)
    n = len(used)
    t_tilde = int(round(rows / n))
    delta = num / den
    sigma2 = (ssq - 2 * delta * num + delta * delta * den) / rows
    se = math.sqrt(sigma2 / den)
    t_delta = delta / se
    s_n = float(np.mean(shat))
    mu, sd = llc_adjustment(t_tilde, spec.deterministic, simulate=simulate)
    t_star = (t_delta - n * t_tilde * s_n * se * mu / sigma2) / sd
    return UnitRootResult(
        test="Levin-Lin-Chu",
        statistic=float(t_star),
        pvalue=float(stats.norm.cdf(t_star)),
        spec=spec,
        n_units=n,
        n_periods=_periods_used(panel, variable, [u.unit for u in used]),
        units_used=[u.unit for u in used],
        units_dropped=dropped,
        unit_stats=[u.t for u in used],
        unit_lags=[u.lags for u in used],
        raw_statistic=float(t_delta),
    )


def ips_test(panel: PanelDataset, variable: str, spec: AdfSpec = AdfSpec(),
             simulate: bool = False) -> UnitRootResult:
    """Im-Pesaran-Shin ``W_t-bar`` test on the cross-unit mean ADF t statistic.

    Moments are looked up per unit, so unbalanced panels and BIC-selected
    lags are supported; the p-value is the lower normal tail.
    """
    if panel.n_units < 2:
        raise UnitRootError("IPS needs at least two units; use adf_stat for a single series")
    used, dropped = _collect(panel, variable, spec)
    if len(used) < 2:
        raise InsufficientDataError(
            f"{len(used)} unit(s) of {variable!r} have enough observations for IPS"
        )
    ts = np.array([u.t for u in used])
    moments = np.array([
        ips_moments(u.n_obs, u.lags, spec.deterministic, simulate=simulate) for u in used
    ])
    n = len(used)
    t_bar = float(ts.mean())
    w = math.sqrt(n) * (t_bar - moments[:, 0].mean()) / math.sqrt(moments[:, 1].mean())
    return UnitRootResult(
        test="Im-Pesaran-Shin",
        statistic=float(w),
        pvalue=float(stats.norm.cdf(w)),
        spec=spec,
        n_units=n,
        n_periods=_periods_used(panel, variable, [u.unit for u in used]),
        units_used=[u.unit for u in used],
        units_dropped=dropped,
        unit_stats=ts.tolist(),
        unit_lags=[u.lags for u in used],
        raw_statistic=t_bar,
    )
