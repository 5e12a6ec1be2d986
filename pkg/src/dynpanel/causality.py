"""Dumitrescu-Hurlin Granger non-causality test for heterogeneous panels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats

from .panel import PanelDataset

HARMONIZE = ("truncate", "per_unit", "strict")


class CausalityError(ValueError):
    pass


@dataclass(frozen=True)
class DhConfig:
    """Lag order ``K``, usable regression length ``T`` and unit count ``N``.

    The variance of the individual Wald statistic exists only when
    ``T - 2K - 5 > 0``.
    """

    lags: int
    t: int
    n: int

    def __post_init__(self):
        if self.lags < 1:
            raise CausalityError("lag order K must be >= 1")
        if self.n < 1:
            raise CausalityError("unit count N must be >= 1")
        if self.t - 2 * self.lags - 5 <= 0:
            raise CausalityError(
                f"T={self.t} too short for K={self.lags}: need T > 2K + 5 "
                "for the Wald variance to be positive"
            )

    @property
    def wald_mean(self) -> float:
        T, K = self.t, self.lags
        return K * (T - 2 * K - 1) / (T - 2 * K - 3)

    @property
    def wald_var(self) -> float:
        T, K = self.t, self.lags
        return (2 * K * (T - 2 * K - 1) ** 2 * (T - K - 3)
                / ((T - 2 * K - 3) ** 2 * (T - 2 * K - 5)))


@dataclass
class DhResult:
    cause: str
    effect: str
    w_bar: float
    z_bar: float
    z_bar_pvalue: float
    z_tilde: float
    z_tilde_pvalue: float
    unit_walds: List[float]
    config: DhConfig
    units: List[str] = field(default_factory=list)
    unit_lengths: List[int] = field(default_factory=list)
    flagged_units: List[str] = field(default_factory=list)

    @property
    def hypothesis(self) -> str:
        return f"{self.cause} does not Granger-cause {self.effect}"


def _two_sided(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def standardize_dh(w_bar: float, cfg: DhConfig) -> Tuple[float, float]:
    """Asymptotic ``Z-bar`` and fixed-T ``Z-bar tilde`` for a mean Wald ``w_bar``."""
    N, K = cfg.n, cfg.lags
    z_bar = math.sqrt(N / (2 * K)) * (w_bar - K)
    z_tilde = math.sqrt(N) * (w_bar - cfg.wald_mean) / math.sqrt(cfg.wald_var)
    return z_bar, z_tilde


def _design(x: np.ndarray, y: np.ndarray, K: int, periods: Sequence[int]):
    rows = [[1.0] + [y[t - j] for j in range(1, K + 1)] + [x[t - j] for j in range(1, K + 1)]
            for t in periods]
    return np.asarray([y[t] for t in periods], dtype=float), np.asarray(rows, dtype=float)


def usable_periods(x: np.ndarray, y: np.ndarray, K: int) -> List[int]:
    """Positions ``t`` where ``y_t`` and ``K`` lags of both series are observed."""
    ok = []
    for t in range(K, len(y)):
        window = [y[t]] + [y[t - j] for j in range(1, K + 1)] + [x[t - j] for j in range(1, K + 1)]
        if not any(np.isnan(v) for v in window):
            ok.append(t)
    return ok


def _wald_from_design(lhs: np.ndarray, X: np.ndarray, K: int) -> float:
    n, k = X.shape
    if n < 2 * K + 2:
        raise CausalityError(f"{n} usable observations; need at least {2 * K + 2}")
    q, r = np.linalg.qr(X)
    d = np.abs(np.diag(r))
    if d.min() <= 1e-12 * max(d.max(), 1.0):
        raise CausalityError("singular regressor cross-product in unit regression")
    beta = np.linalg.solve(r, q.T @ lhs)
    resid = lhs - X @ beta
    rss = float(resid @ resid)
    rinv = np.linalg.solve(r, np.eye(k))
    cov = rinv @ rinv.T
    bx = beta[k - K:]
    quad = float(bx @ np.linalg.solve(cov[k - K:, k - K:], bx))
    if rss <= 1e-28 * max(float(lhs @ lhs), 1e-300):
        return math.inf
    if n - k <= 0:
        raise CausalityError("no residual degrees of freedom")
    return quad / (rss / (n - k))


def unit_wald(x: Sequence[float], y: Sequence[float], lags: int) -> float:
    """Wald statistic that the ``lags`` lags of ``x`` do not enter the regression of ``y``.

    The unrestricted regression has an intercept and ``lags`` own lags of
    ``y``. Returns ``inf`` when the unrestricted fit is exact.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise CausalityError("cause and effect series must have equal length")
    lhs, X = _design(x, y, lags, usable_periods(x, y, lags))
    return _wald_from_design(lhs, X, lags)


def dh_test(
    panel: PanelDataset,
    cause: str,
    effect: str,
    lags: int = 1,
    harmonize: str = "truncate",
    flag_threshold: float = 1e4,
) -> DhResult:
    """Dumitrescu-Hurlin test of "``cause`` does not Granger-cause ``effect``".

    ``harmonize`` chooses how units with different usable lengths are handled:
    ``truncate`` keeps only the periods usable in every unit, ``per_unit``
    standardizes with each unit's own length, ``strict`` raises.
    """
    if harmonize not in HARMONIZE:
        raise CausalityError(f"unknown harmonization policy {harmonize!r}")
    X, Y = panel[cause], panel[effect]
    min_rows = 2 * lags + 2
    usable = {}
    for i, unit in enumerate(panel.units):
        rows = usable_periods(X[i], Y[i], lags)
        if len(rows) >= min_rows:
            usable[i] = rows
    if len(usable) < 2:
        raise CausalityError(
            f"only {len(usable)} unit(s) usable for {cause} -> {effect}; need at least 2"
        )
    lengths = {len(r) for r in usable.values()}
    if len(lengths) > 1 or len({tuple(r) for r in usable.values()}) > 1:
        if harmonize == "strict":
            raise CausalityError(
                "units have different usable windows; choose 'truncate' or 'per_unit'"
            )
        if harmonize == "truncate":
            common = sorted(set.intersection(*(set(r) for r in usable.values())))
            if len(common) < min_rows:
                raise CausalityError("common usable window across units is too short")
            usable = {i: common for i in usable}
    idx = sorted(usable)
    walds, lens = [], []
    for i in idx:
        lhs, D = _design(X[i], Y[i], lags, usable[i])
        walds.append(_wald_from_design(lhs, D, lags))
        lens.append(len(usable[i]))
    n = len(idx)
    w_bar = float(np.mean(walds))
    if harmonize == "per_unit" and len(set(lens)) > 1:
        cfgs = [DhConfig(lags, t, n) for t in lens]
        cfg = DhConfig(lags, min(lens), n)
        mean = float(np.mean([c.wald_mean for c in cfgs]))
        var = float(np.mean([c.wald_var for c in cfgs]))
        z_bar = math.sqrt(n / (2 * lags)) * (w_bar - lags)
        z_tilde = math.sqrt(n) * (w_bar - mean) / math.sqrt(var)
    else:
        cfg = DhConfig(lags, lens[0], n)
        z_bar, z_tilde = standardize_dh(w_bar, cfg)
    units = [panel.units[i] for i in idx]
    return DhResult(
        cause=cause,
        effect=effect,
        w_bar=w_bar,
        z_bar=z_bar,
        z_bar_pvalue=_two_sided(z_bar),
        z_tilde=z_tilde,
        z_tilde_pvalue=_two_sided(z_tilde),
        unit_walds=[float(w) for w in walds],
        config=cfg,
        units=units,
        unit_lengths=lens,
        flagged_units=[u for u, w in zip(units, walds) if not w <= flag_threshold],
    )
