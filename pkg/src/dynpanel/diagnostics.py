"""Specification tests for GMM estimates and panel residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .gmm import GmmEstimate, GmmSystem, _solve, _unit_sums, fit_system, two_step_from
from .panel import PanelDataset


class DiagnosticError(ValueError):
    pass


@dataclass
class TestResult:
    name: str
    statistic: float
    pvalue: float
    df: Optional[int] = None
    subset: Optional[List[str]] = None
    warnings: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"name": self.name, "statistic": self.statistic, "pvalue": self.pvalue,
                "df": self.df, "subset": self.subset, "warnings": list(self.warnings)}


def _chi2(name: str, stat: float, df: int, **kw) -> TestResult:
    p = float(stats.chi2.sf(stat, df)) if df > 0 else 1.0
    return TestResult(name, float(stat), min(max(p, 0.0), 1.0), int(df), **kw)


def _moment(est_sys: GmmSystem, resid: np.ndarray) -> np.ndarray:
    return est_sys.Z.T @ resid


def sargan(est: GmmEstimate) -> TestResult:
    """Sargan over-identification test from the one-step fit.

    The quadratic form in the one-step weight is scaled by the residual
    variance ``e'e / tr(H)``, which for differenced equations estimates the
    idiosyncratic variance.
    """
    sys = est.system
    e = est.resid_one_step
    g = _moment(sys, e)
    trace = sum(np.trace(H) for H in sys.h_blocks())
    sigma2 = float(e @ e) / trace
    if sigma2 <= 0:
        raise DiagnosticError("one-step residuals are identically zero")
    stat = float(g @ est.W1 @ g) / sigma2
    return _chi2("Sargan", max(stat, 0.0), est.instrument_count - est.n_params)


def hansen_j(est: GmmEstimate, weight: Optional[np.ndarray] = None) -> TestResult:
    """Hansen J from the two-step criterion.

    A one-step estimate is re-fitted to two steps on the same instruments.
    ``weight`` replaces the two-step weight and re-solves with it.
    """
    two = two_step_from(est)
    sys = two.system
    if weight is None:
        W, e = two.W2, two.resid
    else:
        W = weight
        e = _solve(sys, W).resid
    g = _moment(sys, e)
    stat = float(g @ W @ g)
    return _chi2("Hansen", max(stat, 0.0), two.instrument_count - two.n_params)


def _subset_indices(est: GmmEstimate, subset: Sequence[Union[int, str]]) -> List[int]:
    names = est.system.instrument_names
    idx = []
    for s in subset:
        if isinstance(s, (int, np.integer)):
            if not 0 <= s < len(names):
                raise DiagnosticError(f"instrument index {s} out of range")
            idx.append(int(s))
        else:
            if s not in names:
                raise DiagnosticError(f"unknown instrument {s!r}")
            idx.append(names.index(s))
    return sorted(set(idx))


def instruments_matching(est: GmmEstimate, prefix: str) -> List[int]:
    """Indices of instrument columns whose name contains ``prefix``."""
    return [j for j, n in enumerate(est.system.instrument_names) if prefix in n]


def difference_in_hansen(est: GmmEstimate, subset: Sequence[Union[int, str]]) -> TestResult:
    """Hansen difference between the full instrument set and the set without ``subset``.

    Negative differences are clamped to zero and flagged.
    """
    idx = _subset_indices(est, subset)
    L, k = est.instrument_count, est.n_params
    if not idx:
        raise DiagnosticError("instrument subset must be nonempty")
    if len(idx) >= L:
        raise DiagnosticError("instrument subset must be a proper subset")
    if L - len(idx) < k:
        raise DiagnosticError(
            f"removing {len(idx)} instruments leaves {L - len(idx)} for {k} parameters"
        )
    full = hansen_j(est)
    keep = [j for j in range(L) if j not in idx]
    reduced_sys = est.system.with_instruments(keep)
    reduced = fit_system(reduced_sys, est.spec, est.plan, "two", windmeijer=False)
    j_red = hansen_j(reduced)
    stat = full.statistic - j_red.statistic
    notes = []
    if stat < 0:
        notes.append(f"negative difference {stat:.6g} clamped to 0")
        stat = 0.0
    res = _chi2("Difference-in-Hansen", stat, len(idx),
                subset=[est.system.instrument_names[j] for j in idx])
    res.warnings = notes
    return res


def _lagged_residuals(sys: GmmSystem, e: np.ndarray, order: int):
    """Residual of the same unit ``order`` periods earlier, on differenced rows; 0 elsewhere.

    Also returns the number of rows that have such a lagged residual.
    """
    w = np.zeros_like(e)
    pairs = 0
    for a, b in zip(sys.starts[:-1], sys.starts[1:]):
        d = np.flatnonzero(sys.eq[a:b] == "d") + a
        lookup = {int(sys.period[r]): e[r] for r in d}
        for r in d:
            lag = int(sys.period[r]) - order
            if lag in lookup:
                w[r] = lookup[lag]
                pairs += 1
    return w, pairs


def ar_test(est: GmmEstimate, order: int = 2, correction: bool = True) -> TestResult:
    """Arellano-Bond test for serial correlation of order ``order`` in differenced residuals.

    With ``correction`` the variance includes the terms for estimated
    coefficients; without it the statistic is the plain autocovariance ratio.
    """
    if order < 1:
        raise DiagnosticError("AR order must be >= 1")
    sys = est.system
    e = np.where(sys.eq == "d", est.resid, 0.0)
    w, pairs = _lagged_residuals(sys, e, order)
    if pairs == 0:
        raise DiagnosticError(f"too few periods for an AR({order}) test")
    prod = np.add.reduceat(w * e, sys.starts[:-1])
    num = float(prod.sum())
    var = float(prod @ prod)
    if correction:
        A = est.W2 if est.step == "two" else est.W1
        XZ = sys.X.T @ sys.Z
        M_inv = np.linalg.inv(XZ @ A @ XZ.T)
        full_e = est.resid
        g = _unit_sums(sys, full_e)               # Z_i' e_i
        ew = np.add.reduceat(full_e * w, sys.starts[:-1])
        wX = w @ sys.X
        var += (-2.0 * wX @ M_inv @ XZ @ A @ (g.T @ ew) + wX @ est.cov @ wX)
    if not var > 0:
        raise DiagnosticError(f"AR({order}) variance is not positive; residuals degenerate")
    z = num / math.sqrt(var)
    return TestResult(f"AR({order})", float(z), float(2 * stats.norm.sf(abs(z))))


def residual_matrix(est: GmmEstimate, equation: str = "d") -> np.ndarray:
    """Units x periods residual matrix (NaN where a unit has no row)."""
    sys = est.system
    T = int(sys.period.max()) + 1
    out = np.full((sys.n_groups, T), np.nan)
    rows = sys.eq == equation
    out[sys.unit[rows], sys.period[rows]] = est.resid[rows]
    return out


def pesaran_cd(data: Union[np.ndarray, GmmEstimate, PanelDataset], variable: Optional[str] = None,
               min_overlap: int = 3) -> TestResult:
    """Pesaran CD test of cross-sectional dependence.

    ``data`` is a units x periods matrix (NaN for missing), a panel together
    with ``variable``, or a GMM estimate whose differenced residuals are used.
    Pairs sharing fewer than ``min_overlap`` periods are dropped.
    """
    if isinstance(data, GmmEstimate):
        M = residual_matrix(data)
    elif isinstance(data, PanelDataset):
        if variable is None:
            raise DiagnosticError("variable required when testing a panel")
        M = np.asarray(data[variable], dtype=float)
    else:
        M = np.asarray(data, dtype=float)
    N = M.shape[0]
    if N < 2:
        raise DiagnosticError("Pesaran CD needs at least two units")
    obs = ~np.isnan(M)
    total, pairs, dropped = 0.0, 0, 0
    for i in range(N - 1):
        for j in range(i + 1, N):
            both = obs[i] & obs[j]
            n = int(both.sum())
            if n < min_overlap:
                dropped += 1
                continue
            a = M[i, both] - M[i, both].mean()
            b = M[j, both] - M[j, both].mean()
            den = math.sqrt(float(a @ a) * float(b @ b))
            if den == 0:
                dropped += 1
                continue
            total += math.sqrt(n) * float(a @ b) / den
            pairs += 1
    if pairs == 0:
        raise DiagnosticError("no unit pairs with enough overlapping periods")
    cd = total / math.sqrt(pairs)
    res = TestResult("Pesaran CD", float(cd), float(2 * stats.norm.sf(abs(cd))))
    if dropped:
        res.warnings.append(f"{dropped} unit pair(s) dropped for insufficient overlap")
    return res


def wald_joint(est: GmmEstimate, names: Sequence[str]) -> TestResult:
    """Wald chi-squared test that the named coefficients are jointly zero."""
    if not names:
        raise DiagnosticError("coefficient subset must be nonempty")
    missing = [n for n in names if n not in est.names]
    if missing:
        raise DiagnosticError(f"unknown coefficient(s): {', '.join(missing)}")
    idx = [est.names.index(n) for n in names]
    b = est.params[idx]
    V = est.cov[np.ix_(idx, idx)]
    try:
        stat = float(b @ np.linalg.solve(V, b))
    except np.linalg.LinAlgError:
        raise DiagnosticError("covariance block of the tested coefficients is singular") from None
    if np.linalg.cond(V) > 1e14:
        raise DiagnosticError("covariance block of the tested coefficients is singular")
    return _chi2("Wald", stat, len(idx), subset=list(names))
