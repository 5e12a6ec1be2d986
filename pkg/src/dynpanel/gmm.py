"""Difference and system GMM for linear dynamic panel models.

The estimator stacks, per unit, the first-differenced equations (and, for
system GMM, the level equations) and solves

    b = (X'Z W Z'X)^-1 X'Z W Z'y

with the one-step weight ``W1 = (sum_i Z_i' H Z_i)^+`` and the two-step
weight ``W2 = (sum_i Z_i' e_i e_i' Z_i)^+`` built from one-step residuals.
Two-step covariances carry the Windmeijer (2005) finite-sample correction
by default.

Missing instrument cells are zero-filled, so unbalanced panels are handled
without dropping units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .panel import PanelDataset, diff, lag

ROLES = ("exogenous", "predetermined", "endogenous")
SCHEMES = ("difference", "system")
STEPS = ("one", "two")
CONST = "_cons"


class GmmError(ValueError):
    pass


class SpecificationError(GmmError):
    pass


class EstimationError(GmmError):
    pass


class GmmWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """One dynamic panel equation.

    ``regressors`` is a sequence of ``(variable, role)`` pairs. ``lags`` is the
    number of lags of the dependent variable on the right-hand side.
    """

    dependent: str
    regressors: Tuple[Tuple[str, str], ...] = ()
    lags: int = 1
    time_dummies: bool = False

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple((str(v), str(r)) for v, r in self.regressors))
        names = [v for v, _ in self.regressors]
        if self.dependent in names:
            raise SpecificationError(f"dependent {self.dependent!r} listed among regressors")
        if len(set(names)) != len(names):
            raise SpecificationError("duplicate regressor")
        for v, r in self.regressors:
            if r not in ROLES:
                raise SpecificationError(f"regressor {v!r} has unknown role {r!r}")
        if self.lags < 0:
            raise SpecificationError("lags of the dependent variable must be >= 0")

    @property
    def lag_names(self) -> List[str]:
        if self.lags == 1:
            return [f"L.{self.dependent}"]
        return [f"L{j}.{self.dependent}" for j in range(1, self.lags + 1)]

    def role_of(self, variable: str) -> str:
        return dict(self.regressors)[variable]


@dataclass(frozen=True)
class GmmStyle:
    """Lagged levels of ``variable`` as instruments for the differenced equations.

    With ``levels`` (system GMM only) the lagged first difference of the
    variable also instruments the level equations.
    """

    variable: str
    min_lag: int = 2
    max_lag: Optional[int] = None
    collapse: bool = False
    levels: bool = True

    def __post_init__(self):
        if self.min_lag < 1:
            raise SpecificationError("GMM-style min_lag must be >= 1")
        if self.max_lag is not None and self.max_lag < self.min_lag:
            raise SpecificationError(f"max_lag < min_lag for {self.variable!r}")


@dataclass(frozen=True)
class InstrumentPlan:
    """GMM-style and IV-style instrument definitions.

    ``level_lag`` is the lag of the first difference used to instrument the
    level equations of system GMM; ``None`` leaves the level block without
    GMM-style instruments.
    """

    gmm_style: Tuple[GmmStyle, ...] = ()
    iv_style: Tuple[str, ...] = ()
    level_lag: Optional[int] = 1

    def __post_init__(self):
        object.__setattr__(self, "gmm_style", tuple(self.gmm_style))
        object.__setattr__(self, "iv_style", tuple(self.iv_style))
        if self.level_lag is not None and self.level_lag < 0:
            raise SpecificationError("level_lag must be >= 0")

    def validate(self, spec: ModelSpec) -> None:
        if spec.lags > 0:
            dep = [g for g in self.gmm_style if g.variable == spec.dependent]
            if not dep or min(g.min_lag for g in dep) < 2:
                raise SpecificationError(
                    "the lagged dependent variable needs a GMM-style entry with min_lag >= 2"
                )


def default_plan(spec: ModelSpec, max_lag: Optional[int] = 3, collapse: bool = True,
                 level_lag: Optional[int] = 1) -> InstrumentPlan:
    """Instruments implied by regressor roles.

    The dependent and endogenous regressors use lags ``2..max_lag``,
    predetermined regressors ``1..max_lag`` and exogenous regressors enter
    IV-style.
    """
    gmm, iv = [], []
    if spec.lags > 0:
        gmm.append(GmmStyle(spec.dependent, 2, max_lag, collapse))
    for v, role in spec.regressors:
        if role == "exogenous":
            iv.append(v)
        else:
            lo = 2 if role == "endogenous" else 1
            hi = None if max_lag is None else max(max_lag, lo)
            gmm.append(GmmStyle(v, lo, hi, collapse))
    return InstrumentPlan(tuple(gmm), tuple(iv), level_lag)


# --------------------------------------------------------------------------
# Stacked data


@dataclass
class GmmSystem:
    """Stacked transformed data for one estimation.

    Rows are grouped by unit; ``eq`` is ``"d"`` for differenced and ``"l"``
    for level equations and ``period`` holds the period index of each row.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    unit: np.ndarray
    period: np.ndarray
    eq: np.ndarray
    names: List[str]
    instrument_names: List[str]
    omitted: List[str]
    units: List[str]
    scheme: str
    starts: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.starts is None:
            self.starts = np.searchsorted(self.unit, np.arange(len(self.units) + 1))

    @property
    def blocks(self) -> List[np.ndarray]:
        """Per-unit instrument matrices ``Z_i``."""
        return [self.Z[a:b] for a, b in zip(self.starts[:-1], self.starts[1:])]

    @property
    def n_groups(self) -> int:
        return len(self.units)

    @property
    def n_obs(self) -> int:
        """Observations reported: differenced rows for difference GMM, level rows for system GMM."""
        return int(np.sum(self.eq == ("l" if self.scheme == "system" else "d")))

    def h_blocks(self) -> List[np.ndarray]:
        """One-step weighting structure per unit: tridiagonal (2, -1) on differenced rows,
        identity on level rows."""
        out = []
        for a, b in zip(self.starts[:-1], self.starts[1:]):
            per, eq = self.period[a:b], self.eq[a:b]
            d = eq == "d"
            H = np.eye(b - a)
            pd_ = per[d]
            Hd = 2.0 * np.eye(d.sum()) - (np.abs(pd_[:, None] - pd_[None, :]) == 1)
            H[np.ix_(d, d)] = Hd
            out.append(H)
        return out

    def with_instruments(self, keep: Sequence[int]) -> "GmmSystem":
        keep = list(keep)
        return replace(self, Z=self.Z[:, keep],
                       instrument_names=[self.instrument_names[j] for j in keep],
                       starts=self.starts)


def _regressor_arrays(panel: PanelDataset, spec: ModelSpec):
    y = panel[spec.dependent]
    arrays = {}
    for j, name in enumerate(spec.lag_names, start=1):
        arrays[name] = lag(y, j)
    for v, _ in spec.regressors:
        arrays[v] = panel[v]
    return y, arrays


def _dummy_arrays(panel: PanelDataset) -> Dict[str, np.ndarray]:
    N, T = panel.n_units, panel.n_periods
    out = {}
    for j in range(T):
        d = np.zeros((N, T))
        d[:, j] = 1.0
        out[f"yr{j + 1}"] = d
    return out


def _check_variables(panel: PanelDataset, spec: ModelSpec, plan: InstrumentPlan) -> None:
    needed = [spec.dependent] + [v for v, _ in spec.regressors]
    needed += [g.variable for g in plan.gmm_style] + list(plan.iv_style)
    missing = [v for v in needed if v not in panel]
    if missing:
        raise SpecificationError(f"unknown variable(s): {', '.join(sorted(set(missing)))}")


def _independent_columns(M: np.ndarray, tol: float = 1e-10) -> List[int]:
    """Greedy left-to-right selection of linearly independent columns."""
    keep: List[int] = []
    basis = np.zeros((M.shape[0], 0))
    for j in range(M.shape[1]):
        col = M[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        r = col - basis @ (basis.T @ col) if basis.shape[1] else col
        r = r - basis @ (basis.T @ r) if basis.shape[1] else r
        if np.linalg.norm(r) > tol * norm:
            basis = np.column_stack([basis, r / np.linalg.norm(r)])
            keep.append(j)
    return keep


def _build(panel: PanelDataset, spec: ModelSpec, plan: InstrumentPlan, scheme: str) -> GmmSystem:
    if scheme not in SCHEMES:
        raise SpecificationError(f"unknown scheme {scheme!r}")
    _check_variables(panel, spec, plan)
    plan.validate(spec)
    T = panel.n_periods
    if T < 3:
        raise SpecificationError("need at least 3 periods")
    y, regs = _regressor_arrays(panel, spec)
    base_names = list(regs)
    dummies = _dummy_arrays(panel) if spec.time_dummies else {}

    dy = diff(y)
    dregs = {k: diff(v) for k, v in regs.items()}
    d_ok = ~np.isnan(dy)
    for v in dregs.values():
        d_ok &= ~np.isnan(v)
    l_ok = ~np.isnan(y)
    for v in regs.values():
        l_ok &= ~np.isnan(v)

    level_cols: List[Tuple] = []
    if scheme == "system":
        if plan.level_lag is not None:
            level_cols += [("lgmm", g) for g in plan.gmm_style if g.levels]
        level_cols += [("liv", v) for v in plan.iv_style]
        level_cols += [("ldum", k) for k in dummies]
    use_levels = bool(level_cols)
    if use_levels:
        level_cols.append(("lcons", None))

    names = base_names + list(dummies)
    if use_levels:
        names = base_names + [CONST] + list(dummies)

    gmm_levels = {g.variable: panel[g.variable] for g in plan.gmm_style}
    gmm_diffs = {k: diff(v) for k, v in gmm_levels.items()}
    iv_levels = {v: panel[v] for v in plan.iv_style}
    iv_diffs = {k: diff(v) for k, v in iv_levels.items()}

    rows_y, rows_x, rows_unit, rows_per, rows_eq = [], [], [], [], []
    inst: List[Dict[Tuple, float]] = []
    units = []
    for i, code in enumerate(panel.units):
        d_rows = [t for t in range(T) if d_ok[i, t]]
        l_rows = [t for t in range(T) if l_ok[i, t]] if use_levels else []
        if not d_rows:
            continue
        u = len(units)
        units.append(code)
        for t in d_rows:
            xr = [dregs[k][i, t] for k in base_names]
            if use_levels:
                xr.append(0.0)
            xr += [dummies[k][i, t] - dummies[k][i, t - 1] for k in dummies]
            rows_y.append(dy[i, t])
            rows_x.append(xr)
            rows_unit.append(u)
            rows_per.append(t)
            rows_eq.append("d")
            cells: Dict[Tuple, float] = {}
            for g in plan.gmm_style:
                w = gmm_levels[g.variable]
                hi = t if g.max_lag is None else min(g.max_lag, t)
                for l in range(g.min_lag, hi + 1):
                    val = w[i, t - l]
                    if np.isnan(val):
                        continue
                    key = ("d", g.variable, l) if g.collapse else ("d", g.variable, t, l)
                    cells[key] = val
            for v in plan.iv_style:
                val = iv_diffs[v][i, t]
                if not np.isnan(val):
                    cells[("div", v)] = val
            for k in dummies:
                val = dummies[k][i, t] - dummies[k][i, t - 1]
                if val:
                    cells[("ddum", k)] = val
            inst.append(cells)
        for t in l_rows:
            xr = [regs[k][i, t] for k in base_names] + [1.0] + [dummies[k][i, t] for k in dummies]
            rows_y.append(y[i, t])
            rows_x.append(xr)
            rows_unit.append(u)
            rows_per.append(t)
            rows_eq.append("l")
            cells = {}
            for kind, obj in level_cols:
                if kind == "lgmm":
                    s = t - plan.level_lag
                    if s >= 1:
                        val = gmm_diffs[obj.variable][i, s]
                        if not np.isnan(val):
                            key = ("l", obj.variable) if obj.collapse else ("l", obj.variable, t)
                            cells[key] = val
                elif kind == "liv":
                    val = iv_levels[obj][i, t]
                    if not np.isnan(val):
                        cells[("liv", obj)] = val
                elif kind == "ldum":
                    if dummies[obj][i, t]:
                        cells[("ldum", obj)] = 1.0
                else:
                    cells[("lcons",)] = 1.0
            inst.append(cells)
    if not rows_y:
        raise SpecificationError("no usable differenced periods")

    keys = _ordered_keys(inst, plan, dummies)
    col = {k: j for j, k in enumerate(keys)}
    Z = np.zeros((len(inst), len(keys)))
    for r, cells in enumerate(inst):
        for k, v in cells.items():
            Z[r, col[k]] = v
    X = np.asarray(rows_x, dtype=float)
    keep_z = _independent_columns(Z)
    Z = Z[:, keep_z]
    inames = [_instrument_name(keys[j], panel) for j in keep_z]

    # time dummies (and the constant) absorbed by collinearity are reported as omitted
    dummy_pos = [j for j, n in enumerate(names) if n in dummies]
    omitted: List[str] = []
    if dummy_pos:
        keep_x = _independent_columns(X)
        drop = [j for j in range(X.shape[1]) if j not in keep_x]
        bad = [names[j] for j in drop if j not in dummy_pos]
        if bad:
            raise EstimationError(f"collinear regressors: {', '.join(bad)}")
        omitted = [names[j] for j in drop]
        X = X[:, keep_x]
        names = [names[j] for j in keep_x]

    return GmmSystem(
        y=np.asarray(rows_y, dtype=float),
        X=X,
        Z=Z,
        unit=np.asarray(rows_unit),
        period=np.asarray(rows_per),
        eq=np.asarray(rows_eq),
        names=names,
        instrument_names=inames,
        omitted=omitted,
        units=units,
        scheme=scheme if use_levels else "difference",
    )


def _ordered_keys(inst, plan: InstrumentPlan, dummies) -> List[Tuple]:
    present = set()
    for cells in inst:
        present.update(cells)
    order = {g.variable: j for j, g in enumerate(plan.gmm_style)}
    iv_order = {v: j for j, v in enumerate(plan.iv_style)}
    dum_order = {k: j for j, k in enumerate(dummies)}

    def rank(k):
        tag = k[0]
        if tag == "d":
            return (0, order[k[1]]) + tuple(k[2:])
        if tag == "div":
            return (1, iv_order[k[1]])
        if tag == "ddum":
            return (2, dum_order[k[1]])
        if tag == "l":
            return (3, order[k[1]]) + tuple(k[2:])
        if tag == "liv":
            return (4, iv_order[k[1]])
        if tag == "ldum":
            return (5, dum_order[k[1]])
        return (6,)

    return sorted(present, key=rank)


def _instrument_name(key: Tuple, panel: PanelDataset) -> str:
    tag = key[0]
    if tag == "d":
        if len(key) == 3:
            return f"L{key[2]}.{key[1]}"
        return f"L{key[3]}.{key[1]}@{panel.periods[key[2]]}"
    if tag == "l":
        if len(key) == 2:
            return f"D.{key[1]}(level)"
        return f"D.{key[1]}(level)@{panel.periods[key[2]]}"
    if tag == "div":
        return f"D.{key[1]}"
    if tag == "liv":
        return f"{key[1]}(level)"
    if tag == "ddum":
        return f"D.{key[1]}"
    if tag == "ldum":
        return f"{key[1]}(level)"
    return f"{CONST}(level)"


def build_difference_instruments(panel: PanelDataset, spec: ModelSpec,
                                 plan: Optional[InstrumentPlan] = None) -> GmmSystem:
    """Stacked differenced equations with their instrument blocks."""
    return _build(panel, spec, plan or default_plan(spec), "difference")


def build_system_instruments(panel: PanelDataset, spec: ModelSpec,
                             plan: Optional[InstrumentPlan] = None) -> GmmSystem:
    """Differenced and level equations stacked with block-diagonal instruments.

    With an empty level plan this is exactly the difference system.
    """
    return _build(panel, spec, plan or default_plan(spec), "system")


# --------------------------------------------------------------------------
# Estimation


def _sym_pinv(A: np.ndarray, rtol: float = 1e-12) -> Tuple[np.ndarray, bool]:
    """Moore-Penrose inverse of a symmetric PSD matrix; flags rank deficiency."""
    A = (A + A.T) / 2
    vals, vecs = np.linalg.eigh(A)
    cut = rtol * max(abs(vals).max(), 1e-300)
    good = vals > cut
    inv = (vecs[:, good] / vals[good]) @ vecs[:, good].T
    return (inv + inv.T) / 2, bool(good.sum() < A.shape[0])


def _unit_sums(sys: GmmSystem, v: np.ndarray) -> np.ndarray:
    """``Z_i' v_i`` for every unit, shape ``(n_groups, L)`` (or ``(n_groups, L, k)``)."""
    prod = sys.Z[:, :, None] * (v[:, None, :] if v.ndim == 2 else v[:, None, None])
    out = np.add.reduceat(prod, sys.starts[:-1], axis=0)
    return out if v.ndim == 2 else out[:, :, 0]


@dataclass
class _Fit:
    params: np.ndarray
    resid: np.ndarray
    W: np.ndarray
    M_inv: np.ndarray
    XZ: np.ndarray


def _solve(sys: GmmSystem, W: np.ndarray) -> _Fit:
    XZ = sys.X.T @ sys.Z
    Zy = sys.Z.T @ sys.y
    M = XZ @ W @ XZ.T
    M = (M + M.T) / 2
    vals = np.linalg.eigvalsh(M)
    if vals.min() <= 1e-12 * max(vals.max(), 1e-300):
        raise EstimationError(f"X'Z W Z'X is singular; collinear columns among: "
                              f"{', '.join(_collinear_names(M, sys.names))}")
    M_inv = np.linalg.inv(M)
    M_inv = (M_inv + M_inv.T) / 2
    b = M_inv @ (XZ @ W @ Zy)
    return _Fit(b, sys.y - sys.X @ b, W, M_inv, XZ)


def _collinear_names(M: np.ndarray, names: Sequence[str]) -> List[str]:
    vals, vecs = np.linalg.eigh(M)
    v = vecs[:, 0]
    return [names[j] for j in np.flatnonzero(np.abs(v) > 1e-3)] or list(names)


def _robust_meat(sys: GmmSystem, resid: np.ndarray) -> np.ndarray:
    g = _unit_sums(sys, resid)
    return g.T @ g


@dataclass
class GmmEstimate:
    """Result of a difference or system GMM estimation."""

    names: List[str]
    params: np.ndarray
    cov: np.ndarray
    step: str
    scheme: str
    spec: ModelSpec
    plan: InstrumentPlan
    system: GmmSystem = field(repr=False)
    resid: np.ndarray = field(repr=False)
    resid_one_step: np.ndarray = field(repr=False)
    W1: np.ndarray = field(repr=False)
    W2: Optional[np.ndarray] = field(repr=False, default=None)
    cov_one_step: np.ndarray = field(repr=False, default=None)
    windmeijer_applied: bool = False
    warnings: List[str] = field(default_factory=list)

    @property
    def instrument_count(self) -> int:
        return int(self.system.Z.shape[1])

    @property
    def group_count(self) -> int:
        return self.system.n_groups

    @property
    def n_obs(self) -> int:
        return self.system.n_obs

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def omitted(self) -> List[str]:
        return list(self.system.omitted)

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        return self.params / self.std_errors

    @property
    def pvalues(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.tvalues))

    @property
    def label(self) -> str:
        return f"{self.step.capitalize()}-step {self.scheme.capitalize()} GMM"

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    def summary(self) -> Dict[str, Dict[str, float]]:
        return {
            n: {"coef": float(b), "se": float(s), "z": float(t), "p": float(p)}
            for n, b, s, t, p in zip(self.names, self.params, self.std_errors,
                                     self.tvalues, self.pvalues)
        }


def _sandwich(fit: _Fit, meat: np.ndarray) -> np.ndarray:
    A = fit.M_inv @ fit.XZ @ fit.W
    V = A @ meat @ A.T
    return (V + V.T) / 2


def fit_system(sys: GmmSystem, spec: ModelSpec, plan: InstrumentPlan, step: str = "two",
               windmeijer: bool = True) -> GmmEstimate:
    """Estimate on prebuilt stacked data."""
    if step not in STEPS:
        raise SpecificationError(f"unknown step {step!r}")
    L, k = sys.Z.shape[1], sys.X.shape[1]
    if L < k:
        raise EstimationError(f"under-identified: {L} instruments for {k} parameters")
    notes: List[str] = []
    A1 = sum(Zi.T @ H @ Zi for Zi, H in zip(sys.blocks, sys.h_blocks()))
    W1, deficient = _sym_pinv(A1)
    if deficient:
        notes.append("one-step weighting matrix is singular; pseudo-inverse used")
    one = _solve(sys, W1)
    V1 = _sandwich(one, _robust_meat(sys, one.resid))
    est = GmmEstimate(
        names=list(sys.names), params=one.params, cov=V1, step="one", scheme=sys.scheme,
        spec=spec, plan=plan, system=sys, resid=one.resid, resid_one_step=one.resid,
        W1=W1, cov_one_step=V1, warnings=notes,
    )
    if step == "one":
        return est
    W2, deficient = _sym_pinv(_robust_meat(sys, one.resid))
    if deficient:
        notes.append("two-step weighting matrix is singular; pseudo-inverse used")
        warnings.warn("two-step weighting matrix is singular; pseudo-inverse used", GmmWarning)
    two = _solve(sys, W2)
    est = replace(est, params=two.params, cov=(two.M_inv + two.M_inv.T) / 2, step="two",
                  resid=two.resid, W2=W2, warnings=list(notes))
    if windmeijer:
        est = windmeijer_correct(est)
    return est


def estimate(panel: PanelDataset, spec: ModelSpec, plan: Optional[InstrumentPlan] = None,
             scheme: str = "system", step: str = "two", windmeijer: bool = True) -> GmmEstimate:
    """Difference or system GMM, one- or two-step.

    One-step standard errors are heteroskedasticity-robust. Two-step
    standard errors are Windmeijer-corrected unless ``windmeijer`` is off.
    """
    plan = plan or default_plan(spec)
    sys = _build(panel, spec, plan, scheme)
    return fit_system(sys, spec, plan, step, windmeijer)


def windmeijer_correct(est: GmmEstimate) -> GmmEstimate:
    """Replace the two-step covariance by its finite-sample corrected version."""
    if est.step != "two" or est.W2 is None:
        raise GmmError("Windmeijer correction applies to two-step estimates only")
    if est.windmeijer_applied:
        raise GmmError("Windmeijer correction already applied")
    sys = est.system
    XZ = sys.X.T @ sys.Z
    W2 = est.W2
    M2_inv = np.linalg.inv(XZ @ W2 @ XZ.T)
    V2 = (M2_inv + M2_inv.T) / 2
    a = _unit_sums(sys, sys.X)                      # (N, L, k): Z_i' x_ik
    g = _unit_sums(sys, est.resid_one_step)          # (N, L):    Z_i' e1_i
    c = W2 @ (sys.Z.T @ est.resid)                   # W2 Z' e2
    gc = g @ c
    ac = np.einsum("ilk,l->ik", a, c)
    dOmega_c = np.einsum("ilk,i->lk", a, gc) + np.einsum("il,ik->lk", g, ac)
    D = M2_inv @ XZ @ W2 @ dOmega_c
    V1 = est.cov_one_step
    Vc = V2 + D @ V2 + V2 @ D.T + D @ V1 @ D.T
    return replace(est, cov=(Vc + Vc.T) / 2, windmeijer_applied=True)


def two_step_from(est: GmmEstimate) -> GmmEstimate:
    """Two-step estimate on the same stacked data (returns ``est`` if already two-step)."""
    if est.step == "two":
        return est
    return fit_system(est.system, est.spec, est.plan, "two", windmeijer=False)
