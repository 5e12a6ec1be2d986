"""Shared fixtures and dense reference computations.

The helpers here rebuild stacked difference-GMM systems from raw arrays with
plain loops and dense algebra, sharing no code with the estimator.
"""

import numpy as np
import pytest

from dynpanel import DgpConfig, PanelDataset, gen_dynamic_panel


@pytest.fixture
def fixture_6x5():
    """Six units, five periods: ``y`` dynamic with two regressors and fixed effects."""
    return gen_dynamic_panel(DgpConfig(n=6, t=5, delta=0.5, beta=(1.0, -0.5), seed=20240611))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_difference_system(panel, y="y", xs=("x1",), ylag_inst=(2, 2), collapse=True):
    """Stacked first-differenced rows ``(dy, dX, Z, unit)`` for ``y = d L.y + X b``.

    Instruments: levels of ``y`` at lags ``ylag_inst`` (inclusive range) and the
    differenced ``xs`` themselves. Uncollapsed instruments get one column per
    (period, lag) pair.
    """
    Y = np.asarray(panel[y])
    Xs = [np.asarray(panel[x]) for x in xs]
    N, T = Y.shape
    lo, hi = ylag_inst
    pairs = [(t, l) for t in range(2, T) for l in range(lo, hi + 1) if t - l >= 0]
    lags = sorted({l for _, l in pairs})
    rows_y, rows_x, rows_z, units = [], [], [], []
    for i in range(N):
        for t in range(2, T):
            rows_y.append(Y[i, t] - Y[i, t - 1])
            rows_x.append([Y[i, t - 1] - Y[i, t - 2]] + [X[i, t] - X[i, t - 1] for X in Xs])
            if collapse:
                z = [Y[i, t - l] if t - l >= 0 else 0.0 for l in lags]
            else:
                z = [Y[i, t - l] if (s == t) else 0.0 for (s, l) in pairs]
            z += [X[i, t] - X[i, t - 1] for X in Xs]
            rows_z.append(z)
            units.append(i)
    return (np.array(rows_y), np.array(rows_x), np.array(rows_z), np.array(units))


def dense_h(units):
    """Block-diagonal tridiagonal (2, -1) matrix for consecutive differenced rows."""
    n = len(units)
    H = np.zeros((n, n))
    for r in range(n):
        H[r, r] = 2.0
        if r + 1 < n and units[r + 1] == units[r]:
            H[r, r + 1] = H[r + 1, r] = -1.0
    return H


def make_panel(Y, **others):
    N, T = np.asarray(Y).shape
    variables = {"y": Y, **others}
    return PanelDataset([f"u{i}" for i in range(N)], range(2000, 2000 + T), variables)
