"""Regression metrics, error-tolerance curves, and Taylor-diagram statistics.

Population (1/n) variance conventions throughout. All evaluation happens on
the original PCI scale after inverse standardization; callers are expected to
pass raw-scale vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionReport:
    mse: float
    rmse: float
    mae: float
    r2: float

    def as_rows(self) -> list[tuple[str, float]]:
        return [("mse", self.mse), ("rmse", self.rmse), ("mae", self.mae), ("r2", self.r2)]


@dataclass(frozen=True)
class RecCurve:
    """Coverage fraction within each ascending absolute-error tolerance."""

    tolerances: np.ndarray
    coverage: np.ndarray


@dataclass(frozen=True)
class TaylorStats:
    pred_std: float
    ref_std: float
    correlation: float
    centered_rmse: float


DEFAULT_REC_GRID = np.arange(0.0, 10.0 + 1e-9, 0.25)


def _check_pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise MetricError("empty inputs")
    if p.shape != a.shape:
        raise MetricError(f"length mismatch: {p.size} vs {a.size}")
    return p, a


def regression_report(pred, actual) -> RegressionReport:
    """MSE, RMSE, MAE and R-squared of a prediction vector."""
    p, a = _check_pair(pred, actual)
    err = p - a
    mse = float(np.mean(err * err))
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R2 undefined: actual values are constant")
    r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    return RegressionReport(
        mse=mse, rmse=float(np.sqrt(mse)), mae=float(np.mean(np.abs(err))), r2=r2
    )


def rec_curve(pred, actual, grid: np.ndarray | None = None) -> RecCurve:
    """Cumulative fraction of predictions within each error tolerance."""
    p, a = _check_pair(pred, actual)
    eps = DEFAULT_REC_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    if eps.size == 0 or np.any(np.diff(eps) <= 0) or eps[0] < 0:
        raise MetricError("tolerance grid must be ascending and non-negative")
    abs_err = np.abs(p - a)
    coverage = np.array([np.mean(abs_err <= e) for e in eps])
    return RecCurve(tolerances=eps, coverage=coverage)


def taylor_stats(pred, actual) -> TaylorStats:
    """Standard deviations, correlation, and centered RMSE of the pair.

    Satisfies crmse^2 = sp^2 + sr^2 - 2 sp sr rho (law-of-cosines identity
    behind the Taylor diagram geometry).
    """
    p, a = _check_pair(pred, actual)
    if p.size < 2:
        raise MetricError("need at least 2 points")
    sp = float(p.std())
    sr = float(a.std())
    if sp == 0.0 or sr == 0.0:
        raise MetricError("constant series: Taylor statistics undefined")
    pc = p - p.mean()
    ac = a - a.mean()
    corr = float(np.mean(pc * ac) / (sp * sr))
    crmse = float(np.sqrt(np.mean((pc - ac) ** 2)))
    return TaylorStats(pred_std=sp, ref_std=sr, correlation=corr, centered_rmse=crmse)
