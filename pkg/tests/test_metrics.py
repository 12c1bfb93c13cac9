"""Metric tests against straight-line brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pavegraph.metrics import (
    MetricError,
    rec_curve,
    regression_report,
    taylor_stats,
)


# Independent oracle: plain loops over the published formulas.
def brute_force_metrics(pred, actual):
    n = len(pred)
    mse = sum((actual[i] - pred[i]) ** 2 for i in range(n)) / n
    mae = sum(abs(actual[i] - pred[i]) for i in range(n)) / n
    mean_actual = sum(actual) / n
    ss_res = sum((actual[i] - pred[i]) ** 2 for i in range(n))
    ss_tot = sum((actual[i] - mean_actual) ** 2 for i in range(n))
    return mse, math.sqrt(mse), mae, 1.0 - ss_res / ss_tot


def brute_force_rec(pred, actual, grid):
    n = len(pred)
    coverage = []
    for eps in grid:
        hits = sum(1 for i in range(n) if abs(pred[i] - actual[i]) <= eps)
        coverage.append(hits / n)
    return coverage


def brute_force_taylor(pred, actual):
    n = len(pred)
    mp = sum(pred) / n
    ma = sum(actual) / n
    sp = math.sqrt(sum((p - mp) ** 2 for p in pred) / n)
    sa = math.sqrt(sum((a - ma) ** 2 for a in actual) / n)
    corr = sum((p - mp) * (a - ma) for p, a in zip(pred, actual)) / (n * sp * sa)
    crmse = math.sqrt(sum(((p - mp) - (a - ma)) ** 2 for p, a in zip(pred, actual)) / n)
    return sp, sa, corr, crmse


class TestRegressionReport:
    def test_perfect_fit(self):
        y = np.array([3.0, 7.0, 1.0])
        rep = regression_report(y, y)
        assert rep.mse == 0.0 and rep.r2 == 1.0

    def test_mean_predictor_r2_zero(self):
        actual = np.array([1.0, 2.0, 6.0])
        pred = np.full(3, actual.mean())
        assert regression_report(pred, actual).r2 == pytest.approx(0.0, abs=1e-12)

    def test_hand_arithmetic(self):
        rep = regression_report([1.0, 2.0, 3.0], [1.0, 2.0, 5.0])
        assert rep.mse == pytest.approx(4.0 / 3.0)
        assert rep.mae == pytest.approx(2.0 / 3.0)
        assert rep.r2 == pytest.approx(1.0 - 4.0 / (26.0 / 3.0))

    def test_rmse_is_sqrt_mse(self):
        rep = regression_report([1.0, 5.0], [2.0, 3.0])
        assert rep.rmse == pytest.approx(math.sqrt(rep.mse), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(MetricError, match="length mismatch"):
            regression_report([1.0], [1.0, 2.0])

    def test_constant_actual_rejected(self):
        with pytest.raises(MetricError, match="constant"):
            regression_report([1.0, 2.0], [3.0, 3.0])

    def test_oracle_equivalence_100_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            pred = list(rng.normal(size=n) * 10)
            actual = list(rng.normal(size=n) * 10 + 1.0)
            rep = regression_report(pred, actual)
            mse, rmse, mae, r2 = brute_force_metrics(pred, actual)
            assert rep.mse == pytest.approx(mse, abs=1e-9)
            assert rep.rmse == pytest.approx(rmse, abs=1e-9)
            assert rep.mae == pytest.approx(mae, abs=1e-9)
            assert rep.r2 == pytest.approx(r2, abs=1e-9)

    def test_scale_behavior(self):
        rng = np.random.default_rng(1)
        pred = rng.normal(size=20)
        actual = rng.normal(size=20)
        base = regression_report(pred, actual)
        scaled = regression_report(3.0 * pred, 3.0 * actual)
        assert scaled.rmse == pytest.approx(3.0 * base.rmse)
        assert scaled.mae == pytest.approx(3.0 * base.mae)
        assert scaled.r2 == pytest.approx(base.r2)


class TestRecCurve:
    def test_zero_tolerance_no_exact_matches(self):
        rec = rec_curve([1.0, 2.0], [1.5, 2.5], grid=np.array([0.0]))
        assert rec.coverage[0] == 0.0

    def test_saturation(self):
        rec = rec_curve([1.0, 2.0], [1.5, 2.5], grid=np.array([0.4, 0.5, 10.0]))
        assert rec.coverage[-1] == 1.0

    def test_counting_example(self):
        pred = np.array([0.5, 1.5, 2.5])
        actual = np.zeros(3)  # abs errors 0.5, 1.5, 2.5
        rec = rec_curve(pred, actual, grid=np.array([2.0]))
        assert rec.coverage[0] == pytest.approx(2.0 / 3.0)

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            pred = list(rng.normal(size=n) * 5)
            actual = list(rng.normal(size=n) * 5)
            grid = np.sort(rng.uniform(0, 10, size=7))
            grid = np.unique(grid)
            rec = rec_curve(pred, actual, grid=grid)
            np.testing.assert_allclose(
                rec.coverage, brute_force_rec(pred, actual, grid), atol=1e-9
            )

    def test_bad_grid(self):
        with pytest.raises(MetricError, match="ascending"):
            rec_curve([1.0], [1.0], grid=np.array([1.0, 0.5]))
        with pytest.raises(MetricError, match="empty"):
            rec_curve([], [])

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, st.integers(1, 20), elements=st.floats(-100, 100)),
        arrays(np.float64, st.integers(1, 20), elements=st.floats(-100, 100)),
    )
    def test_monotone_and_saturating(self, a, b):
        n = min(len(a), len(b))
        pred, actual = a[:n], b[:n]
        grid = np.linspace(0.0, float(np.abs(pred - actual).max()) + 1.0, 15)
        grid = np.unique(grid)
        if len(grid) < 2:
            return
        rec = rec_curve(pred, actual, grid=grid)
        assert np.all(np.diff(rec.coverage) >= 0)
        assert rec.coverage[-1] == 1.0


class TestTaylorStats:
    def test_perfect_agreement(self):
        y = np.array([1.0, 3.0, 2.0, 5.0])
        stats = taylor_stats(y, y)
        assert stats.correlation == pytest.approx(1.0)
        assert stats.centered_rmse == pytest.approx(0.0, abs=1e-12)
        assert stats.pred_std == pytest.approx(stats.ref_std)

    def test_anticorrelation(self):
        y = np.array([1.0, -1.0, 2.0, -2.0])  # zero mean
        stats = taylor_stats(-y, y)
        assert stats.correlation == pytest.approx(-1.0)
        assert stats.centered_rmse == pytest.approx(2.0 * y.std(), rel=1e-12)

    def test_law_of_cosines_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            pred = rng.normal(size=10)
            actual = rng.normal(size=10)
            s = taylor_stats(pred, actual)
            lhs = s.centered_rmse**2
            rhs = s.pred_std**2 + s.ref_std**2 - 2 * s.pred_std * s.ref_std * s.correlation
            assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(2, 25))
            pred = list(rng.normal(size=n))
            actual = list(rng.normal(size=n))
            if np.std(pred) == 0 or np.std(actual) == 0:
                continue
            s = taylor_stats(pred, actual)
            sp, sa, corr, crmse = brute_force_taylor(pred, actual)
            assert s.pred_std == pytest.approx(sp, abs=1e-9)
            assert s.ref_std == pytest.approx(sa, abs=1e-9)
            assert s.correlation == pytest.approx(corr, abs=1e-9)
            assert s.centered_rmse == pytest.approx(crmse, abs=1e-9)

    def test_constant_series_rejected(self):
        with pytest.raises(MetricError, match="constant"):
            taylor_stats([1.0, 1.0], [1.0, 2.0])
        with pytest.raises(MetricError, match="at least 2"):
            taylor_stats([1.0], [1.0])
