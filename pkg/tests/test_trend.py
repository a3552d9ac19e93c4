from datetime import date, timedelta

import numpy as np
import pytest

from congait.trend import (
    MedicationEvent,
    SessionPoint,
    expected_stage,
    forecast,
    ols_fit,
    overlay,
)


def point(session_id: str, day: int, severity: float) -> SessionPoint:
    return SessionPoint(session_id=session_id,
                        date=date(2026, 1, 1) + timedelta(days=day),
                        severity=severity, mean_features={}, window_count=6)


# ---------------------------------------------------------------------------
# independent normal-equations oracle
# ---------------------------------------------------------------------------

def ols_oracle(y):
    """Solve the 2x2 normal equations directly."""
    n = len(y)
    sx = sum(range(n))
    sxx = sum(k * k for k in range(n))
    sy = sum(y)
    sxy = sum(k * v for k, v in enumerate(y))
    det = n * sxx - sx * sx
    slope = (n * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    residuals = [v - (intercept + slope * k) for k, v in enumerate(y)]
    sd = (sum(r * r for r in residuals) / (n - 2)) ** 0.5 if n > 2 else 0.0
    return slope, intercept, sd


class TestExpectedStage:
    def test_certain_prediction(self):
        assert expected_stage((0.0, 1.0, 0.0, 0.0), (0.0, 2.0, 2.5, 3.0)) == 2.0

    def test_two_window_mean(self):
        a = expected_stage((1.0, 0.0, 0.0, 0.0), (0.0, 2.0, 2.5, 3.0))
        b = expected_stage((0.0, 0.0, 0.0, 1.0), (0.0, 2.0, 2.5, 3.0))
        assert (a + b) / 2 == 1.5


class TestForecast:
    def test_exact_linear_series(self):
        series = [point(f"s{k}", 7 * k, 2.0 + 0.1 * k) for k in range(5)]
        fc = forecast(series, 1)
        assert fc.slope == pytest.approx(0.1, abs=1e-12)
        assert fc.intercept == pytest.approx(2.0, abs=1e-12)
        assert fc.residual_sd == pytest.approx(0.0, abs=1e-12)
        nxt = fc.points[0]
        assert nxt.predicted == pytest.approx(2.5, abs=1e-12)
        assert nxt.upper95 - nxt.lower95 == pytest.approx(0.0, abs=1e-12)
        assert nxt.date == series[-1].date + timedelta(days=7)

    def test_constant_series(self):
        series = [point(f"s{k}", 7 * k, 2.0) for k in range(5)]
        fc = forecast(series, 3)
        assert fc.slope == 0.0
        assert all(p.predicted == pytest.approx(2.0) for p in fc.points)

    def test_noisy_series_matches_normal_equations(self, rng):
        for trial in range(20):
            n = int(rng.integers(3, 12))
            y = (2.0 + 0.05 * np.arange(n) + rng.normal(0, 0.2, size=n)).tolist()
            slope, intercept, sd = ols_fit(y)
            e_slope, e_intercept, e_sd = ols_oracle(y)
            assert slope == pytest.approx(e_slope, abs=1e-9)
            assert intercept == pytest.approx(e_intercept, abs=1e-9)
            assert sd == pytest.approx(e_sd, abs=1e-9)

    def test_short_series_yields_no_forecast(self):
        series = [point("a", 0, 2.0), point("b", 7, 2.1)]
        assert forecast(series, 2) is None

    def test_band_contains_prediction(self, rng):
        y = (2.0 + rng.normal(0, 0.3, size=8)).tolist()
        series = [point(f"s{k}", 7 * k, v) for k, v in enumerate(y)]
        fc = forecast(series, 4)
        for p in fc.points:
            assert p.lower95 <= p.predicted <= p.upper95

    def test_shift_equivariance(self, rng):
        y = (2.0 + rng.normal(0, 0.3, size=6)).tolist()
        base = forecast([point(f"s{k}", 7 * k, v) for k, v in enumerate(y)], 2)
        shifted = forecast([point(f"s{k}", 7 * k, v + 0.7)
                            for k, v in enumerate(y)], 2)
        for a, b in zip(base.points, shifted.points):
            assert b.predicted == pytest.approx(a.predicted + 0.7, abs=1e-9)

    def test_residuals_sum_to_zero(self, rng):
        y = (2.0 + rng.normal(0, 0.5, size=9)).tolist()
        slope, intercept, _ = ols_fit(y)
        residuals = [v - (intercept + slope * k) for k, v in enumerate(y)]
        assert sum(residuals) == pytest.approx(0.0, abs=1e-9)

    def test_median_spacing_used(self):
        days = [0, 7, 14, 28]  # gaps 7, 7, 14 -> median 7
        series = [point(f"s{k}", d, 2.0 + 0.1 * k) for k, d in enumerate(days)]
        fc = forecast(series, 2)
        assert fc.points[0].date == series[-1].date + timedelta(days=7)
        assert fc.points[1].date == series[-1].date + timedelta(days=14)


class TestOverlay:
    def test_event_before_first_session_is_pre_baseline(self):
        series = [point("s0", 10, 2.0)]
        events = [MedicationEvent(date(2026, 1, 5), "levodopa 100mg")]
        merged = overlay(series, events)
        med = next(e for e in merged if e.kind == "medication")
        assert med.after_session == "pre-baseline"
        assert merged[0].kind == "medication"  # date-ordered

    def test_event_on_session_date_tags_that_session(self):
        series = [point("s0", 0, 2.0), point("s1", 7, 2.1)]
        events = [MedicationEvent(series[1].date, "dose change")]
        merged = overlay(series, events)
        med = next(e for e in merged if e.kind == "medication")
        assert med.after_session == "s1"
        # session sorts before its same-day event
        assert [e.kind for e in merged] == ["session", "session", "medication"]

    def test_empty_events_keep_series(self):
        series = [point("s0", 0, 2.0), point("s1", 7, 2.1)]
        merged = overlay(series, [])
        assert [e.session.session_id for e in merged] == ["s0", "s1"]

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            MedicationEvent(date(2026, 1, 5), "")
