"""Shared builders for synthetic records, windows, and models."""

from __future__ import annotations

import numpy as np
import pytest

from congait.ingest import (
    Cohort,
    GaitRecord,
    GaitWindow,
    LTOTAL_IDX,
    N_CHANNELS,
    RTOTAL_IDX,
    segment_windows,
)


def make_record(forces: np.ndarray, sample_rate_hz: float = 100.0,
                patient_id: str = "p1", session_id: str = "s1",
                cohort: Cohort = Cohort.PD) -> GaitRecord:
    """Record with exact sample rate and timestamps k/rate."""
    forces = np.asarray(forces, dtype=np.float64)
    n = forces.shape[1]
    return GaitRecord(
        patient_id=patient_id,
        session_id=session_id,
        cohort=cohort,
        sample_rate_hz=sample_rate_hz,
        timestamps=np.arange(n) / sample_rate_hz,
        forces=forces,
    )


def make_window(forces: np.ndarray, sample_rate_hz: float = 100.0) -> GaitWindow:
    record = make_record(forces, sample_rate_hz)
    windows = segment_windows(record, forces.shape[1] / sample_rate_hz)
    assert len(windows) == 1
    return windows[0]


def square_gait_window(amplitude: float = 700.0, rate: float = 100.0,
                       seconds: float = 10.0) -> GaitWindow:
    """Alternating square waves: each foot 1 s contact / 1 s swing.

    Left contacts start at 0.5 s, right at 1.5 s, so every heel strike is a
    genuine upward crossing: 5 strikes per foot over 10 s.
    """
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    forces = np.zeros((N_CHANNELS, n))
    left = ((t - 0.5) % 2.0 < 1.0) & (t >= 0.5)
    right = ((t - 1.5) % 2.0 < 1.0) & (t >= 1.5)
    forces[LTOTAL_IDX, left] = amplitude
    forces[RTOTAL_IDX, right] = amplitude
    return make_window(forces, rate)


def random_positive_window(rng: np.random.Generator, channels: int = 18,
                           length: int = 1000, rate: float = 100.0,
                           scale: float = 1.0) -> GaitWindow:
    forces = np.abs(rng.normal(1.0, 0.5, size=(channels, length))) * scale
    return make_window(forces, rate)


def vgrf_text(forces: np.ndarray, rate: float = 100.0,
              fmt: str = "%.2f") -> str:
    """19-column text for the given (18, n) force matrix."""
    n = forces.shape[1]
    lines = []
    for i in range(n):
        fields = [fmt % (i / rate)]
        fields.extend(fmt % v for v in forces[:, i])
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
