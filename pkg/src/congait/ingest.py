"""VGRF recording ingestion: parsing, windowing, gait features, normative bands.

Input files are plain text, one sample per row, 19 whitespace-separated numeric
columns: time in seconds followed by 18 force channels in Newtons
(L1..L8, R1..R8, LTotal, RTotal). Lines starting with '#' and blank lines are
skipped; LF and CRLF both accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CongaitError

CHANNEL_NAMES: tuple[str, ...] = (
    "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8",
    "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8",
    "LTotal", "RTotal",
)
N_CHANNELS = len(CHANNEL_NAMES)
LTOTAL_IDX = CHANNEL_NAMES.index("LTotal")
RTOTAL_IDX = CHANNEL_NAMES.index("RTotal")

DEFAULT_WINDOW_SECONDS = 10.0
DEFAULT_CONTACT_THRESHOLD_N = 20.0

# Nominal rate used only when a record has a single sample (no delta to infer from).
NOMINAL_SAMPLE_RATE_HZ = 100.0

# Freezing-of-gait spectral bands (Hz): freeze band over locomotor band.
FREEZE_BAND = (3.0, 8.0)
LOCOMOTOR_BAND = (0.5, 3.0)
# Relative stabilizer keeping the band ratio finite when the locomotor band is
# empty (e.g. a leakage-free in-band sinusoid); negligible for real signals.
_FREEZE_DENOM_FLOOR = 1e-9


class Cohort(str, Enum):
    PD = "PD"
    CONTROL = "Control"


class Band(str, Enum):
    GREEN = "green"
    AMBER = "amber"
    RED = "red"


class ParseError(CongaitError):
    pass


class EmptyInput(ParseError):
    def __init__(self) -> None:
        super().__init__("no data rows in input")


class BadColumnCount(ParseError):
    def __init__(self, row: int, found: int) -> None:
        self.row = row
        self.found = found
        super().__init__(f"row {row}: expected 19 columns, found {found}")


class NonNumericField(ParseError):
    def __init__(self, row: int, col: int, token: str) -> None:
        self.row = row
        self.col = col
        super().__init__(f"row {row}, column {col}: not a finite number: {token!r}")


class NonMonotoneTime(ParseError):
    def __init__(self, row: int) -> None:
        self.row = row
        super().__init__(f"row {row}: timestamp does not increase")


class IrregularSampling(ParseError):
    def __init__(self, row: int, delta: float, expected: float) -> None:
        self.row = row
        super().__init__(
            f"row {row}: sample interval {delta:.6g}s deviates more than 10% "
            f"from inferred {expected:.6g}s"
        )


class EmptyCohort(CongaitError):
    def __init__(self) -> None:
        super().__init__("cannot compute a baseline from zero windows")


@dataclass(frozen=True)
class GaitRecord:
    """A parsed multichannel VGRF session.

    forces is an (18, n) float64 array, rows ordered as CHANNEL_NAMES.
    Arrays are marked read-only; records are safe to share between threads.
    """

    patient_id: str
    session_id: str
    cohort: Cohort
    sample_rate_hz: float
    timestamps: np.ndarray
    forces: np.ndarray
    clamped_count: int = 0

    def __post_init__(self) -> None:
        self.timestamps.setflags(write=False)
        self.forces.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.timestamps.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def channel(self, name: str) -> np.ndarray:
        return self.forces[CHANNEL_NAMES.index(name)]


@dataclass(frozen=True)
class GaitWindow:
    """A fixed-length, contiguous slice of a record (18 x N samples)."""

    record: GaitRecord
    window_index: int
    start_s: float
    end_s: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples.setflags(write=False)

    @property
    def window_seconds(self) -> float:
        return self.end_s - self.start_s

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class WindowFeatures:
    stride_time_s: float
    stance_fraction: float
    cadence_steps_per_min: float
    peak_force_n: float
    freeze_index: float
    step_count: int
    no_steps: bool = False

    def as_dict(self) -> dict[str, float]:
        return {
            "stride_time_s": self.stride_time_s,
            "stance_fraction": self.stance_fraction,
            "cadence_steps_per_min": self.cadence_steps_per_min,
            "peak_force_n": self.peak_force_n,
            "freeze_index": self.freeze_index,
            "step_count": float(self.step_count),
        }


FEATURE_NAMES: tuple[str, ...] = (
    "stride_time_s",
    "stance_fraction",
    "cadence_steps_per_min",
    "peak_force_n",
    "freeze_index",
    "step_count",
)


@dataclass(frozen=True)
class NormativeBaseline:
    """Per-feature p10/p50/p90 over control-cohort windows, for color banding."""

    percentiles: dict[str, tuple[float, float, float]]
    window_count: int

    def classify(self, feature: str, value: float) -> Band:
        p10, _, p90 = self.percentiles[feature]
        if p10 <= value <= p90:
            return Band.GREEN
        margin = 1.5 * (p90 - p10)
        if p10 - margin <= value <= p90 + margin:
            return Band.AMBER
        return Band.RED


def parse_vgrf(text: str, *, patient_id: str, session_id: str,
               cohort: Cohort | str) -> GaitRecord:
    """Parse a 19-column VGRF text stream into a GaitRecord.

    The sample rate is inferred as 1/median(successive time deltas). Negative
    force values are clamped to zero and counted in clamped_count. Row numbers
    in errors are 1-based line numbers in the input, comments included.
    """
    cohort = Cohort(cohort)
    times: list[float] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 1 + N_CHANNELS:
            raise BadColumnCount(lineno, len(tokens))
        values = []
        for col, tok in enumerate(tokens, start=1):
            try:
                v = float(tok)
            except ValueError:
                raise NonNumericField(lineno, col, tok) from None
            if not math.isfinite(v):
                raise NonNumericField(lineno, col, tok)
            values.append(v)
        if times and values[0] <= times[-1]:
            raise NonMonotoneTime(lineno)
        times.append(values[0])
        rows.append(values[1:])

    if not rows:
        raise EmptyInput()

    timestamps = np.asarray(times, dtype=np.float64)
    forces = np.asarray(rows, dtype=np.float64).T.copy()

    if timestamps.shape[0] >= 2:
        deltas = np.diff(timestamps)
        expected = float(np.median(deltas))
        sample_rate = 1.0 / expected
        bad = np.nonzero(np.abs(deltas - expected) > 0.1 * expected)[0]
        if bad.size:
            # report the line of the sample ending the offending interval
            raise IrregularSampling(int(bad[0]) + 2, float(deltas[bad[0]]), expected)
    else:
        sample_rate = NOMINAL_SAMPLE_RATE_HZ

    negatives = forces < 0.0
    clamped = int(np.count_nonzero(negatives))
    if clamped:
        forces[negatives] = 0.0

    return GaitRecord(
        patient_id=patient_id,
        session_id=session_id,
        cohort=cohort,
        sample_rate_hz=sample_rate,
        timestamps=timestamps,
        forces=forces,
        clamped_count=clamped,
    )


def _format_value(v: float) -> str:
    s = format(v, ".6g")
    # exactness beats the 6-significant-digit budget on round-trip
    return s if float(s) == v else repr(v)


def serialize_record(record: GaitRecord) -> str:
    """Canonical 19-column text form; re-parsing yields value-identical data."""
    lines = []
    for i in range(record.n_samples):
        fields = [_format_value(float(record.timestamps[i]))]
        fields.extend(_format_value(float(v)) for v in record.forces[:, i])
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def segment_windows(record: GaitRecord,
                    window_seconds: float = DEFAULT_WINDOW_SECONDS) -> list[GaitWindow]:
    """Cut a record into contiguous, non-overlapping, left-aligned windows.

    The incomplete tail is discarded; a record shorter than one window yields
    an empty list. Window start/end are relative to the record start.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    n_per_window = round(window_seconds * record.sample_rate_hz)
    if n_per_window < 1:
        return []
    count = record.n_samples // n_per_window
    windows = []
    for k in range(count):
        sl = record.forces[:, k * n_per_window:(k + 1) * n_per_window]
        windows.append(GaitWindow(
            record=record,
            window_index=k,
            start_s=k * window_seconds,
            end_s=(k + 1) * window_seconds,
            samples=sl,
        ))
    return windows


def _crossings(signal: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Indices of upward (heel-strike) and downward (toe-off) threshold crossings."""
    above = signal >= threshold
    up = np.nonzero(above[1:] & ~above[:-1])[0] + 1
    down = np.nonzero(~above[1:] & above[:-1])[0] + 1
    return up, down


def _foot_cycle_stats(total: np.ndarray, threshold: float,
                      rate: float) -> tuple[float, float, int]:
    """(mean stride seconds, stance fraction, heel-strike count) for one foot.

    Stride needs >= 2 strikes; stance pairs each strike with the next toe-off.
    Unavailable quantities come back as nan.
    """
    strikes, offs = _crossings(total, threshold)
    n_strikes = int(strikes.size)
    if n_strikes >= 2:
        stride = float(np.mean(np.diff(strikes))) / rate
    else:
        stride = math.nan
    stances = []
    for s in strikes:
        later = offs[offs > s]
        if later.size:
            stances.append((later[0] - s) / rate)
    if stances and not math.isnan(stride) and stride > 0:
        fraction = float(np.mean(stances)) / stride
    else:
        fraction = math.nan
    return stride, fraction, n_strikes


def _band_power(power: np.ndarray, freqs: np.ndarray,
                lo: float, hi: float, include_hi: bool) -> float:
    mask = (freqs >= lo) & ((freqs <= hi) if include_hi else (freqs < hi))
    return float(power[mask].sum())


def freeze_index(signal: np.ndarray, sample_rate_hz: float) -> float:
    """Spectral power ratio of the freeze band over the locomotor band.

    Computed on the mean-removed signal from the one-sided DFT magnitude
    spectrum; freeze band closed [3, 8] Hz, locomotor half-open [0.5, 3) Hz.
    """
    x = signal - signal.mean()
    spectrum = np.fft.rfft(x)
    power = np.abs(spectrum) ** 2
    freqs = np.fft.rfftfreq(x.shape[0], d=1.0 / sample_rate_hz)
    total = float(power[1:].sum())
    if total <= 0.0:
        return 0.0
    num = _band_power(power, freqs, *FREEZE_BAND, include_hi=True)
    den = _band_power(power, freqs, *LOCOMOTOR_BAND, include_hi=False)
    return num / (den + _FREEZE_DENOM_FLOOR * total)


def extract_features(window: GaitWindow,
                     contact_threshold_n: float = DEFAULT_CONTACT_THRESHOLD_N) -> WindowFeatures:
    """Per-window gait features from the left/right total-force channels.

    Heel strikes and toe-offs are upward/downward crossings of the contact
    threshold. A window with no detected steps comes back flagged, with
    cadence and freeze index forced to zero.
    """
    rate = window.record.sample_rate_hz
    duration = window.window_seconds
    lt = window.samples[LTOTAL_IDX]
    rt = window.samples[RTOTAL_IDX]

    per_foot = [_foot_cycle_stats(ch, contact_threshold_n, rate) for ch in (lt, rt)]
    step_count = sum(n for _, _, n in per_foot)
    peak = float(max(lt.max(), rt.max()))

    if step_count == 0:
        return WindowFeatures(
            stride_time_s=0.0,
            stance_fraction=0.0,
            cadence_steps_per_min=0.0,
            peak_force_n=peak,
            freeze_index=0.0,
            step_count=0,
            no_steps=True,
        )

    strides = [s for s, _, _ in per_foot if not math.isnan(s)]
    fractions = [f for _, f, _ in per_foot if not math.isnan(f)]
    return WindowFeatures(
        stride_time_s=float(np.mean(strides)) if strides else 0.0,
        stance_fraction=float(np.mean(fractions)) if fractions else 0.0,
        cadence_steps_per_min=60.0 * step_count / duration,
        peak_force_n=peak,
        freeze_index=freeze_index(lt + rt, rate),
        step_count=step_count,
    )


def compute_baseline(features: list[WindowFeatures]) -> NormativeBaseline:
    """10th/50th/90th percentiles per feature over control-cohort windows."""
    if not features:
        raise EmptyCohort()
    percentiles = {}
    for name in FEATURE_NAMES:
        values = np.asarray([f.as_dict()[name] for f in features], dtype=np.float64)
        p10, p50, p90 = np.percentile(values, [10.0, 50.0, 90.0], method="linear")
        percentiles[name] = (float(p10), float(p50), float(p90))
    return NormativeBaseline(percentiles=percentiles, window_count=len(features))
