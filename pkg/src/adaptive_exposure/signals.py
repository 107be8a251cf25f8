"""Skin-conductance processing: traces, calibration, 0-10 level mapping, SCR features.

A trace is a pair of aligned arrays (timestamps in seconds, conductance in
microsiemens).  The tonic mean drives the discrete anxiety estimate; phasic
trough-to-peak events drive the SCR feature set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .reward import MAX_LEVEL

DEFAULT_SAMPLE_RATE_HZ = 8.0
DEFAULT_MIN_AMPLITUDE_US = 0.05  # conventional SCR threshold
DEFAULT_MIN_SPAN_US = 4.0
DEFAULT_SPAN_MULTIPLIER = 1.25
TRACE_HEADER = ["t_s", "eda_us"]


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class EdaTrace:
    """Immutable sampled skin-conductance record."""

    t: np.ndarray  # seconds, strictly increasing
    conductance: np.ndarray  # microsiemens, >= 0

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        c = np.asarray(self.conductance, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "conductance", c)
        if t.shape != c.shape or t.ndim != 1:
            raise TraceError("t and conductance must be equal-length 1-D arrays")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise TraceError("timestamps must be strictly increasing")
        if np.any(c < 0):
            raise TraceError("conductance must be non-negative")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) > 1 else 0.0

    def window(self, t_start: float, t_end: float) -> "EdaTrace":
        """Samples with t_start <= t < t_end."""
        mask = (self.t >= t_start) & (self.t < t_end)
        return EdaTrace(self.t[mask], self.conductance[mask])

    def tail(self, seconds: float) -> "EdaTrace":
        if len(self.t) == 0:
            return self
        return self.window(self.t[-1] - seconds + 1e-12, self.t[-1] + 1e-12)

    @staticmethod
    def concat(traces: list["EdaTrace"]) -> "EdaTrace":
        parts = [tr for tr in traces if len(tr) > 0]
        if not parts:
            return EdaTrace(np.array([]), np.array([]))
        return EdaTrace(
            np.concatenate([tr.t for tr in parts]),
            np.concatenate([tr.conductance for tr in parts]),
        )


@dataclass
class Calibration:
    """Maps tonic conductance onto the 0-10 scale.

    baseline is the relaxed tonic level; span the expected dynamic range above
    it.  The span stretches if later tonic readings overshoot it, so observed
    values never exceed the mapped range.
    """

    baseline: float
    span: float

    def __post_init__(self) -> None:
        if not self.span > 0:
            raise ValueError(f"span must be positive, got {self.span}")

    def observe(self, tonic: float) -> None:
        if tonic - self.baseline > self.span:
            self.span = tonic - self.baseline


def calibrate(
    relax_trace: EdaTrace,
    min_span: float = DEFAULT_MIN_SPAN_US,
    span_multiplier: float = DEFAULT_SPAN_MULTIPLIER,
) -> Calibration:
    """Baseline from the final 60 s of a relax recording; span floored at min_span."""
    if relax_trace.duration_s < 60.0:
        raise TraceError(f"calibration trace too short: {relax_trace.duration_s:.1f} s < 60 s")
    tail = relax_trace.tail(60.0)
    baseline = float(np.mean(tail.conductance))
    observed_range = float(np.ptp(relax_trace.conductance))
    span = max(min_span, observed_range * span_multiplier)
    return Calibration(baseline=baseline, span=span)


def scl_level(window: EdaTrace, cal: Calibration) -> int:
    """Discretize the window's tonic mean onto 0..10 against the calibration."""
    if len(window) == 0:
        raise TraceError("cannot estimate a level from an empty window")
    tonic = float(np.mean(window.conductance))
    cal.observe(tonic)
    level = round(10.0 * (tonic - cal.baseline) / cal.span)
    return int(min(MAX_LEVEL, max(0, level)))


class ScrPeak(NamedTuple):
    onset_t: float
    peak_t: float
    amplitude: float


@dataclass(frozen=True)
class ScrFeatures:
    peak_count: int
    mean_amplitude: float
    sum_amplitude: float


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    kernel = np.ones(width) / width
    pad = width // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(width - 1 - pad, x[-1])])
    return np.convolve(padded, kernel, mode="valid")


def detect_scr_peaks(
    trace: EdaTrace,
    min_amplitude: float = DEFAULT_MIN_AMPLITUDE_US,
    smoothing_s: float = 0.5,
) -> list[ScrPeak]:
    """Trough-to-peak detection on the phasic component.

    The signal is lightly smoothed to locate alternating extrema; each local
    maximum whose rise from the preceding local minimum reaches min_amplitude
    counts as one SCR.  Amplitudes are read from the raw samples at the
    located extrema, so a constant offset changes nothing.
    """
    if len(trace) < 3:
        return []
    dt = np.diff(trace.t)
    median_dt = float(np.median(dt))
    if median_dt > 0.25 + 1e-9:
        raise TraceError(f"sample rate below 4 Hz (median dt {median_dt:.3f} s)")
    if np.any(np.abs(dt - median_dt) > 0.5 * median_dt):
        raise TraceError("irregular sampling beyond tolerance")

    width = max(1, int(round(smoothing_s / median_dt)))
    smooth = _moving_average(trace.conductance, width)

    # Alternating extrema scan over the smoothed signal: every falling->rising
    # flip marks a trough, every rising->falling flip a peak candidate.
    rising: bool | None = None
    last_min_idx = 0
    peaks: list[ScrPeak] = []
    for i in range(1, len(smooth)):
        if smooth[i] > smooth[i - 1]:
            if rising is not True:
                last_min_idx = i - 1
            rising = True
        elif smooth[i] < smooth[i - 1]:
            if rising is True:
                lo, hi = last_min_idx, i - 1
                raw_min_idx = lo + int(np.argmin(trace.conductance[lo : hi + 1]))
                raw_max_idx = lo + int(np.argmax(trace.conductance[lo : hi + 1]))
                amplitude = float(
                    trace.conductance[raw_max_idx] - trace.conductance[raw_min_idx]
                )
                if amplitude >= min_amplitude:
                    peaks.append(
                        ScrPeak(
                            onset_t=float(trace.t[raw_min_idx]),
                            peak_t=float(trace.t[raw_max_idx]),
                            amplitude=amplitude,
                        )
                    )
            rising = False
    return peaks


def scr_features(trace: EdaTrace, min_amplitude: float = DEFAULT_MIN_AMPLITUDE_US) -> ScrFeatures:
    peaks = detect_scr_peaks(trace, min_amplitude)
    if not peaks:
        return ScrFeatures(0, 0.0, 0.0)
    amplitudes = [p.amplitude for p in peaks]
    mean_amp = sum(amplitudes) / len(amplitudes)
    return ScrFeatures(len(peaks), mean_amp, mean_amp * len(peaks))


def write_trace(path: Path | str, trace: EdaTrace) -> None:
    """CSV: header t_s,eda_us; %.4f fixed point; LF endings."""
    with open(path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for t, c in zip(trace.t, trace.conductance):
            writer.writerow([f"{t:.4f}", f"{c:.4f}"])


def read_trace(path: Path | str) -> EdaTrace:
    ts: list[float] = []
    cs: list[float] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise TraceError(f"{path}: bad header {header}, expected {TRACE_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, c = float(row[0]), float(row[1])
            except (ValueError, IndexError) as exc:
                raise TraceError(f"{path}: malformed row at line {lineno}: {row}") from exc
            if ts and t <= ts[-1]:
                raise TraceError(f"{path}: non-monotone timestamp at line {lineno}")
            if c < 0:
                raise TraceError(f"{path}: negative conductance at line {lineno}")
            ts.append(t)
            cs.append(c)
    return EdaTrace(np.array(ts), np.array(cs))
