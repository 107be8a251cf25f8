"""EDA processing tests: calibration mapping, SCR oracles on constructed traces, CSV I/O."""

import numpy as np
import pytest

from adaptive_exposure.signals import (
    Calibration,
    EdaTrace,
    TraceError,
    calibrate,
    detect_scr_peaks,
    read_trace,
    scl_level,
    scr_features,
    write_trace,
)

FS = 8.0


def flat_trace(duration_s: float, level: float = 2.0, t0: float = 0.0) -> EdaTrace:
    n = int(duration_s * FS)
    t = t0 + np.arange(1, n + 1) / FS
    return EdaTrace(t, np.full(n, level))


def add_triangle(trace: EdaTrace, apex_t: float, amplitude: float, half_width_s: float = 2.0) -> EdaTrace:
    bump = np.maximum(0.0, 1.0 - np.abs(trace.t - apex_t) / half_width_s)
    return EdaTrace(trace.t, trace.conductance + amplitude * bump)


# -- trace container ---------------------------------------------------------


def test_trace_validation():
    with pytest.raises(TraceError):
        EdaTrace(np.array([0.0, 1.0]), np.array([1.0]))
    with pytest.raises(TraceError):
        EdaTrace(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(TraceError):
        EdaTrace(np.array([0.0, 1.0]), np.array([1.0, -0.1]))


def test_window_is_left_closed_right_open():
    trace = flat_trace(10.0)
    window = trace.window(2.0, 4.0)
    assert window.t[0] >= 2.0
    assert window.t[-1] < 4.0
    assert len(window) == int(2.0 * FS)


def test_tail_returns_requested_duration():
    trace = flat_trace(120.0)
    assert len(trace.tail(60.0)) == int(60.0 * FS)


# -- calibration and level mapping ------------------------------------------


def test_calibrate_uses_final_minute_and_floors_the_span():
    # First minute at 3.0, final minute at 2.0: baseline must come from the tail.
    n = int(120 * FS)
    t = np.arange(1, n + 1) / FS
    c = np.where(t <= 60.0, 3.0, 2.0)
    cal = calibrate(EdaTrace(t, c))
    assert cal.baseline == pytest.approx(2.0)
    assert cal.span == pytest.approx(4.0)  # range 1.0 * 1.25 < floor 4.0


def test_calibrate_span_scales_with_observed_range():
    n = int(120 * FS)
    t = np.arange(1, n + 1) / FS
    c = 2.0 + 4.0 * (t / t[-1])  # 4 uS drift
    cal = calibrate(EdaTrace(t, c))
    assert cal.span == pytest.approx(5.0, abs=0.01)  # 4.0 * 1.25


def test_calibrate_rejects_short_traces():
    with pytest.raises(TraceError):
        calibrate(flat_trace(45.0))


def test_scl_level_linear_mapping():
    cal = Calibration(baseline=2.0, span=4.0)
    assert scl_level(flat_trace(4.0, 2.0), cal) == 0
    assert scl_level(flat_trace(4.0, 3.0), cal) == 2  # round(2.5) rounds to even
    assert scl_level(flat_trace(4.0, 3.2), cal) == 3
    assert scl_level(flat_trace(4.0, 4.0), cal) == 5
    assert scl_level(flat_trace(4.0, 6.0), cal) == 10
    assert scl_level(flat_trace(4.0, 1.0), cal) == 0  # below baseline clamps


def test_scl_level_expands_span_on_overshoot():
    cal = Calibration(baseline=2.0, span=4.0)
    assert scl_level(flat_trace(4.0, 8.0), cal) == 10
    assert cal.span == pytest.approx(6.0)
    # The expanded span rescales later readings.
    assert scl_level(flat_trace(4.0, 5.0), cal) == 5


def test_scl_level_rejects_empty_window():
    cal = Calibration(baseline=2.0, span=4.0)
    with pytest.raises(TraceError):
        scl_level(EdaTrace(np.array([]), np.array([])), cal)


# -- SCR detection -----------------------------------------------------------


def test_no_bumps_no_peaks():
    assert detect_scr_peaks(flat_trace(60.0)) == []
    features = scr_features(flat_trace(60.0))
    assert features.peak_count == 0
    assert features.sum_amplitude == 0.0


def test_single_bump_exact_amplitude():
    trace = add_triangle(flat_trace(60.0), apex_t=30.0, amplitude=0.8)
    peaks = detect_scr_peaks(trace)
    assert len(peaks) == 1
    assert peaks[0].amplitude == pytest.approx(0.8, abs=1e-3)
    assert peaks[0].onset_t < peaks[0].peak_t
    assert peaks[0].peak_t == pytest.approx(30.0, abs=0.2)


def test_three_bumps_exact_amplitudes_and_feature_identity():
    trace = flat_trace(60.0)
    amplitudes = [0.3, 0.9, 0.45]
    for apex, amp in zip([12.0, 30.0, 48.0], amplitudes):
        trace = add_triangle(trace, apex_t=apex, amplitude=amp)
    peaks = detect_scr_peaks(trace)
    assert len(peaks) == 3
    assert [p.amplitude for p in peaks] == pytest.approx(amplitudes, abs=1e-3)
    features = scr_features(trace)
    assert features.peak_count == 3
    assert features.sum_amplitude == pytest.approx(features.mean_amplitude * features.peak_count, abs=1e-12)
    assert features.sum_amplitude == pytest.approx(sum(amplitudes), abs=3e-3)


def test_detection_is_shift_invariant():
    base = add_triangle(flat_trace(60.0), apex_t=20.0, amplitude=0.6)
    shifted = EdaTrace(base.t + 1000.0, base.conductance + 3.5)
    p0 = detect_scr_peaks(base)
    p1 = detect_scr_peaks(shifted)
    assert len(p0) == len(p1) == 1
    assert p1[0].amplitude == pytest.approx(p0[0].amplitude, abs=1e-12)
    assert p1[0].peak_t - p0[0].peak_t == pytest.approx(1000.0, abs=1e-9)


def test_sub_threshold_bumps_are_ignored():
    trace = add_triangle(flat_trace(60.0), apex_t=30.0, amplitude=0.03)
    assert detect_scr_peaks(trace, min_amplitude=0.05) == []
    assert len(detect_scr_peaks(trace, min_amplitude=0.01)) == 1


def test_detection_rejects_bad_sampling():
    t = np.arange(20) * 0.5  # 2 Hz
    with pytest.raises(TraceError):
        detect_scr_peaks(EdaTrace(t, np.full(20, 2.0)))
    t = np.array([0.0, 0.125, 0.25, 0.8, 0.925, 1.05, 1.175, 1.3])
    with pytest.raises(TraceError):
        detect_scr_peaks(EdaTrace(t, np.full(8, 2.0)))


# -- CSV I/O -----------------------------------------------------------------


def test_trace_csv_round_trip(tmp_path):
    trace = add_triangle(flat_trace(10.0), apex_t=5.0, amplitude=0.7)
    path = tmp_path / "eda.csv"
    write_trace(path, trace)
    text = path.read_text()
    assert text.startswith("t_s,eda_us\n")
    assert "\r" not in text
    loaded = read_trace(path)
    assert np.allclose(loaded.t, trace.t, atol=1e-4)
    assert np.allclose(loaded.conductance, trace.conductance, atol=1e-4)


def test_read_trace_reports_the_offending_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t_s,eda_us\n0.1250,2.0000\n0.2500,oops\n")
    with pytest.raises(TraceError, match="line 3"):
        read_trace(path)
    path.write_text("t_s,eda_us\n0.2500,2.0\n0.1250,2.0\n")
    with pytest.raises(TraceError, match="line 3"):
        read_trace(path)
    path.write_text("time,value\n")
    with pytest.raises(TraceError, match="header"):
        read_trace(path)
