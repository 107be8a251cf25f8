"""Synthetic responder tests: anxiety mapping, habituation, EDA emission, personas."""

import numpy as np
import pytest

from adaptive_exposure.content import SpiderConfig, all_configs
from adaptive_exposure.patients import (
    ExposureState,
    Patient,
    PatientModel,
    latent_anxiety,
    load_patients,
    peak_config,
    persona,
    random_patient,
    step_exposure,
)

FLAT = tuple(tuple(0.5 for _ in range(card)) for card in (3, 3, 3, 3, 2, 3))


def test_model_validation():
    with pytest.raises(ValueError):
        PatientModel(sensitivity=FLAT[:5])
    with pytest.raises(ValueError):
        PatientModel(sensitivity=FLAT[:5] + ((0.5, 0.5, 0.5, 0.5),))
    with pytest.raises(ValueError):
        PatientModel(sensitivity=((1.5, 0, 0),) + FLAT[1:])
    with pytest.raises(ValueError):
        PatientModel(sensitivity=FLAT, noise_sd=-0.1)


def test_model_json_round_trip_and_unknown_key_rejection():
    model = persona(3)
    assert PatientModel.from_json(model.to_json()) == model
    bad = model.to_json()
    bad["mystery"] = 1
    with pytest.raises(ValueError, match="mystery"):
        PatientModel.from_json(bad)


def test_latent_anxiety_is_mean_attribute_drive():
    model = PatientModel(sensitivity=FLAT)
    config = SpiderConfig(0, 0, 0, 0, 0, 0)
    assert latent_anxiety(model, config) == pytest.approx(5.0)
    # No stimulus: only the base term.
    assert latent_anxiety(model, None) == 0.0
    based = PatientModel(sensitivity=FLAT, base_anxiety=2.0)
    assert latent_anxiety(based, None) == 2.0
    assert latent_anxiety(based, config) == pytest.approx(7.0)


def test_latent_anxiety_clamps_to_scale():
    hot = tuple(tuple(1.0 for _ in row) for row in FLAT)
    model = PatientModel(sensitivity=hot, base_anxiety=5.0)
    assert latent_anxiety(model, SpiderConfig(0, 0, 0, 0, 0, 0)) == 10.0


def test_habituation_accrues_and_halves_on_change():
    model = PatientModel(sensitivity=FLAT, habituation_rate=0.01)
    state = ExposureState()
    for _ in range(10):
        state = step_exposure(state, model, config_changed=False, dt=4.0)
    assert state.habituation_debt == pytest.approx(0.4)
    assert state.time_at_config == pytest.approx(40.0)
    state = step_exposure(state, model, config_changed=True, dt=4.0)
    assert state.habituation_debt == pytest.approx(0.2)
    assert state.time_at_config == 0.0
    config = SpiderConfig(0, 0, 0, 0, 0, 0)
    assert latent_anxiety(model, config, state) == pytest.approx(5.0 - 0.2)


def test_emit_is_deterministic_per_seed():
    model = persona(1)
    a = Patient(model, rng_seed=9)
    b = Patient(model, rng_seed=9)
    for anxiety in (0.0, 4.0, 8.0):
        ta, ca = a.emit(anxiety, 4.0)
        tb, cb = b.emit(anxiety, 4.0)
        assert np.array_equal(ta, tb)
        assert np.array_equal(ca, cb)
    c = Patient(model, rng_seed=10)
    c.emit(0.0, 4.0)
    _, c8 = c.emit(8.0, 60.0)
    _, a8 = a.emit(8.0, 60.0)
    assert not np.array_equal(a8, c8)


def test_tonic_converges_to_base_plus_gain_times_anxiety():
    model = PatientModel(sensitivity=FLAT, scr_rate_gain=0.0, scr_amp_gain=0.0)
    patient = Patient(model, rng_seed=0)
    _, c = patient.emit(6.0, 60.0)
    assert c[-1] == pytest.approx(model.scl_base + model.scl_gain * 6.0, abs=1e-6)
    # First-order lag: one time constant in, about 63% of the gap is closed.
    patient2 = Patient(model, rng_seed=0)
    _, c2 = patient2.emit(10.0, model.latency)
    gap = model.scl_gain * 10.0
    assert c2[-1] - model.scl_base == pytest.approx(gap * (1 - np.exp(-1)), rel=0.05)


def test_phasic_event_rate_scales_with_anxiety():
    from adaptive_exposure.signals import EdaTrace, detect_scr_peaks

    model = PatientModel(sensitivity=FLAT, scr_rate_gain=0.02, scr_amp_gain=0.2)
    patient = Patient(model, rng_seed=11)
    t, c = patient.emit(5.0, 600.0)
    # Expected events: rate 0.02*5 = 0.1/s over 600 s = 60; detection loses a
    # few overlapping bumps, so the band is wide but still rules out 0.5x/2x.
    count = len(detect_scr_peaks(EdaTrace(t, c)))
    assert 33 <= count <= 80
    quiet = Patient(model, rng_seed=11)
    tq, cq = quiet.emit(0.0, 600.0)
    assert len(detect_scr_peaks(EdaTrace(tq, cq))) == 0


def test_emit_timestamps_are_continuous_across_calls():
    patient = Patient(persona(0), rng_seed=0)
    t1, _ = patient.emit(2.0, 4.0)
    t2, _ = patient.emit(2.0, 4.0)
    assert t2[0] > t1[-1]
    assert np.allclose(np.diff(np.concatenate([t1, t2])), 1 / 8.0)


def test_personas_are_stable_and_distinct():
    models = [persona(i) for i in range(8)]
    assert [m.name for m in models] == [persona(i).name for i in range(8)]
    assert len({m.sensitivity for m in models}) == 8
    with pytest.raises(ValueError):
        persona(8)


def test_personas_peak_high_at_distinct_configs():
    peaks = [peak_config(persona(i)) for i in range(8)]
    assert len(set(peaks)) == 8
    for i, peak in enumerate(peaks):
        top = latent_anxiety(persona(i), peak)
        assert top == pytest.approx(8.75, abs=1e-9)


def test_random_patients_are_seeded_and_reach_high_anxiety():
    assert random_patient(41) == random_patient(41)
    assert random_patient(41) != random_patient(42)
    for seed in range(10):
        model = random_patient(seed)
        top = max(latent_anxiety(model, config) for config in all_configs())
        assert 7.5 <= top <= 10.0


def test_peak_config_is_the_argmax():
    model = random_patient(5)
    best = peak_config(model)
    top = latent_anxiety(model, best)
    assert all(latent_anxiety(model, config) <= top + 1e-12 for config in all_configs())


def test_load_patients_mixes_personas_and_custom_models(tmp_path):
    import json

    doc = {"patients": [{"persona": 2}, random_patient(17).to_json()]}
    path = tmp_path / "patients.json"
    path.write_text(json.dumps(doc))
    loaded = load_patients(path)
    assert loaded[0] == persona(2)
    assert loaded[1] == random_patient(17)
