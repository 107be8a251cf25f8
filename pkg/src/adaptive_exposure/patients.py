"""Parametric synthetic responders: config -> latent anxiety -> tonic+phasic EDA.

A patient maps a spider config to a latent anxiety level through per-attribute
sensitivities, then emits skin conductance: a lagged tonic component tracking
anxiety plus Poisson phasic responses.  Eight fixed personas span distinct
sensitivity patterns; random patients fill out larger populations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .content import ATTRIBUTE_CARDINALITIES, N_ATTRIBUTES, SpiderConfig, all_configs
from .signals import DEFAULT_SAMPLE_RATE_HZ

SCR_RISE_S = 1.0
SCR_DECAY_S = 4.0
SCR_HORIZON_S = 30.0  # events older than this no longer contribute


@dataclass(frozen=True)
class PatientModel:
    """All constants describing one synthetic responder."""

    sensitivity: tuple[tuple[float, ...], ...]  # 6 rows, one weight per attribute value
    base_anxiety: float = 0.0
    habituation_rate: float = 0.0  # anxiety levels shed per second at constant config
    noise_sd: float = 0.0
    scl_base: float = 2.0  # microsiemens
    scl_gain: float = 0.4  # microsiemens per anxiety level
    scr_rate_gain: float = 0.02  # events/s per anxiety level
    scr_amp_gain: float = 0.05  # microsiemens per anxiety level
    latency: float = 3.0  # tonic first-order lag time constant, seconds
    rng_seed: int = 0
    name: str = "custom"

    def __post_init__(self) -> None:
        if len(self.sensitivity) != N_ATTRIBUTES:
            raise ValueError("sensitivity needs one row per attribute")
        for row, card in zip(self.sensitivity, ATTRIBUTE_CARDINALITIES):
            if len(row) != card:
                raise ValueError(f"sensitivity row {row} does not match cardinality {card}")
            if any(not 0.0 <= w <= 1.0 for w in row):
                raise ValueError(f"sensitivity weights must lie in [0,1]: {row}")
        for name in ("habituation_rate", "noise_sd", "scl_gain", "scr_rate_gain", "scr_amp_gain"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")

    def to_json(self) -> dict:
        return {
            "sensitivity": [list(r) for r in self.sensitivity],
            "base_anxiety": self.base_anxiety,
            "habituation_rate": self.habituation_rate,
            "noise_sd": self.noise_sd,
            "scl_base": self.scl_base,
            "scl_gain": self.scl_gain,
            "scr_rate_gain": self.scr_rate_gain,
            "scr_amp_gain": self.scr_amp_gain,
            "latency": self.latency,
            "rng_seed": self.rng_seed,
            "name": self.name,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PatientModel":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown patient fields: {sorted(unknown)}")
        data = dict(data)
        data["sensitivity"] = tuple(tuple(float(w) for w in row) for row in data["sensitivity"])
        return cls(**data)


@dataclass
class ExposureState:
    time_at_config: float = 0.0
    habituation_debt: float = 0.0


def step_exposure(exposure: ExposureState, model: PatientModel, config_changed: bool, dt: float) -> ExposureState:
    """Habituation accrues while the config holds; a change halves the debt."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if config_changed:
        return ExposureState(time_at_config=0.0, habituation_debt=exposure.habituation_debt * 0.5)
    return ExposureState(
        time_at_config=exposure.time_at_config + dt,
        habituation_debt=exposure.habituation_debt + model.habituation_rate * dt,
    )


def latent_anxiety(
    model: PatientModel,
    config: Optional[SpiderConfig],
    exposure: Optional[ExposureState] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Clamped sum of base, mean attribute drive, habituation relief, and noise.

    config=None means no stimulus on screen (relax phase): only the base and
    noise terms apply.
    """
    a = model.base_anxiety
    if config is not None:
        drive = sum(row[v] for row, v in zip(model.sensitivity, config.values())) / N_ATTRIBUTES
        a += 10.0 * drive
        if exposure is not None:
            a -= exposure.habituation_debt
    if rng is not None and model.noise_sd > 0:
        a += rng.normal(0.0, model.noise_sd)
    return min(10.0, max(0.0, a))


class Patient:
    """Stateful EDA emitter wrapping a PatientModel.

    Keeps the lagged tonic level and the set of in-flight SCR events across
    emit calls, so a session can stream samples block by block.
    """

    def __init__(self, model: PatientModel, rng_seed: Optional[int] = None,
                 sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
        self.model = model
        self.rng = np.random.default_rng(model.rng_seed if rng_seed is None else rng_seed)
        self.sample_rate_hz = sample_rate_hz
        self.t = 0.0
        self.tonic = model.scl_base
        self._events: list[tuple[float, float]] = []  # (start time, amplitude)

    def emit(self, anxiety: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Advance dt seconds at the given driving anxiety; return (t, conductance)."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        m = self.model
        h = 1.0 / self.sample_rate_hz
        n = int(round(dt * self.sample_rate_hz))
        target = m.scl_base + m.scl_gain * anxiety
        decay = math.exp(-h / m.latency) if m.latency > 0 else 0.0
        rate = m.scr_rate_gain * anxiety

        ts = np.empty(n)
        cs = np.empty(n)
        for i in range(n):
            self.t += h
            self.tonic = target + (self.tonic - target) * decay
            if rate > 0 and self.rng.random() < rate * h:
                amp = m.scr_amp_gain * anxiety * self.rng.uniform(0.5, 1.5)
                self._events.append((self.t, amp))
            phasic = 0.0
            for t0, amp in self._events:
                age = self.t - t0
                if age < SCR_RISE_S:
                    phasic += amp * age / SCR_RISE_S
                else:
                    phasic += amp * math.exp(-(age - SCR_RISE_S) / SCR_DECAY_S)
            ts[i] = self.t
            cs[i] = max(0.0, self.tonic + phasic)
        self._events = [(t0, amp) for t0, amp in self._events if self.t - t0 < SCR_HORIZON_S]
        return ts, cs


# ---------------------------------------------------------------------------
# Persona catalog: 8 fixed responder profiles, each peaking on a different
# attribute pattern.  Constants are versioned source, not configuration.
# ---------------------------------------------------------------------------

_COMMON = dict(
    base_anxiety=0.0,
    habituation_rate=0.004,
    noise_sd=0.25,
    scl_base=2.0,
    scl_gain=0.4,
    scr_rate_gain=0.02,
    scr_amp_gain=0.05,
    latency=3.0,
)

def _row_peaked_at(card: int, target: int, weight: float) -> tuple[float, ...]:
    """Per-value weights falling off with ordinal distance from the target value."""
    falloff = {0: 1.0, 1: 0.45, 2: 0.12}
    return tuple(round(weight * falloff[abs(v - target)], 3) for v in range(card))


def _persona_sensitivity(peak: tuple[int, ...], signature: int) -> tuple[tuple[float, ...], ...]:
    """Rows peaking at the given config; the signature attribute carries extra weight."""
    return tuple(
        _row_peaked_at(card, target, 1.0 if i == signature else 0.85)
        for i, (card, target) in enumerate(zip(ATTRIBUTE_CARDINALITIES, peak))
    )


# (name, signature attribute, peak config): each persona's latent anxiety
# maximizes at a distinct config, giving the population cluster structure.
_PERSONA_SPECS: list[tuple[str, int, tuple[int, ...]]] = [
    ("size-dominant", 3, (2, 2, 2, 2, 1, 2)),
    ("movement-dominant", 1, (1, 2, 0, 1, 0, 1)),
    ("closeness-dominant", 2, (0, 1, 2, 0, 1, 2)),
    ("color-specific", 5, (2, 0, 1, 2, 0, 1)),
    ("hairiness-specific", 4, (0, 0, 0, 2, 1, 0)),
    ("locomotion-dominant", 0, (2, 1, 1, 0, 0, 2)),
    ("mixed-pair", 3, (1, 0, 2, 2, 1, 1)),
    ("uniform-mild", 1, (0, 2, 1, 1, 0, 2)),
]

_PERSONA_SENSITIVITIES: list[tuple[str, tuple[tuple[float, ...], ...]]] = [
    (name, _persona_sensitivity(peak, signature)) for name, signature, peak in _PERSONA_SPECS
]


def persona(id: int) -> PatientModel:
    """One of the 8 fixed personas; identical parameters on every call."""
    if not 0 <= id < len(_PERSONA_SENSITIVITIES):
        raise ValueError(f"persona id {id} outside 0..{len(_PERSONA_SENSITIVITIES) - 1}")
    name, sens = _PERSONA_SENSITIVITIES[id]
    return PatientModel(sensitivity=sens, rng_seed=id, name=f"persona-{id}-{name}", **_COMMON)


def random_patient(seed: int) -> PatientModel:
    """Seeded random responder with a reachable high-anxiety region.

    Rows are drawn randomly then rescaled so the best config drives latent
    anxiety into the 8..10 band, keeping both targets attainable.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for card in ATTRIBUTE_CARDINALITIES:
        # Value-specific response: a peak value per attribute, falling off with
        # ordinal distance, like the persona catalog but randomly placed.
        target = int(rng.integers(card))
        weight = float(rng.uniform(0.7, 1.0))
        falloff = {0: 1.0, 1: float(rng.uniform(0.3, 0.6)), 2: float(rng.uniform(0.05, 0.25))}
        rows.append(np.array([weight * falloff[abs(v - target)] for v in range(card)]))
    peak_mean = sum(r.max() for r in rows) / N_ATTRIBUTES
    target_peak = rng.uniform(0.82, 0.95)  # latent max in roughly [8.2, 9.5]
    scale = min(1.0 / max(r.max() for r in rows), target_peak / peak_mean)
    sens = tuple(tuple(float(round(w * scale, 4)) for w in r) for r in rows)
    return PatientModel(sensitivity=sens, rng_seed=seed, name=f"random-{seed}", **_COMMON)


def peak_config(model: PatientModel) -> SpiderConfig:
    """Argmax of noise-free, habituation-free latent anxiety over all 486 configs."""
    best, best_a = None, -1.0
    for config in all_configs():
        a = latent_anxiety(model, config)
        if a > best_a:
            best, best_a = config, a
    return best


def load_patients(path: Path | str) -> list[PatientModel]:
    """Load persona references and custom models from a JSON document."""
    with open(path) as f:
        doc = json.load(f)
    out = []
    for entry in doc["patients"]:
        if isinstance(entry, dict) and set(entry) == {"persona"}:
            out.append(persona(int(entry["persona"])))
        else:
            out.append(PatientModel.from_json(entry))
    return out
