"""The two stimulus adapters: tabular Q-learning and the rules-based baseline.

Both present the same step interface: given the current anxiety estimate, the
desired level, and the current spider config, emit a one-attribute change (or
an identity decision when nothing should move).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .content import (
    ALL_ACTIONS,
    ATTRIBUTE_CARDINALITIES,
    N_ACTIONS,
    N_ATTRIBUTES,
    N_STATES,
    Action,
    SpiderConfig,
    apply_action,
    encode_state,
    legal_actions,
)
from .reward import RewardParams, check_level, reward


@dataclass(frozen=True)
class QLearningParams:
    epsilon: float = 0.05
    # Sessions allow only ~70 learning steps, so recent reward is weighted
    # almost fully and the horizon kept short; benchmarked against the
    # rules baseline over the persona population.
    alpha: float = 0.9
    gamma: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [0,1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside (0,1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma {self.gamma} outside [0,1)")


@dataclass(frozen=True)
class AdapterDecision:
    action: Optional[Action]  # None = identity (config unchanged)
    new_config: SpiderConfig
    method_tag: str  # "rl" or "rules"


def new_qtable() -> np.ndarray:
    return np.zeros((N_STATES, N_ACTIONS), dtype=float)


def ql_select_action(
    qtable: np.ndarray,
    state: int,
    legal: list[Action],
    params: QLearningParams,
    rng: np.random.Generator,
) -> Action:
    """Epsilon-greedy over the legal subset; greedy ties broken uniformly."""
    if not legal:
        raise ValueError("legal action set is empty")
    if rng.random() < params.epsilon:
        return legal[rng.integers(len(legal))]
    values = np.array([qtable[state, a.index] for a in legal])
    best = np.flatnonzero(values == values.max())
    return legal[best[rng.integers(len(best))]]


def ql_update(
    qtable: np.ndarray,
    s: int,
    a: Action,
    r: float,
    s_next: int,
    params: QLearningParams,
    legal_next: Optional[list[Action]] = None,
) -> None:
    """One-step Q-learning update in place; only entry (s, a) changes."""
    if legal_next is None:
        from .content import decode_state

        legal_next = legal_actions(decode_state(s_next))
    max_next = max(qtable[s_next, an.index] for an in legal_next)
    qtable[s, a.index] += params.alpha * (r + params.gamma * max_next - qtable[s, a.index])


def correction_factor(current: int, desired: int) -> float:
    """(current - desired) / 10, in [-1, 1]."""
    check_level(current)
    check_level(desired)
    return (current - desired) / 10.0


def rules_step(
    current: int,
    desired: int,
    config: SpiderConfig,
    rng: np.random.Generator,
) -> AdapterDecision:
    """Correction-factor baseline: step one randomly drawn attribute toward target.

    Positive correction (anxiety above target) weakens the stimulus, negative
    strengthens it.  The candidate pool size scales with |correction|.
    """
    cf = correction_factor(current, desired)
    if cf == 0.0:
        return AdapterDecision(None, config, "rules")
    direction = -1 if cf > 0 else 1
    values = config.values()
    movable = [
        i
        for i in range(N_ATTRIBUTES)
        if 0 <= values[i] + direction < ATTRIBUTE_CARDINALITIES[i]
    ]
    if not movable:
        # Stimulus saturated in the needed direction.
        return AdapterDecision(None, config, "rules")
    n_candidates = min(len(movable), min(6, max(1, round(abs(cf) * 6))))
    candidates = rng.choice(len(movable), size=n_candidates, replace=False)
    attribute = movable[candidates[rng.integers(n_candidates)]]
    action = Action(attribute, direction)
    return AdapterDecision(action, apply_action(config, action), "rules")


class RulesAdapter:
    """Stateless baseline behind the common adapter interface."""

    method_tag = "rules"

    def __init__(self, rng_seed: int = 0):
        self.rng = np.random.default_rng(rng_seed)

    def step(self, estimate: int, desired: int, config: SpiderConfig) -> AdapterDecision:
        return rules_step(estimate, desired, config, self.rng)

    def phase_reset(self) -> None:
        pass


class QLearningAdapter:
    """Tabular Q-learning over the 486-config space with epsilon-greedy selection.

    Each step closes the previous transition (reward observed for the last
    action) before choosing the next one.  The table persists across the
    low/high target change within a session unless reset_between_segments.
    """

    method_tag = "rl"

    def __init__(
        self,
        params: QLearningParams = QLearningParams(),
        reward_params: RewardParams = RewardParams(),
        qtable: Optional[np.ndarray] = None,
        reset_between_segments: bool = False,
    ):
        self.params = params
        self.reward_params = reward_params
        self.qtable = new_qtable() if qtable is None else qtable
        self.reset_between_segments = reset_between_segments
        self.rng = np.random.default_rng(params.rng_seed)
        self._prev: Optional[tuple[int, Action]] = None
        self.last_reward: Optional[float] = None

    def step(self, estimate: int, desired: int, config: SpiderConfig) -> AdapterDecision:
        state = encode_state(config)
        legal = legal_actions(config)
        r = reward(estimate, desired, self.reward_params)
        self.last_reward = r
        if self._prev is not None:
            prev_state, prev_action = self._prev
            ql_update(self.qtable, prev_state, prev_action, r, state, self.params, legal)
        action = ql_select_action(self.qtable, state, legal, self.params, self.rng)
        self._prev = (state, action)
        return AdapterDecision(action, apply_action(config, action), "rl")

    def phase_reset(self) -> None:
        """Forget the pending transition at a phase boundary."""
        self._prev = None

    def segment_reset(self) -> None:
        """Called at target-segment boundaries within an anxious phase."""
        if self.reset_between_segments:
            self.qtable = new_qtable()
            self._prev = None


QTABLE_HEADER = ["state"] + [a.label() for a in ALL_ACTIONS]


def save_qtable(qtable: np.ndarray, path: Path | str) -> None:
    """CSV export: 486 rows x 12 action columns with labels."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(QTABLE_HEADER)
        for s in range(N_STATES):
            writer.writerow([s] + [f"{qtable[s, a]:.10g}" for a in range(N_ACTIONS)])


def load_qtable(path: Path | str) -> np.ndarray:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != QTABLE_HEADER:
            raise ValueError(f"unexpected Q-table header: {header}")
        table = new_qtable()
        for row in reader:
            s = int(row[0])
            table[s, :] = [float(v) for v in row[1:]]
    return table
