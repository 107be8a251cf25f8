"""Spider attribute space: configs, state indexing, and the one-step action set.

The stimulus is a virtual spider described by six ordinal attributes.  A config
is the RL state; actions bump a single attribute up or down by one level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

ATTRIBUTE_NAMES = ("locomotion", "movement", "closeness", "largeness", "hairiness", "color")
ATTRIBUTE_CARDINALITIES = (3, 3, 3, 3, 2, 3)
N_ATTRIBUTES = 6
N_STATES = 486  # 3*3*3*3*2*3
N_ACTIONS = 12  # 6 attributes x 2 directions


class BoundaryViolation(ValueError):
    """Raised when an action would push an attribute out of its range."""


@dataclass(frozen=True)
class SpiderConfig:
    """One point in the 486-element stimulus space."""

    locomotion: int
    movement: int
    closeness: int
    largeness: int
    hairiness: int
    color: int

    def __post_init__(self) -> None:
        for name, card, value in zip(ATTRIBUTE_NAMES, ATTRIBUTE_CARDINALITIES, self.values()):
            if not isinstance(value, int) or not 0 <= value < card:
                raise ValueError(f"{name}={value!r} outside 0..{card - 1}")

    def values(self) -> tuple[int, ...]:
        return (self.locomotion, self.movement, self.closeness, self.largeness, self.hairiness, self.color)

    @classmethod
    def from_values(cls, values) -> "SpiderConfig":
        vals = tuple(int(v) for v in values)
        if len(vals) != N_ATTRIBUTES:
            raise ValueError(f"expected {N_ATTRIBUTES} attribute values, got {len(vals)}")
        return cls(*vals)

    def to_list(self) -> list[int]:
        """Wire/trace form: 6-integer array in attribute order."""
        return list(self.values())


@dataclass(frozen=True)
class Action:
    """Bump one attribute by +1 or -1."""

    attribute: int
    direction: int

    def __post_init__(self) -> None:
        if not 0 <= self.attribute < N_ATTRIBUTES:
            raise ValueError(f"attribute index {self.attribute} outside 0..5")
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction}")

    @property
    def index(self) -> int:
        """Dense 0..11 index: attribute*2, +1 for the decrement."""
        return self.attribute * 2 + (0 if self.direction == 1 else 1)

    @classmethod
    def from_index(cls, index: int) -> "Action":
        if not 0 <= index < N_ACTIONS:
            raise ValueError(f"action index {index} outside 0..11")
        return cls(index // 2, 1 if index % 2 == 0 else -1)

    def label(self) -> str:
        return f"{ATTRIBUTE_NAMES[self.attribute]}{'+' if self.direction == 1 else '-'}"

    @classmethod
    def from_label(cls, label: str) -> "Action":
        name, sign = label[:-1], label[-1]
        if name not in ATTRIBUTE_NAMES or sign not in "+-":
            raise ValueError(f"bad action label {label!r}")
        return cls(ATTRIBUTE_NAMES.index(name), 1 if sign == "+" else -1)


ALL_ACTIONS = tuple(Action.from_index(i) for i in range(N_ACTIONS))


def encode_state(config: SpiderConfig) -> int:
    """Mixed-radix index in 0..485, attribute order fixed as declared."""
    index = 0
    for card, value in zip(ATTRIBUTE_CARDINALITIES, config.values()):
        index = index * card + value
    return index


def decode_state(index: int) -> SpiderConfig:
    """Inverse of encode_state."""
    if not 0 <= index < N_STATES:
        raise ValueError(f"state index {index} outside 0..{N_STATES - 1}")
    values = [0] * N_ATTRIBUTES
    rest = index
    for i in range(N_ATTRIBUTES - 1, -1, -1):
        card = ATTRIBUTE_CARDINALITIES[i]
        values[i] = rest % card
        rest //= card
    return SpiderConfig.from_values(values)


def legal_actions(config: SpiderConfig) -> list[Action]:
    """Actions whose target value stays in range; between 6 and 12 of them."""
    values = config.values()
    out = []
    for action in ALL_ACTIONS:
        target = values[action.attribute] + action.direction
        if 0 <= target < ATTRIBUTE_CARDINALITIES[action.attribute]:
            out.append(action)
    return out


def apply_action(config: SpiderConfig, action: Action) -> SpiderConfig:
    """Apply a single-attribute step; boundary violations raise."""
    values = list(config.values())
    target = values[action.attribute] + action.direction
    if not 0 <= target < ATTRIBUTE_CARDINALITIES[action.attribute]:
        raise BoundaryViolation(
            f"action {action.label()} leaves {ATTRIBUTE_NAMES[action.attribute]} at {target}, out of range"
        )
    values[action.attribute] = target
    return SpiderConfig.from_values(values)


def normalized_vector(config: SpiderConfig) -> tuple[float, ...]:
    """Each attribute scaled to [0, 1] by its own range; feeds clustering."""
    return tuple(v / (card - 1) for v, card in zip(config.values(), ATTRIBUTE_CARDINALITIES))


def all_configs() -> Iterator[SpiderConfig]:
    for i in range(N_STATES):
        yield decode_state(i)
