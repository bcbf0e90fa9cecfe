"""Intent vectors: which meta-actions a sender commits to for an episode."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from intentmerge.dynamics import Action

N_ACTIONS = len(Action)


class InvalidIntentError(ValueError):
    """The action subset can never be complied with."""


class UnsupportedIntentError(ValueError):
    """Valid in principle, but outside the shipped catalog."""


@dataclass(frozen=True)
class Intent:
    """Indicator vector ordered like :class:`Action` (IDLE first)."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != N_ACTIONS or any(b not in (0, 1) for b in self.bits):
            raise InvalidIntentError(f"intent needs {N_ACTIONS} binary entries, got {self.bits}")
        if self.bits[Action.IDLE] != 1:
            raise InvalidIntentError("IDLE must always be committed")
        if self.bits[Action.LANE_RIGHT]:
            raise InvalidIntentError("LANE_RIGHT cannot be honoured from the rightmost lane")
        if sum(self.bits) > 2:
            raise UnsupportedIntentError("at most one non-IDLE action is supported")

    @property
    def name(self) -> str:
        extra = [a for a in committed_actions(self) if a is not Action.IDLE]
        return extra[0].name if extra else Action.IDLE.name

    @property
    def committed_action(self) -> Action | None:
        """The single non-IDLE action, or None for the IDLE intent."""
        extra = [a for a in committed_actions(self) if a is not Action.IDLE]
        return extra[0] if extra else None

    def to_byte(self) -> int:
        return sum(bit << k for k, bit in enumerate(self.bits))

    @classmethod
    def from_byte(cls, value: int) -> "Intent":
        if not 0 <= value < 2 ** N_ACTIONS:
            raise InvalidIntentError(f"byte {value} out of range")
        return cls(tuple((value >> k) & 1 for k in range(N_ACTIONS)))

    def __str__(self) -> str:
        return f"i_{self.name}"


def intent_from_actions(actions: Iterable[Action]) -> Intent:
    chosen = {Action(a) for a in actions} | {Action.IDLE}
    return Intent(tuple(int(a in chosen) for a in Action))


def committed_actions(intent: Intent) -> frozenset[Action]:
    return frozenset(a for a in Action if intent.bits[a])


def encode_channel(intent: Intent | None, sharing: bool = True) -> np.ndarray:
    """Auxiliary communication input: the intent bits, or zeros when not shared."""
    if intent is None or not sharing:
        return np.zeros(N_ACTIONS)
    return np.asarray(intent.bits, dtype=float)


I_IDLE = intent_from_actions([])
I_LANE_LEFT = intent_from_actions([Action.LANE_LEFT])
I_FASTER = intent_from_actions([Action.FASTER])
I_SLOWER = intent_from_actions([Action.SLOWER])

CATALOG: dict[str, Intent] = {
    "IDLE": I_IDLE,
    "LANE_LEFT": I_LANE_LEFT,
    "FASTER": I_FASTER,
    "SLOWER": I_SLOWER,
}


def intent_by_name(name: str) -> Intent:
    key = name.upper()
    if key.startswith("I_"):
        key = key[2:]
    try:
        return CATALOG[key]
    except KeyError:
        raise UnsupportedIntentError(
            f"unknown intent {name!r}; expected one of {sorted(CATALOG)}") from None
