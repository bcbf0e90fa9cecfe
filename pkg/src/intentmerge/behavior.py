"""Driver behaviour: IDM/MOBIL for human drivers, the rule-based intent sender
and the compliance checker for its action trace."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from intentmerge import kernels
from intentmerge.dynamics import Action
from intentmerge.intent import CATALOG, I_IDLE, Intent, committed_actions
from intentmerge.world import VehicleState, bumper_gap

BEFORE_TRIGGER = "before_trigger"
FIRED = "fired"

UNCOMMITTED_ACTION_USED = "uncommitted_action_used"
COMMITTED_ACTION_UNUSED = "committed_action_unused"

# Action-trigger candidates (m) per intent: early, intermediate, late.
DEFAULT_TRIGGERS: dict[str, tuple[float, ...]] = {
    "LANE_LEFT": (220.0, 250.0, 280.0),
    "FASTER": (190.0, 220.0, 250.0),
    "SLOWER": (160.0, 190.0, 220.0),
}


@dataclass(frozen=True)
class IdmParams:
    v0: float = 30.0
    T: float = 1.5
    s0: float = 10.0
    a: float = 3.0
    b: float = 5.0
    delta: float = 4.0

    def __post_init__(self):
        for name in ("v0", "T", "s0", "a", "b", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class MobilParams:
    politeness: float = 0.1
    a_threshold: float = 0.2
    b_safe: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.politeness <= 1.0:
            raise ValueError("politeness must lie in [0, 1]")
        if self.a_threshold <= 0 or self.b_safe <= 0:
            raise ValueError("a_threshold and b_safe must be positive")


def idm_acceleration(ego_speed: float, gap: float | None, leader_speed: float | None,
                     p: IdmParams = IdmParams(), a_cmd_max: float = 5.0) -> float:
    """IDM acceleration; ``gap=None`` (or inf) means free road.

    The desired gap is ``s0 + max(0, v*T + v*dv / (2*sqrt(a*b)))`` and the
    result is clamped to ``[-2b, a_cmd_max]``.
    """
    if gap is None or leader_speed is None or math.isinf(gap):
        return kernels.idm_accel(ego_speed, 1.0, 0.0, False,
                                 p.v0, p.T, p.s0, p.a, p.b, p.delta, a_cmd_max)
    if gap <= 0:
        raise ValueError(f"non-positive gap {gap} to a leader; collision missed upstream")
    return kernels.idm_accel(ego_speed, gap, leader_speed, True,
                             p.v0, p.T, p.s0, p.a, p.b, p.delta, a_cmd_max)


# --- MOBIL -------------------------------------------------------------------

@dataclass(frozen=True)
class MobilOutcome:
    change: bool
    safe: bool
    incentive: float
    new_follower_accel: float


def mobil_criterion(ego_now: float, ego_after: float,
                    new_follower_now: float, new_follower_after: float,
                    old_follower_now: float, old_follower_after: float,
                    mobil: MobilParams = MobilParams()) -> MobilOutcome:
    """Safety and incentive test from the six accelerations involved."""
    safe = new_follower_after >= -mobil.b_safe
    incentive = (ego_after - ego_now
                 + mobil.politeness * ((new_follower_after - new_follower_now)
                                       + (old_follower_after - old_follower_now)))
    return MobilOutcome(change=bool(safe and incentive > mobil.a_threshold), safe=bool(safe),
                        incentive=incentive, new_follower_accel=new_follower_after)


def _split(ego: VehicleState, others: Sequence[VehicleState]):
    ahead = [v for v in others if v.id != ego.id and v.x > ego.x]
    behind = [v for v in others if v.id != ego.id and v.x <= ego.x]
    leader = min(ahead, key=lambda v: v.x) if ahead else None
    follower = max(behind, key=lambda v: v.x) if behind else None
    return leader, follower


def _accel(follower: VehicleState, leader: VehicleState | None, idm: IdmParams,
           a_cmd_max: float) -> float:
    if leader is None:
        return idm_acceleration(follower.speed, None, None, idm, a_cmd_max)
    gap = bumper_gap(follower, leader)
    if gap <= 0:
        return -2.0 * idm.b
    return idm_acceleration(follower.speed, gap, leader.speed, idm, a_cmd_max)


def mobil_decide(ego: VehicleState, current_lane: Sequence[VehicleState],
                 target_lane: Sequence[VehicleState], idm: IdmParams = IdmParams(),
                 mobil: MobilParams = MobilParams(), a_cmd_max: float = 5.0) -> MobilOutcome:
    """Should ``ego`` move into the lane populated by ``target_lane``?

    Every acceleration is an IDM evaluation. A longitudinal overlap with a
    vehicle in the target lane is treated as a failed safety check.
    """
    leader, old_follower = _split(ego, current_lane)
    new_leader, new_follower = _split(ego, target_lane)

    if any(abs(v.x - ego.x) < 0.5 * (v.length + ego.length) for v in target_lane
           if v.id != ego.id):
        return MobilOutcome(change=False, safe=False, incentive=-math.inf,
                            new_follower_accel=-math.inf)

    ego_now = _accel(ego, leader, idm, a_cmd_max)
    ego_after = _accel(ego, new_leader, idm, a_cmd_max)
    if new_follower is not None:
        nf_now = _accel(new_follower, new_leader, idm, a_cmd_max)
        nf_after = _accel(new_follower, ego, idm, a_cmd_max)
    else:
        nf_now = nf_after = 0.0
    if old_follower is not None:
        of_now = _accel(old_follower, ego, idm, a_cmd_max)
        of_after = _accel(old_follower, leader, idm, a_cmd_max)
    else:
        of_now = of_after = 0.0
    return mobil_criterion(ego_now, ego_after, nf_now, nf_after, of_now, of_after, mobil)


# --- intent sender -------------------------------------------------------------

@dataclass(frozen=True)
class SenderAssignment:
    """The sender's intent and where it fires its single committed action."""

    intent: Intent
    trigger_x: float | None = None
    phase: str = BEFORE_TRIGGER

    def __post_init__(self):
        if (self.trigger_x is None) != (self.intent == I_IDLE):
            raise ValueError("trigger_x must be set exactly for non-IDLE intents")
        if self.phase not in (BEFORE_TRIGGER, FIRED):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.phase == FIRED and self.intent == I_IDLE:
            raise ValueError("the IDLE intent never fires")

    def validate(self, triggers: Mapping[str, Sequence[float]] = DEFAULT_TRIGGERS,
                 merge_zone_end: float = 310.0) -> None:
        if self.trigger_x is None:
            return
        candidates = triggers[self.intent.name]
        if self.trigger_x not in candidates:
            raise ValueError(f"trigger {self.trigger_x} not in {candidates} for {self.intent}")
        if not self.trigger_x < merge_zone_end:
            raise ValueError("trigger must precede the end of the merge zone")


def sender_policy_step(assignment: SenderAssignment,
                       sender_x: float) -> tuple[Action, SenderAssignment]:
    """IDLE until the trigger is reached, the committed action once, IDLE after."""
    action = assignment.intent.committed_action
    if action is None or assignment.phase == FIRED:
        return Action.IDLE, assignment
    if sender_x >= assignment.trigger_x:
        return action, replace(assignment, phase=FIRED)
    return Action.IDLE, assignment


def sample_assignment(rng: np.random.Generator,
                      triggers: Mapping[str, Sequence[float]] = DEFAULT_TRIGGERS,
                      ) -> SenderAssignment:
    """Uniform intent from the catalog, then a uniform trigger for it."""
    names = list(CATALOG)
    intent = CATALOG[names[int(rng.integers(len(names)))]]
    if intent == I_IDLE:
        return SenderAssignment(intent)
    options = triggers[intent.name]
    return SenderAssignment(intent, float(options[int(rng.integers(len(options)))]))


# --- compliance ------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    step: int | None
    action: Action
    kind: str


@dataclass(frozen=True)
class ComplianceReport:
    compliant: bool
    violations: tuple[Violation, ...] = field(default_factory=tuple)


def check_compliance(action_trace: Sequence[Action], intent: Intent) -> ComplianceReport:
    """Every action must be committed, and every committed action must appear."""
    if len(action_trace) == 0:
        raise ValueError("compliance needs the whole episode's action trace")
    allowed = committed_actions(intent)
    trace = [Action(a) for a in action_trace]
    violations = [Violation(k, a, UNCOMMITTED_ACTION_USED)
                  for k, a in enumerate(trace) if a not in allowed]
    used = set(trace)
    violations += [Violation(None, a, COMMITTED_ACTION_UNUSED)
                   for a in sorted(allowed) if a not in used]
    return ComplianceReport(compliant=not violations, violations=tuple(violations))
