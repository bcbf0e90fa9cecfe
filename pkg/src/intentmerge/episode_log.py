"""Episode logs as newline-delimited JSON, and offline re-verification.

Line 1 is a header::

    {"type": "header", "version": 1, "intent": "FASTER", "trigger": 220.0,
     "sharing": true, "env": {...}}

followed by one ``state`` record for the initial scene (``step`` 0, no
actions), one ``step`` record per policy step::

    {"type": "step", "step": k, "t": ..., "merger_action": "IDLE",
     "sender_action": "IDLE", "vehicles": [...], "reward": {...},
     "merge": {...} | null, "crashed": false, "road_end": false,
     "truncated": false}

and one ``background`` record per step the sender kept driving after the
merger's episode ended (``{"type": "background", "sender_action": ...}``).
Vehicles carry every :class:`VehicleState` field with lanes as ``lane0``,
``lane1``, ``ramp``. Floats are written with round-trip precision.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from intentmerge import config as config_mod
from intentmerge.behavior import ComplianceReport, check_compliance
from intentmerge.dynamics import Action
from intentmerge.env import EnvConfig, MergeEnv, MergeEvent, RewardBreakdown, detect_merge, step_reward
from intentmerge.intent import intent_by_name
from intentmerge.world import LaneRef, VehicleState, WorldState

LOG_VERSION = 1
REWARD_FIELDS = ("r_s", "r_l", "r_c", "r_m", "r_q", "r_f", "r_r", "r_e", "total")
TOLERANCE = 1e-9


class LogParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _vehicle(v: VehicleState) -> dict:
    d = dataclasses.asdict(v)
    d["lane"] = str(v.lane)
    d["target_lane"] = str(v.target_lane)
    return d


def _reward(r: RewardBreakdown) -> dict:
    return {name: getattr(r, name) for name in REWARD_FIELDS}


def _merge(e: MergeEvent | None) -> dict | None:
    return None if e is None else dataclasses.asdict(e)


def episode_records(env: MergeEnv) -> list[dict]:
    """Log records for a finished episode run with ``record=True``."""
    if not env.record or not env.history:
        raise ValueError("the environment did not record its history")
    a = env.assignment
    recs: list[dict] = [{
        "type": "header", "version": LOG_VERSION, "intent": a.intent.name,
        "trigger": a.trigger_x, "sharing": env.config.sharing,
        "env": config_mod.env_to_dict(env.config),
    }]
    recs.append({"type": "state", "step": 0, "t": env.history[0].t,
                 "vehicles": [_vehicle(v) for v in env.history[0].vehicles]})
    n = len(env.rewards)
    merged_at = None if env.merge_event is None else round(env.merge_event.t_m / env.config.policy_period)
    for k in range(1, n + 1):
        w = env.history[k]
        last = k == n
        recs.append({
            "type": "step", "step": k, "t": w.t,
            "merger_action": Action(env.merger_trace[k - 1]).name,
            "sender_action": Action(env.sender_trace[k - 1]).name,
            "vehicles": [_vehicle(v) for v in w.vehicles],
            "reward": _reward(env.rewards[k - 1]),
            "merge": _merge(env.merge_event) if merged_at == k else None,
            "crashed": bool(last and w.merger.crashed),
            "road_end": bool(last and w.merger.exited),
            "truncated": bool(last and not (w.merger.crashed or w.merger.exited)),
        })
    for act in env.sender_trace[n:]:
        recs.append({"type": "background", "sender_action": Action(act).name})
    return recs


def write_log(path: str | Path, records: Sequence[dict]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


# --- reading and verification -------------------------------------------------

@dataclass
class ParsedLog:
    env: EnvConfig
    intent_name: str
    trigger: float | None
    worlds: list[WorldState]
    steps: list[dict]
    sender_trace: list[Action]
    line_of_step: dict[int, int] = field(default_factory=dict)


def _parse_vehicle(d: Any, line: int) -> VehicleState:
    try:
        d = dict(d)
        d["lane"] = LaneRef.parse(d["lane"])
        d["target_lane"] = LaneRef.parse(d["target_lane"])
        return VehicleState(**d)
    except (TypeError, KeyError, ValueError) as e:
        raise LogParseError(line, f"bad vehicle record ({e})") from e


def _action(name: Any, line: int) -> Action:
    try:
        return Action[name]
    except (KeyError, TypeError):
        raise LogParseError(line, f"unknown action {name!r}") from None


def read_log(path: str | Path) -> ParsedLog:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise LogParseError(1, "empty log")
    recs = []
    for i, text in enumerate(lines, start=1):
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as e:
            raise LogParseError(i, f"invalid JSON ({e.msg})") from None
        if not isinstance(rec, dict) or "type" not in rec:
            raise LogParseError(i, "record without a type")
        recs.append((i, rec))

    line, head = recs[0]
    if head["type"] != "header":
        raise LogParseError(line, "first record must be the header")
    if head.get("version") != LOG_VERSION:
        raise LogParseError(line, f"unsupported log version {head.get('version')!r}")
    try:
        env = config_mod.env_from_dict(head["env"])
        intent_by_name(head["intent"])
    except (KeyError, ValueError) as e:
        raise LogParseError(line, f"bad header ({e})") from e

    worlds: list[WorldState] = []
    steps: list[dict] = []
    trace: list[Action] = []
    where: dict[int, int] = {}
    for line, rec in recs[1:]:
        kind = rec["type"]
        try:
            if kind in ("state", "step"):
                if rec["step"] != len(worlds):
                    raise LogParseError(line, f"expected step {len(worlds)}, got {rec['step']}")
                vehicles = tuple(_parse_vehicle(v, line) for v in rec["vehicles"])
                worlds.append(WorldState(float(rec["t"]), vehicles, env.geometry))
                if kind == "step":
                    if not isinstance(rec.get("reward"), dict):
                        raise LogParseError(line, "step without reward")
                    trace.append(_action(rec["sender_action"], line))
                    _action(rec["merger_action"], line)
                    steps.append(rec)
                    where[rec["step"]] = line
                elif worlds[1:]:
                    raise LogParseError(line, "state record after steps")
            elif kind == "background":
                trace.append(_action(rec["sender_action"], line))
            else:
                raise LogParseError(line, f"unknown record type {kind!r}")
        except KeyError as e:
            raise LogParseError(line, f"missing field {e}") from None
    if not worlds:
        raise LogParseError(len(lines), "log has no initial state")
    return ParsedLog(env, head["intent"], head.get("trigger"), worlds, steps, trace, where)


@dataclass(frozen=True)
class Mismatch:
    step: int
    line: int
    field: str
    logged: float
    recomputed: float


@dataclass(frozen=True)
class VerifyReport:
    compliance: ComplianceReport
    mismatches: tuple[Mismatch, ...]

    @property
    def ok(self) -> bool:
        return self.compliance.compliant and not self.mismatches


def verify(log: ParsedLog, tolerance: float = TOLERANCE) -> VerifyReport:
    """Re-run compliance on the sender trace and recompute every reward from logged states."""
    intent = intent_by_name(log.intent_name)
    if log.sender_trace:
        compliance = check_compliance(log.sender_trace, intent)
    else:
        compliance = ComplianceReport(False, ())
    mismatches = []
    merged = False
    for rec in log.steps:
        k = rec["step"]
        w = log.worlds[k]
        event = detect_merge(w, merged)
        merged = merged or event is not None
        r = step_reward(w.merger, event, log.env.reward, log.env.geometry)
        for name in REWARD_FIELDS:
            logged = rec["reward"].get(name)
            mine = getattr(r, name)
            if not isinstance(logged, (int, float)) or abs(logged - mine) > tolerance:
                mismatches.append(Mismatch(k, log.line_of_step[k], name,
                                           float("nan") if logged is None else logged, mine))
    return VerifyReport(compliance, tuple(mismatches))
