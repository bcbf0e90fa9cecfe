"""The highway-merge environment: episode lifecycle, observations, rewards.

Vehicle 0 is the learning merger on the ramp (receiver), vehicle 1 the
rule-based intent sender in the rightmost highway lane, followed by the
human drivers. One :meth:`MergeEnv.step` is one policy period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from intentmerge import kernels
from intentmerge.behavior import (
    DEFAULT_TRIGGERS,
    FIRED,
    ComplianceReport,
    IdmParams,
    MobilParams,
    SenderAssignment,
    check_compliance,
    mobil_decide,
    sample_assignment,
    sender_policy_step,
)
from intentmerge.dynamics import (
    DT_SIM,
    POLICY_PERIOD,
    Action,
    ControllerGains,
    SpeedLadder,
    apply_meta_action,
)
from intentmerge.intent import N_ACTIONS, encode_channel
from intentmerge.world import (
    LaneRef,
    RoadGeometry,
    VehicleState,
    WorldState,
    bumper_gap,
    lane_center,
    make_vehicle,
    overlaps,
)

OBS_POSITION_SCALE = 100.0
OBS_VELOCITY_SCALE = 30.0
N_HUMANS = 4
OBS_SIZE = (2 + N_HUMANS) * 4 + N_ACTIONS
MERGE_GAP_FLOOR = 0.01


class ConfigError(ValueError):
    pass


class EpisodeDoneError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spawn:
    lane: LaneRef
    x: float
    speed: float


@dataclass(frozen=True)
class RewardConfig:
    beta_speed: float = 0.275
    beta_lane: float = 0.1
    beta_collision: float = -5.0
    beta_quick: float = 2.0
    beta_front: float = 0.5
    beta_rear: float = 0.5
    beta_efficiency: float = -1.0
    v_min: float = 20.0
    v_max: float = 30.0
    v_target: float = 30.0
    headway_target: float = 1.2


DEFAULT_HUMANS = (
    Spawn(LaneRef.highway(1), 10.0, 28.0),
    Spawn(LaneRef.highway(1), 110.0, 28.0),
    Spawn(LaneRef.highway(0), 100.0, 29.0),
    Spawn(LaneRef.highway(0), 140.0, 27.0),
)


@dataclass(frozen=True)
class EnvConfig:
    geometry: RoadGeometry = RoadGeometry()
    ladder: SpeedLadder = SpeedLadder()
    sender_ladder: SpeedLadder = SpeedLadder((20.0, 25.0, 30.0, 35.0))
    horizon: int = 20
    dt_sim: float = DT_SIM
    policy_period: float = POLICY_PERIOD
    sharing: bool = True
    merger_spawn: Spawn = Spawn(LaneRef.ramp(), 60.0, 20.0)
    sender_spawn: Spawn = Spawn(LaneRef.highway(1), 45.0, 30.0)
    human_spawns: tuple[Spawn, ...] = DEFAULT_HUMANS
    spawn_jitter_x: float = 3.0
    spawn_jitter_speed: float = 1.0
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0
    reward: RewardConfig = RewardConfig()
    gains: ControllerGains = ControllerGains()
    idm: IdmParams = IdmParams()
    mobil: MobilParams = MobilParams()
    triggers: dict[str, tuple[float, ...]] = field(
        default_factory=lambda: dict(DEFAULT_TRIGGERS))
    lane_margin: float = 1.0
    relative_observation: bool = True
    seed: int = 0

    @property
    def ticks_per_step(self) -> int:
        n = round(self.policy_period / self.dt_sim)
        if n < 1 or not math.isclose(n * self.dt_sim, self.policy_period):
            raise ConfigError("policy_period must be a whole number of simulation ticks")
        return n

    def validate(self) -> None:
        self.ticks_per_step
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if len(self.human_spawns) != N_HUMANS:
            raise ConfigError(f"exactly {N_HUMANS} human vehicles are supported")
        if not self.merger_spawn.lane.is_ramp:
            raise ConfigError("the merging vehicle must start on the ramp")
        if self.sender_spawn.lane != self.geometry.rightmost:
            raise ConfigError("the sender must start in the rightmost highway lane")
        lo, hi = self.geometry.merge_zone
        zone_time = self.horizon * self.policy_period
        if (hi - self.merger_spawn.x) / self.reward.v_min > zone_time:
            raise ConfigError("horizon too short to traverse the merge zone at v_min")
        for name, options in self.triggers.items():
            if any(not x < hi for x in options):
                raise ConfigError(f"{name} triggers must precede the merge-zone end")


@dataclass(frozen=True)
class MergeEvent:
    t_m: float
    v_m1: float
    front_gap: float | None = None
    front_id: str | None = None
    rear_gap: float | None = None
    rear_speed: float | None = None
    rear_id: str | None = None


@dataclass(frozen=True)
class RewardBreakdown:
    r_s: float = 0.0
    r_l: float = 0.0
    r_c: float = 0.0
    r_m: float = 0.0
    r_q: float = 0.0
    r_f: float = 0.0
    r_r: float = 0.0
    r_e: float = 0.0

    @property
    def total(self) -> float:
        return self.r_s + self.r_l + self.r_c + self.r_m


# --- reward terms ----------------------------------------------------------

def speed_reward(v: float, cfg: RewardConfig = RewardConfig()) -> float:
    v = min(max(v, cfg.v_min), cfg.v_max)
    return cfg.beta_speed * (v - cfg.v_min) / (cfg.v_max - cfg.v_min)


def lane_reward(lane: LaneRef, cfg: RewardConfig = RewardConfig(),
                geometry: RoadGeometry = RoadGeometry()) -> float:
    return cfg.beta_lane if lane == geometry.rightmost else 0.0


def collision_reward(crashed: bool, cfg: RewardConfig = RewardConfig()) -> float:
    return cfg.beta_collision if crashed else 0.0


def _headway_term(beta: float, gap: float | None, speed: float | None,
                  headway: float) -> float:
    if gap is None:
        return 0.0
    if gap <= 0:
        raise ValueError(f"non-positive merge gap {gap}; a collision should have fired")
    if speed is None or speed <= 0:
        return 0.0
    return beta * min(math.log(gap / (headway * speed)), 0.0)


def merge_reward(e: MergeEvent, cfg: RewardConfig = RewardConfig()
                 ) -> tuple[float, float, float, float]:
    """Quick-merge, front-gap, rear-gap and efficiency terms."""
    if e.t_m <= 0:
        raise ValueError("merge time must be positive")
    r_q = cfg.beta_quick / e.t_m
    r_f = _headway_term(cfg.beta_front, e.front_gap, e.v_m1, cfg.headway_target)
    r_r = _headway_term(cfg.beta_rear, e.rear_gap, e.rear_speed, cfg.headway_target)
    r_e = cfg.beta_efficiency * abs((cfg.v_target - e.v_m1) / cfg.v_target)
    return r_q, r_f, r_r, r_e


def step_reward(merger: VehicleState, event: MergeEvent | None, cfg: RewardConfig,
                geometry: RoadGeometry) -> RewardBreakdown:
    r_s = speed_reward(merger.speed, cfg)
    r_l = lane_reward(merger.lane, cfg, geometry)
    r_c = collision_reward(merger.crashed, cfg)
    if event is None:
        return RewardBreakdown(r_s=r_s, r_l=r_l, r_c=r_c)
    r_q, r_f, r_r, r_e = merge_reward(event, cfg)
    return RewardBreakdown(r_s=r_s, r_l=r_l, r_c=r_c, r_m=r_q + r_f + r_r + r_e,
                           r_q=r_q, r_f=r_f, r_r=r_r, r_e=r_e)


# --- queries on a world snapshot ------------------------------------------

def detect_merge(world: WorldState, already_merged: bool) -> MergeEvent | None:
    """Merge event if the merger has just settled into a highway lane."""
    if already_merged:
        return None
    m = world.merger
    geometry = world.geometry
    if m.crashed or m.lane.is_ramp:
        return None
    if abs(m.y - lane_center(geometry, m.lane)) >= geometry.lane_width / 4:
        return None
    same = [v for v in world.vehicles[1:] if v.lane == m.lane and not v.exited]
    ahead = [v for v in same if v.x > m.x]
    behind = [v for v in same if v.x <= m.x]
    front = min(ahead, key=lambda v: v.x) if ahead else None
    rear = max(behind, key=lambda v: v.x) if behind else None
    return MergeEvent(
        t_m=world.t,
        v_m1=m.speed,
        front_gap=max(bumper_gap(m, front), MERGE_GAP_FLOOR) if front else None,
        front_id=front.id if front else None,
        rear_gap=max(bumper_gap(rear, m), MERGE_GAP_FLOOR) if rear else None,
        rear_speed=rear.speed if rear else None,
        rear_id=rear.id if rear else None,
    )


def build_observation(world: WorldState, channel: Sequence[float],
                      relative: bool = True) -> np.ndarray:
    """Normalised kinematics of every vehicle, then the intent channel.

    The merger's row is always absolute. With ``relative`` the other rows hold
    differences to the merger, so gaps reach the network directly.
    """
    obs = np.zeros(OBS_SIZE)
    m = world.merger
    for k, v in enumerate(world.vehicles[:2 + N_HUMANS]):
        x, y, vx, vy = v.x, v.y, v.vx, v.vy
        if relative and k > 0:
            x, y, vx, vy = x - m.x, y - m.y, vx - m.vx, vy - m.vy
        obs[4 * k:4 * k + 4] = (x / OBS_POSITION_SCALE, y / OBS_POSITION_SCALE,
                                vx / OBS_VELOCITY_SCALE, vy / OBS_VELOCITY_SCALE)
    obs[-N_ACTIONS:] = channel
    return obs


# --- environment -------------------------------------------------------------

@dataclass
class StepResult:
    obs: np.ndarray
    reward: RewardBreakdown
    crashed: bool
    road_end: bool
    truncated: bool
    info: dict[str, Any]

    @property
    def terminal(self) -> bool:
        return self.crashed or self.road_end

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated


class MergeEnv:
    """Single-episode-at-a-time merge scenario.

    ``record=True`` keeps every step-boundary snapshot in :attr:`history` for
    logging and rendering.
    """

    def __init__(self, config: EnvConfig = EnvConfig(), record: bool = False):
        config.validate()
        self.config = config
        self.record = record
        self.rng = np.random.default_rng(config.seed)
        self.world: WorldState | None = None
        self.assignment: SenderAssignment | None = None
        self.done = True

    # -- lifecycle ----------------------------------------------------------
    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def reset(self, assignment: SenderAssignment | None = None) -> np.ndarray:
        cfg = self.config
        g = cfg.geometry
        if assignment is None:
            assignment = sample_assignment(self.rng, cfg.triggers)
        else:
            assignment.validate(cfg.triggers, g.ramp_end)
        L, W = cfg.vehicle_length, cfg.vehicle_width
        vehicles = [
            make_vehicle("av1", g, cfg.merger_spawn.lane, cfg.merger_spawn.x,
                         cfg.merger_spawn.speed, L, W),
            make_vehicle("av2", g, cfg.sender_spawn.lane, cfg.sender_spawn.x,
                         cfg.sender_spawn.speed, L, W),
        ]
        for k, s in enumerate(cfg.human_spawns):
            dx = self.rng.uniform(-cfg.spawn_jitter_x, cfg.spawn_jitter_x)
            dv = self.rng.uniform(-cfg.spawn_jitter_speed, cfg.spawn_jitter_speed)
            vehicles.append(make_vehicle(f"h{k}", g, s.lane, s.x + dx, s.speed + dv, L, W))
        for i in range(len(vehicles)):
            for j in range(i + 1, len(vehicles)):
                if overlaps(vehicles[i], vehicles[j]):
                    raise ConfigError(f"spawns of {vehicles[i].id} and {vehicles[j].id} overlap")
        self.world = WorldState(0.0, tuple(vehicles), g, self.rng.bit_generator.state)
        self.assignment = assignment
        self.steps = 0
        self.merged = False
        self.merge_event: MergeEvent | None = None
        self.sender_trace: list[Action] = []
        self.sender_positions: list[float] = []
        self.merger_trace: list[Action] = []
        self.rewards: list[RewardBreakdown] = []
        self.history: list[WorldState] = [self.world] if self.record else []
        self.background_steps = 0
        self.done = False
        return self.observe()

    @property
    def channel(self) -> np.ndarray:
        return encode_channel(self.assignment.intent, self.config.sharing)

    def observe(self) -> np.ndarray:
        return build_observation(self.world, self.channel, self.config.relative_observation)

    def step(self, action: int | Action) -> StepResult:
        if self.done:
            raise EpisodeDoneError("episode finished; call reset()")
        cfg = self.config
        g = cfg.geometry
        action = Action(action)
        vehicles = list(self.world.vehicles)
        sender_action = self._sender_decision(vehicles)
        vehicles[0] = apply_meta_action(vehicles[0], action, cfg.ladder, g)
        self.merger_trace.append(action)
        vehicles = self._human_lane_decisions(vehicles)
        vehicles = self._simulate(vehicles, cfg.ticks_per_step)
        self.steps += 1
        self.world = WorldState(self.steps * cfg.policy_period, tuple(vehicles), g,
                                self.world.rng_state)
        if self.record:
            self.history.append(self.world)

        merger = self.world.merger
        event = detect_merge(self.world, self.merged)
        if event is not None:
            self.merged = True
            self.merge_event = event
        reward = step_reward(merger, event, cfg.reward, g)
        self.rewards.append(reward)

        crashed = merger.crashed
        road_end = merger.exited
        truncated = not (crashed or road_end) and self.steps >= cfg.horizon
        self.done = crashed or road_end or truncated
        if self.done:
            self._complete_sender_commitment()
        info = {"sender_action": sender_action, "merge": event, "t": self.world.t,
                "assignment": self.assignment}
        return StepResult(self.observe(), reward, crashed, road_end, truncated, info)

    # -- internals ----------------------------------------------------------
    def _sender_decision(self, vehicles: list[VehicleState]) -> Action:
        sender = vehicles[1]
        a, self.assignment = sender_policy_step(self.assignment, sender.x)
        self.sender_trace.append(a)
        self.sender_positions.append(sender.x)
        vehicles[1] = apply_meta_action(sender, a, self.config.sender_ladder,
                                        self.config.geometry)
        return a

    def _human_lane_decisions(self, vehicles: list[VehicleState]) -> list[VehicleState]:
        cfg = self.config
        g = cfg.geometry
        active = [v for v in vehicles if not v.exited]

        def members(lane: LaneRef, ego: VehicleState) -> list[VehicleState]:
            return [v for v in active if v.id != ego.id
                    and (v.lane == lane or v.target_lane == lane)]

        out = list(vehicles)
        for k in range(2, len(vehicles)):
            h = vehicles[k]
            if h.crashed or h.exited or h.lane != h.target_lane or h.lane.is_ramp:
                continue
            if abs(h.y - lane_center(g, h.lane)) > 0.5:
                continue
            best = None
            current = members(h.lane, h)
            for d in (-1, 1):
                idx = h.lane.index + d
                if not 0 <= idx < g.highway_lane_count:
                    continue
                cand = LaneRef.highway(idx)
                outcome = mobil_decide(h, current, members(cand, h), cfg.idm, cfg.mobil,
                                       cfg.gains.a_cmd_max)
                if outcome.change and (best is None or outcome.incentive > best[1]):
                    best = (cand, outcome.incentive)
            if best is not None:
                out[k] = replace(h, target_lane=best[0])
        return out

    def _simulate(self, vehicles: list[VehicleState], n_ticks: int,
                  immune: bool = True) -> list[VehicleState]:
        cfg = self.config
        g = cfg.geometry
        n = len(vehicles)
        x = np.array([v.x for v in vehicles])
        y = np.array([v.y for v in vehicles])
        heading = np.array([v.heading for v in vehicles])
        speed = np.array([v.speed for v in vehicles])
        length = np.array([v.length for v in vehicles])
        width = np.array([v.width for v in vehicles])
        target_speed = np.array([v.target_speed for v in vehicles])
        lane = np.array([g.lane_code(v.lane) for v in vehicles], dtype=np.int64)
        target_lane = np.array([g.lane_code(v.target_lane) for v in vehicles], dtype=np.int64)
        is_human = np.zeros(n, dtype=np.uint8)
        is_human[2:] = 1
        crashed = np.array([v.crashed for v in vehicles], dtype=np.uint8)
        exited = np.array([v.exited for v in vehicles], dtype=np.uint8)
        # the sender's motion is independent of the merger: contact crashes the merger only
        immune_to_ego = np.zeros(n, dtype=np.uint8)
        if immune:
            immune_to_ego[1] = 1
        gains, idm = cfg.gains, cfg.idm
        kernels.simulate_ticks(
            x, y, heading, speed, length, width, target_speed, lane, target_lane,
            is_human, crashed, exited, immune_to_ego,
            n_ticks, cfg.dt_sim, g.highway_lane_count, g.lane_width, g.ramp_end,
            g.road_end, cfg.lane_margin,
            gains.k_speed, gains.k_lateral, gains.k_heading, gains.a_cmd_max,
            gains.steering_max, idm.v0, idm.T, idm.s0, idm.a, idm.b, idm.delta)
        out = []
        for k, v in enumerate(vehicles):
            h = float(heading[k])
            s = float(speed[k])
            out.append(replace(
                v, x=float(x[k]), y=float(y[k]), heading=h, speed=s,
                vx=s * math.cos(h), vy=s * math.sin(h), lane=g.lane_from_code(int(lane[k])),
                crashed=bool(crashed[k]), exited=bool(exited[k])))
        return out

    def _complete_sender_commitment(self) -> None:
        """Keep the background traffic running until the sender has honoured its intent.

        The receiver's episode may end (crash) before the sender reaches its
        trigger; the commitment still covers the sender's own drive. The
        merger and any wrecks are taken off the road for this continuation.
        """
        a = self.assignment
        if a.intent.committed_action is None or a.phase == FIRED:
            return
        cfg = self.config
        vehicles = [replace(v, exited=True) if (k == 0 or v.crashed) else v
                    for k, v in enumerate(self.world.vehicles)]
        steps = self.steps
        while self.assignment.phase != FIRED and steps < cfg.horizon:
            if vehicles[1].exited or vehicles[1].crashed:
                break
            self._sender_decision(vehicles)
            vehicles = self._human_lane_decisions(vehicles)
            vehicles = self._simulate(vehicles, cfg.ticks_per_step, immune=False)
            steps += 1
            self.background_steps += 1

    def compliance(self) -> ComplianceReport:
        return check_compliance(self.sender_trace, self.assignment.intent)

    @property
    def episode_return(self) -> float:
        return float(sum(r.total for r in self.rewards))
