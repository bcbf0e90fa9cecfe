"""Kinematic vehicle model, low-level controllers and the meta-action layer."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

from intentmerge import kernels
from intentmerge.world import LaneRef, RoadGeometry, VehicleState, lane_center, locate_lane

DT_SIM = 1.0 / 15.0
POLICY_PERIOD = 1.0


class Action(IntEnum):
    IDLE = 0
    LANE_LEFT = 1
    LANE_RIGHT = 2
    FASTER = 3
    SLOWER = 4


@dataclass(frozen=True)
class ControlCommand:
    acceleration: float
    steering: float


@dataclass(frozen=True)
class SpeedLadder:
    speeds: tuple[float, ...] = (20.0, 25.0, 30.0)

    def __post_init__(self):
        object.__setattr__(self, "speeds", tuple(float(s) for s in self.speeds))
        if not self.speeds:
            raise ValueError("speed ladder is empty")
        if any(b <= a for a, b in zip(self.speeds, self.speeds[1:])):
            raise ValueError(f"speed ladder must be strictly increasing: {self.speeds}")

    def rung(self, speed: float) -> int:
        """Index of the rung closest to ``speed`` (lower rung on ties)."""
        return min(range(len(self.speeds)), key=lambda k: (abs(self.speeds[k] - speed), k))

    def step(self, speed: float, direction: int) -> float:
        k = min(max(self.rung(speed) + direction, 0), len(self.speeds) - 1)
        return self.speeds[k]


@dataclass(frozen=True)
class ControllerGains:
    """Low-level controller gains and actuator limits.

    ``k_speed`` [1/s] maps speed error to acceleration, ``k_lateral`` [1/s]
    lateral offset to lateral speed, ``k_heading`` [1/s] heading error to
    heading rate.
    """

    k_speed: float = 5.0 / 3.0
    k_lateral: float = 1.25
    k_heading: float = 5.0
    a_cmd_max: float = 5.0
    steering_max: float = math.pi / 4


def _adjacent(geometry: RoadGeometry, lane: LaneRef, x: float, direction: int) -> LaneRef | None:
    n = geometry.highway_lane_count
    if lane.is_ramp:
        # the ramp only touches the highway inside the merge zone
        if direction < 0 and geometry.in_merge_zone(x):
            return LaneRef.highway(n - 1)
        return None
    k = lane.index + direction
    if 0 <= k < n:
        return LaneRef.highway(k)
    return None


def apply_meta_action(v: VehicleState, a: Action, ladder: SpeedLadder,
                      geometry: RoadGeometry) -> VehicleState:
    """Update controller targets for one high-level decision; pose is untouched.

    Infeasible lane changes (no lane there, or the highway-to-ramp move) are
    silent no-ops.
    """
    a = Action(a)
    if a is Action.FASTER:
        return replace(v, target_speed=ladder.step(v.target_speed, +1))
    if a is Action.SLOWER:
        return replace(v, target_speed=ladder.step(v.target_speed, -1))
    if a in (Action.LANE_LEFT, Action.LANE_RIGHT):
        direction = -1 if a is Action.LANE_LEFT else 1
        new_lane = _adjacent(geometry, v.target_lane, v.x, direction)
        if new_lane is None:
            return v
        return replace(v, target_lane=new_lane)
    return v


def speed_control(v: VehicleState, gains: ControllerGains = ControllerGains()) -> float:
    return kernels.speed_command(v.speed, v.target_speed, gains.k_speed, gains.a_cmd_max)


def steering_control(v: VehicleState, geometry: RoadGeometry,
                     gains: ControllerGains = ControllerGains()) -> float:
    if not geometry.has_lane(v.target_lane, v.x):
        target_y = v.y
    else:
        target_y = lane_center(geometry, v.target_lane)
    return kernels.steering_command(v.y, v.heading, v.speed, v.length, target_y,
                                    gains.k_lateral, gains.k_heading, gains.steering_max)


def control(v: VehicleState, geometry: RoadGeometry,
            gains: ControllerGains = ControllerGains()) -> ControlCommand:
    return ControlCommand(speed_control(v, gains), steering_control(v, geometry, gains))


def integrate(v: VehicleState, cmd: ControlCommand, dt: float,
              geometry: RoadGeometry | None = None) -> VehicleState:
    """Kinematic bicycle update; the lane is re-derived when geometry is given."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, heading, speed = kernels.bicycle_step(v.x, v.y, v.heading, v.speed, v.length,
                                                cmd.acceleration, cmd.steering, dt)
    lane = v.lane
    if geometry is not None and 0 <= x <= geometry.road_end:
        lane = locate_lane(geometry, x, y)
    return replace(v, x=x, y=y, heading=heading, speed=speed,
                   vx=speed * math.cos(heading), vy=speed * math.sin(heading), lane=lane)
