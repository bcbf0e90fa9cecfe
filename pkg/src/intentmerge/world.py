"""Road geometry, vehicle/world state containers and geometric queries.

Coordinates: ``x`` runs downstream along the road, ``y`` grows to the right.
The leftmost highway lane is centred on ``y = 0``; highway lane ``k`` sits at
``k * lane_width`` and the on-ramp one lane further right.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from intentmerge import kernels

HIGHWAY = "highway"
RAMP = "ramp"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class LaneRef:
    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in (HIGHWAY, RAMP):
            raise GeometryError(f"unknown lane kind {self.kind!r}")
        if self.kind == RAMP and self.index != 0:
            raise GeometryError("the ramp lane has index 0")

    @classmethod
    def highway(cls, index: int) -> "LaneRef":
        return cls(HIGHWAY, index)

    @classmethod
    def ramp(cls) -> "LaneRef":
        return cls(RAMP, 0)

    @property
    def is_ramp(self) -> bool:
        return self.kind == RAMP

    def __str__(self) -> str:
        return RAMP if self.is_ramp else f"lane{self.index}"

    @classmethod
    def parse(cls, text: str) -> "LaneRef":
        if text == RAMP:
            return cls.ramp()
        if text.startswith("lane"):
            return cls.highway(int(text[4:]))
        raise GeometryError(f"cannot parse lane {text!r}")


RAMP_LANE = LaneRef.ramp()


@dataclass(frozen=True)
class RoadGeometry:
    """Straight highway with an on-ramp that runs alongside it in the merge zone.

    ``segment_lengths`` are the ramp's straight approach, its converging
    section, the parallel merge section and the highway run-out.
    """

    segment_lengths: tuple[float, float, float, float] = (150.0, 80.0, 80.0, 150.0)
    highway_lane_count: int = 2
    lane_width: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "segment_lengths", tuple(float(s) for s in self.segment_lengths))
        if len(self.segment_lengths) != 4 or any(s <= 0 for s in self.segment_lengths):
            raise GeometryError("need four positive segment lengths")
        if self.highway_lane_count < 2:
            raise GeometryError("at least two highway lanes are required")
        if self.lane_width <= 0:
            raise GeometryError("lane_width must be positive")

    @property
    def merge_zone(self) -> tuple[float, float]:
        a, b, c, _ = self.segment_lengths
        return (a + b, a + b + c)

    @property
    def ramp_end(self) -> float:
        return self.merge_zone[1]

    @property
    def road_end(self) -> float:
        return sum(self.segment_lengths)

    @property
    def rightmost(self) -> LaneRef:
        return LaneRef.highway(self.highway_lane_count - 1)

    def lanes_at(self, x: float) -> list[LaneRef]:
        lanes = [LaneRef.highway(k) for k in range(self.highway_lane_count)]
        if x <= self.ramp_end:
            lanes.append(RAMP_LANE)
        return lanes

    def has_lane(self, lane: LaneRef, x: float) -> bool:
        if lane.is_ramp:
            return x <= self.ramp_end
        return 0 <= lane.index < self.highway_lane_count

    def in_merge_zone(self, x: float) -> bool:
        lo, hi = self.merge_zone
        return lo <= x <= hi

    # kernels address lanes by integer: highway 0..n-1, ramp n
    def lane_code(self, lane: LaneRef) -> int:
        if lane.is_ramp:
            return self.highway_lane_count
        if not 0 <= lane.index < self.highway_lane_count:
            raise GeometryError(f"no highway lane {lane.index}")
        return lane.index

    def lane_from_code(self, code: int) -> LaneRef:
        if code == self.highway_lane_count:
            return RAMP_LANE
        if 0 <= code < self.highway_lane_count:
            return LaneRef.highway(int(code))
        raise GeometryError(f"no lane with code {code}")


def lane_center(geometry: RoadGeometry, lane: LaneRef) -> float:
    return geometry.lane_code(lane) * geometry.lane_width


def locate_lane(geometry: RoadGeometry, x: float, y: float) -> LaneRef:
    """Lane whose centre is nearest ``y`` among lanes existing at ``x``."""
    if x < 0 or x > geometry.road_end:
        raise GeometryError(f"x={x} outside road [0, {geometry.road_end}]")
    code = kernels.locate(x, y, geometry.highway_lane_count, geometry.lane_width,
                          geometry.ramp_end)
    return geometry.lane_from_code(code)


@dataclass(frozen=True)
class VehicleState:
    id: str
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    speed: float
    lane: LaneRef
    target_lane: LaneRef
    target_speed: float
    length: float = 5.0
    width: float = 2.0
    crashed: bool = False
    exited: bool = False

    @property
    def kinematics(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.vx, self.vy)


def make_vehicle(vid: str, geometry: RoadGeometry, lane: LaneRef, x: float, speed: float,
                 length: float = 5.0, width: float = 2.0) -> VehicleState:
    """Vehicle centred in ``lane``, heading straight downstream."""
    if not geometry.has_lane(lane, x):
        raise GeometryError(f"{lane} does not exist at x={x}")
    return VehicleState(id=vid, x=float(x), y=lane_center(geometry, lane), vx=float(speed),
                        vy=0.0, heading=0.0, speed=float(speed), lane=lane, target_lane=lane,
                        target_speed=float(speed), length=length, width=width)


@dataclass(frozen=True)
class WorldState:
    """Snapshot of the scene; vehicle order is [merger, sender, humans...]."""

    t: float
    vehicles: tuple[VehicleState, ...]
    geometry: RoadGeometry
    rng_state: dict[str, Any] | None = field(default=None, compare=False)

    @property
    def merger(self) -> VehicleState:
        return self.vehicles[0]

    @property
    def sender(self) -> VehicleState:
        return self.vehicles[1]

    @property
    def humans(self) -> tuple[VehicleState, ...]:
        return self.vehicles[2:]


def check_collision(a: VehicleState, b: VehicleState) -> bool:
    if a.id == b.id:
        raise ValueError("collision check needs two distinct vehicles")
    return bool(kernels.boxes_overlap(a.x, a.y, a.heading, a.length, a.width,
                                      b.x, b.y, b.heading, b.length, b.width))


def overlaps(a: VehicleState, b: VehicleState) -> bool:
    """Footprint intersection without the distinct-id precondition."""
    return bool(kernels.boxes_overlap(a.x, a.y, a.heading, a.length, a.width,
                                      b.x, b.y, b.heading, b.length, b.width))


def bumper_gap(rear: VehicleState, front: VehicleState) -> float:
    return front.x - rear.x - 0.5 * (front.length + rear.length)
