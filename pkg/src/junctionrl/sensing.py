"""Emulated vision sensors: lane coverage areas and pedestrian crossing sensors."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .config import CROSSINGS, LANES


@dataclass(slots=True)
class ThroughputCounter:
    """Entities that cleared the junction since the last decision point."""

    rho_v: int = 0
    rho_p: int = 0


def take_throughput(counter: ThroughputCounter) -> tuple[int, int]:
    """Return ``(rho_v, rho_p)`` accumulated since the previous call and reset."""
    out = (counter.rho_v, counter.rho_p)
    counter.rho_v = 0
    counter.rho_p = 0
    return out


@dataclass(frozen=True)
class LaneSensorSnapshot:
    queue: int
    count: int
    occupancy: float
    sum_wait: float
    speeds: tuple
    flow: int


@dataclass(frozen=True)
class PedSensorSnapshot:
    queue: int
    sum_wait: float
    button: bool


@dataclass(frozen=True)
class SensorFrame:
    time: float
    lanes: tuple
    peds: tuple

    @property
    def total_vehicle_queue(self) -> int:
        return sum(s.queue for s in self.lanes)

    @property
    def total_ped_queue(self) -> int:
        return sum(s.queue for s in self.peds)

    @property
    def total_vehicle_wait(self) -> float:
        return sum(s.sum_wait for s in self.lanes)

    @property
    def total_ped_wait(self) -> float:
        return sum(s.sum_wait for s in self.peds)

    def to_dict(self):
        return {
            "time": self.time,
            "lanes": {lane: asdict(s) | {"speeds": list(s.speeds)} for lane, s in zip(LANES, self.lanes)},
            "peds": {c: asdict(s) for c, s in zip(CROSSINGS, self.peds)},
        }


@dataclass(frozen=True)
class SensorLayout:
    coverage_length: float
    lane_length: float
    spacing: float
    wait_speed_threshold: float
    lanes: tuple = field(default=LANES)
    crossings: tuple = field(default=CROSSINGS)

    @property
    def capacity(self) -> float:
        return self.coverage_length / self.spacing

    def covers(self, position: float) -> bool:
        return self.lane_length - self.coverage_length <= position <= self.lane_length


def layout_from_config(cfg) -> SensorLayout:
    return SensorLayout(
        coverage_length=cfg.sensors.coverage_length,
        lane_length=cfg.sim.lane_length,
        spacing=cfg.sim.spacing,
        wait_speed_threshold=cfg.sim.wait_speed_threshold,
    )


def vehicles_in_coverage(world, layout: SensorLayout):
    """Vehicles inside any lane sensor area (front between coverage start and stop line)."""
    lo = layout.lane_length - layout.coverage_length
    hi = layout.lane_length
    for lane in layout.lanes:
        for veh in world.lanes[lane]:
            if lo <= veh.position <= hi:
                yield veh


def collect_snapshot(world, layout: SensorLayout) -> SensorFrame:
    """Read every sensor.  Only vehicles inside coverage contribute."""
    lo = layout.lane_length - layout.coverage_length
    hi = layout.lane_length
    thr = layout.wait_speed_threshold
    cap = layout.capacity
    lanes = []
    for lane in layout.lanes:
        queue = count = 0
        wait = 0.0
        speeds = []
        for veh in world.lanes[lane]:
            if lo <= veh.position <= hi:
                count += 1
                wait += veh.wait
                speeds.append(veh.speed)
                if veh.speed < thr:
                    queue += 1
        lanes.append(LaneSensorSnapshot(queue, count, min(count / cap, 1.0), wait, tuple(speeds),
                                        world.last_flow[lane]))
    peds = []
    for crossing in layout.crossings:
        waiting = world.waiting[crossing]
        peds.append(PedSensorSnapshot(len(waiting), sum(p.wait for p in waiting), bool(waiting)))
    return SensorFrame(world.clock, tuple(lanes), tuple(peds))
