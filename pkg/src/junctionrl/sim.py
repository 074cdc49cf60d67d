"""Discrete-time microscopic simulation of the four-arm junction.

Vehicles follow a deterministic safe-speed rule: each step the speed is the
smallest of the accelerated speed, the speed limit and the largest speed from
which the vehicle can still stop behind its leader (or the stop line on red)
assuming the leader brakes at ``decel``.  Lanes are updated front to back and
the follower's displacement is additionally clamped to the gap left by the
already-updated leader, so vehicles never overlap.

Positions are metres from the lane entry to the vehicle front.  The stop line
sits at ``lane_length``; a vehicle exits after travelling a further
``junction_length`` through the junction box.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import ARMS, CROSSINGS, LANE_ARM, LANES, ConfigError, DemandSchedule, JunctionConfig, SimConfig
from .sensing import ThroughputCounter

_EPS = 1e-9


@dataclass(slots=True)
class Vehicle:
    id: int
    lane: str
    position: float
    speed: float
    entry_time: float
    destination: str
    wait: float = 0.0
    delay: float = 0.0
    free_steps: int = 0


@dataclass(slots=True)
class Pedestrian:
    id: int
    crossing: str
    entry_time: float
    wait: float = 0.0
    button_pressed: bool = True
    state: str = "waiting"
    start_time: float = 0.0


@dataclass
class World:
    """Complete simulation state.  Mutated in place by the step functions."""

    cfg: SimConfig
    junction: JunctionConfig
    rng: np.random.Generator
    step_count: int = 0
    lanes: dict = field(default_factory=lambda: {lane: [] for lane in LANES})
    holding: dict = field(default_factory=lambda: {lane: deque() for lane in LANES})
    waiting: dict = field(default_factory=lambda: {c: [] for c in CROSSINGS})
    crossing_now: list = field(default_factory=list)
    throughput: ThroughputCounter = field(default_factory=ThroughputCounter)
    veh_generated: int = 0
    veh_entered: int = 0
    veh_exited: int = 0
    ped_entered: int = 0
    ped_exited: int = 0
    next_vehicle_time: float = math.inf
    next_ped_time: float = math.inf
    next_id: int = 0
    last_flow: dict = field(default_factory=lambda: {lane: 0 for lane in LANES})
    exited_vehicle_waits: list = field(default_factory=list)
    served_ped_waits: list = field(default_factory=list)

    @property
    def clock(self) -> float:
        return self.step_count * self.cfg.delta_t

    def vehicles(self):
        for lane in LANES:
            yield from self.lanes[lane]

    def waiting_pedestrians(self):
        for c in CROSSINGS:
            yield from self.waiting[c]

    def vehicles_in_network(self):
        return sum(len(v) for v in self.lanes.values())

    def peds_in_network(self):
        return sum(len(w) for w in self.waiting.values()) + len(self.crossing_now)


def demand_estimate(schedule: DemandSchedule) -> float:
    """Dimensionless demand level: configured vehicle rate over the reference rate.

    The rate is floored at 1 veh/h so the estimate stays strictly positive on
    zero-demand runs.
    """
    if not schedule.d_hat_reference > 0:
        raise ConfigError("d_hat_reference must be strictly positive")
    return max(schedule.vehicle_rate, 1.0) / schedule.d_hat_reference


def _headway(world: World, rate: float) -> float:
    if rate <= 0:
        return math.inf
    mean = 3600.0 / rate
    if world.cfg.arrival_process == "poisson":
        return float(world.rng.exponential(mean))
    return mean


def new_world(cfg: SimConfig, junction: JunctionConfig, demand: DemandSchedule, seed: int | None = None) -> World:
    """Empty network at ``t = 0`` with the first arrival times already drawn."""
    rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
    world = World(cfg=cfg, junction=junction, rng=rng)
    world.next_vehicle_time = _headway(world, demand.vehicle_rate)
    world.next_ped_time = _headway(world, 4.0 * demand.effective_ped_rate())
    return world


def _safe_speed(gap: float, leader_speed: float, decel: float, dt: float) -> float:
    # largest v with v*dt + v^2/(2b) <= gap + v_l^2/(2b)
    bdt = decel * dt
    return -bdt + math.sqrt(bdt * bdt + 2.0 * decel * max(gap, 0.0) + leader_speed * leader_speed)


def _pick(rng: np.random.Generator, options, weights) -> str:
    u = rng.random() * sum(weights)
    acc = 0.0
    for opt, w in zip(options, weights):
        acc += w
        if u < acc:
            return opt
    # guards against u landing on the rounding edge
    return [o for o, w in zip(options, weights) if w > 0][-1]


def _lane_entry_free(world: World, lane: str) -> bool:
    queue = world.lanes[lane]
    return not queue or queue[-1].position >= world.cfg.spacing - _EPS


def _insert_waiting(world: World, lane: str):
    cfg = world.cfg
    queue = world.lanes[lane]
    buffer = world.holding[lane]
    while buffer and _lane_entry_free(world, lane):
        vid, destination = buffer.popleft()
        speed = cfg.s_max
        if queue:
            rear = queue[-1]
            gap = rear.position - cfg.spacing
            speed = min(speed, _safe_speed(gap, rear.speed, cfg.decel, cfg.delta_t), gap / cfg.delta_t)
        queue.append(Vehicle(vid, lane, 0.0, max(speed, 0.0), world.clock, destination))
        world.veh_entered += 1


def spawn_arrivals(world: World, demand: DemandSchedule, dt: float | None = None) -> list:
    """Generate every arrival whose time falls at or before the current clock.

    Vehicles pick an arm by ``arm_weights``, a lane uniformly within the arm and
    a destination from the lane's turning ratios.  A vehicle that cannot be
    placed because the queue reaches the lane entry waits in a per-lane holding
    buffer and counts as entered only once inserted.  Returns the new
    pedestrians.
    """
    dt = world.cfg.delta_t if dt is None else dt
    now = world.clock + _EPS
    rng = world.rng
    jc = world.junction
    arm_weights = [jc.arm_weights[a] for a in ARMS]
    while world.next_vehicle_time <= now:
        arm = _pick(rng, ARMS, arm_weights)
        arm_lanes = [lane for lane in LANES if LANE_ARM[lane] == arm]
        lane = arm_lanes[min(int(rng.random() * len(arm_lanes)), len(arm_lanes) - 1)]
        ratios = jc.turning_ratios[lane]
        destination = _pick(rng, list(ratios), list(ratios.values()))
        world.holding[lane].append((world.next_id, destination))
        world.next_id += 1
        world.veh_generated += 1
        if world.cfg.arrival_process == "poisson":
            world.next_vehicle_time += _headway(world, demand.vehicle_rate)
        else:
            # regenerate from the count to avoid accumulated rounding
            world.next_vehicle_time = (world.veh_generated + 1) * _headway(world, demand.vehicle_rate)
    for lane in LANES:
        if world.holding[lane]:
            _insert_waiting(world, lane)

    new_peds = []
    ped_rate = 4.0 * demand.effective_ped_rate()
    while world.next_ped_time <= now:
        crossing = CROSSINGS[min(int(rng.random() * len(CROSSINGS)), len(CROSSINGS) - 1)]
        ped = Pedestrian(world.next_id, crossing, world.clock)
        world.next_id += 1
        world.waiting[crossing].append(ped)
        world.ped_entered += 1
        new_peds.append(ped)
        if world.cfg.arrival_process == "poisson":
            world.next_ped_time += _headway(world, ped_rate)
        else:
            world.next_ped_time = (world.ped_entered + 1) * _headway(world, ped_rate)
    return new_peds


def step_vehicles(world: World, signal_state: dict, dt: float | None = None):
    """Advance all vehicles by one step under ``signal_state`` (lane/crossing -> green?)."""
    cfg = world.cfg
    dt = cfg.delta_t if dt is None else dt
    stop_line = cfg.lane_length
    exit_pos = cfg.lane_length + cfg.junction_length
    lost_steps = int(round(cfg.startup_lost_time / dt))
    b = cfg.decel
    thr = cfg.wait_speed_threshold
    for lane in LANES:
        queue = world.lanes[lane]
        green = signal_state[lane]
        leader = None
        crossed = 0
        survivors = []
        for veh in queue:
            v = veh.speed
            v_new = min(v + cfg.accel * dt, cfg.s_max)
            if leader is not None:
                gap = leader.position - veh.position - cfg.spacing
                v_new = min(v_new, _safe_speed(gap, leader.speed, b, dt), max(gap, 0.0) / dt)
            if not green and veh.position <= stop_line + _EPS:
                g_line = stop_line - veh.position
                # vehicles unable to stop comfortably run through the amber
                if v * v / (2.0 * b) <= g_line + _EPS:
                    v_new = min(v_new, _safe_speed(g_line, 0.0, b, dt), max(g_line, 0.0) / dt)
            v_new = max(v_new, 0.0)
            if v < thr and v_new > 0.0:
                if veh.free_steps < lost_steps:
                    veh.free_steps += 1
                    v_new = 0.0
            else:
                veh.free_steps = 0
            before = veh.position
            veh.speed = v_new
            veh.position = before + v_new * dt
            if v_new < thr:
                veh.wait += dt
            veh.delay += dt * (1.0 - v_new / cfg.s_max)
            if before <= stop_line < veh.position:
                crossed += 1
            if veh.position >= exit_pos:
                world.veh_exited += 1
                world.throughput.rho_v += 1
                world.exited_vehicle_waits.append(veh.wait)
            else:
                survivors.append(veh)
            leader = veh
        world.lanes[lane] = survivors
        world.last_flow[lane] = crossed


def step_pedestrians(world: World, signal_state: dict, dt: float | None = None):
    """Waiting pedestrians accrue wait on red and start crossing on green."""
    cfg = world.cfg
    dt = cfg.delta_t if dt is None else dt
    now = world.clock
    still = []
    for ped in world.crossing_now:
        if now + dt - ped.start_time >= cfg.crossing_duration - _EPS:
            ped.state = "departed"
            world.ped_exited += 1
            world.throughput.rho_p += 1
        else:
            still.append(ped)
    world.crossing_now = still
    for crossing in CROSSINGS:
        queue = world.waiting[crossing]
        if not queue:
            continue
        if signal_state[crossing]:
            for ped in queue:
                ped.state = "crossing"
                ped.button_pressed = False
                ped.start_time = now
                world.served_ped_waits.append(ped.wait)
                world.crossing_now.append(ped)
            world.waiting[crossing] = []
        else:
            for ped in queue:
                ped.wait += dt


def advance(world: World, signal_state: dict, demand: DemandSchedule):
    """One full simulation step: move vehicles and pedestrians, tick the clock, admit arrivals."""
    dt = world.cfg.delta_t
    step_vehicles(world, signal_state, dt)
    step_pedestrians(world, signal_state, dt)
    world.step_count += 1
    spawn_arrivals(world, demand, dt)
