"""Simulation environment: world + signal controller + sensors + observation history.

The environment advances one step at a time and stops at controller decision
points.  At each decision the caller first closes the previous action
interval with :meth:`JunctionEnv.close_interval` (which yields the
:class:`~junctionrl.rewards.DecisionContext` for the reward) and then submits
a stage with :meth:`JunctionEnv.act`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config, DemandSchedule
from .rewards import DecisionContext, PedestrianRecord, VehicleRecord
from .sensing import collect_snapshot, layout_from_config, take_throughput
from .signals import SignalController
from .sim import advance, demand_estimate, new_world
from .state import HistoryBuffer, frame_from_sensors


@dataclass
class EpisodeMetrics:
    vehicle_wait_mean: float
    ped_wait_mean: float
    vehicles_entered: int
    vehicles_exited: int
    peds_entered: int
    peds_exited: int
    green_share: dict = field(default_factory=dict)

    @property
    def combined(self) -> float:
        return 0.5 * (self.vehicle_wait_mean + self.ped_wait_mean)


class JunctionEnv:
    def __init__(self, cfg: Config, demand: DemandSchedule | None = None):
        self.cfg = cfg
        self.layout = layout_from_config(cfg)
        self.demand = demand or cfg.demand
        self.world = None
        self.ctrl = None

    def reset(self, seed: int, demand: DemandSchedule | None = None):
        if demand is not None:
            self.demand = demand
        self.demand.validate()
        self.d_hat = demand_estimate(self.demand)
        self.world = new_world(self.cfg.sim, self.cfg.junction, self.demand, seed)
        self.ctrl = SignalController(self.cfg.controller, self.cfg.sim.delta_t)
        self.history = HistoryBuffer()
        self.frame = collect_snapshot(self.world, self.layout)
        self._push_frame()
        # episode start acts as the virtual previous action
        self.t_p = self.t_pp = 0.0
        self.frame_p = self.frame
        self.delay_p = {}
        self.delay_pp = {}
        self.n_decisions = 0
        self.last_signal = None
        return self

    @property
    def clock(self) -> float:
        return self.world.clock

    @property
    def done(self) -> bool:
        return self.world.step_count >= self.cfg.sim.episode_steps

    def _push_frame(self):
        stage = self.ctrl.encoded_stage(self.cfg.controller.encode_target_stage)
        self.history.push(frame_from_sensors(stage, self.frame))

    def step(self):
        signal = self.ctrl.tick()
        self.last_signal = signal
        advance(self.world, signal, self.demand)
        self.frame = collect_snapshot(self.world, self.layout)
        self._push_frame()
        return signal

    def run_to_decision(self, on_step=None) -> bool:
        """Advance until the controller accepts a request.  False if the episode ended first."""
        while not self.done:
            self.step()
            if on_step is not None:
                on_step(self)
            if self.ctrl.is_decision_point():
                return True
        return False

    def observation(self) -> np.ndarray:
        return self.history.encode()

    def close_interval(self) -> DecisionContext:
        """Context for the action interval ``(t_p, t]`` ending now; resets throughput."""
        rho_v, rho_p = take_throughput(self.world.throughput)
        lo = self.layout.lane_length - self.layout.coverage_length
        hi = self.layout.lane_length
        vehicles = []
        for veh in self.world.vehicles():
            if lo <= veh.position <= hi:
                d_p = self.delay_p.get(veh.id, 0.0)
                d_pp = self.delay_pp.get(veh.id, 0.0)
                vehicles.append(VehicleRecord(veh.id, veh.lane, veh.wait, veh.speed, veh.delay,
                                              veh.delay - d_p, d_p - d_pp))
        peds = tuple(PedestrianRecord(p.id, p.crossing, p.wait) for p in self.world.waiting_pedestrians())
        return DecisionContext(
            t=self.clock, t_p=self.t_p, t_pp=self.t_pp, frame=self.frame, frame_p=self.frame_p,
            vehicles=tuple(vehicles), pedestrians=peds, rho_v=rho_v, rho_p=rho_p,
            d_hat=self.d_hat, s_max=self.cfg.sim.s_max,
        )

    def act(self, stage: int):
        self.ctrl.request_stage(stage)
        self.t_pp, self.t_p = self.t_p, self.clock
        self.frame_p = self.frame
        self.delay_pp = self.delay_p
        self.delay_p = {veh.id: veh.delay for veh in self.world.vehicles()}
        self.n_decisions += 1

    def metrics(self) -> EpisodeMetrics:
        w = self.world
        veh_waits = list(w.exited_vehicle_waits) + [v.wait for v in w.vehicles()]
        ped_waits = list(w.served_ped_waits) + [p.wait for p in w.waiting_pedestrians()]
        greens = self.ctrl.state.green_steps
        total = sum(greens.values())
        share = {s: (greens[s] / total if total else 0.0) for s in sorted(greens)}
        return EpisodeMetrics(
            vehicle_wait_mean=float(np.mean(veh_waits)) if veh_waits else 0.0,
            ped_wait_mean=float(np.mean(ped_waits)) if ped_waits else 0.0,
            vehicles_entered=w.veh_entered, vehicles_exited=w.veh_exited,
            peds_entered=w.ped_entered, peds_exited=w.ped_exited, green_share=share,
        )
