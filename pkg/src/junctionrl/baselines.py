"""Reference controllers: Maximum Occupancy and Vehicle Actuated System D."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .config import LANES
from .signals import EW_LANES, NS_LANES, SELECTABLE

_LANE_INDEX = {lane: i for i, lane in enumerate(LANES)}
STAGE_LANES = {2: NS_LANES, 4: EW_LANES}


def stage_queue_sums(frame) -> dict:
    """Queue served by each selectable stage: vehicle queues for 2 and 4, waiting pedestrians for 3."""
    return {
        2: sum(frame.lanes[_LANE_INDEX[lane]].queue for lane in NS_LANES),
        3: sum(p.queue for p in frame.peds),
        4: sum(frame.lanes[_LANE_INDEX[lane]].queue for lane in EW_LANES),
    }


def mo_decide(frame, ctrl) -> int:
    """Longest queue first; ties keep the active stage, then go to the lowest stage id."""
    sums = stage_queue_sums(frame)
    best = max(sums.values())
    active = ctrl.state.active_stage
    if sums.get(active) == best:
        return active
    return min(s for s in SELECTABLE if sums[s] == best)


class MaxOccupancy:
    name = "mo"

    def reset(self):
        pass

    def decide(self, frame, ctrl, obs=None) -> int:
        return mo_decide(frame, ctrl)


@dataclass
class VAConfig:
    extension: float = 1.5
    max_green: float = 60.0
    rotation: tuple = (2, 4, 3)


def stage_demand(frame) -> dict:
    return {
        2: any(frame.lanes[_LANE_INDEX[lane]].count > 0 for lane in NS_LANES),
        3: any(p.button for p in frame.peds),
        4: any(frame.lanes[_LANE_INDEX[lane]].count > 0 for lane in EW_LANES),
    }


class VehicleActuated:
    """Presence-triggered green extensions capped by a maximum green.

    Each detection on the active stage's lanes grants ``ceil(extension / dt)``
    consecutive holds; when they run out the controller moves to the next
    stage in the rotation that has demand.
    """

    name = "va"

    def __init__(self, cfg: VAConfig | None = None, dt: float = 0.6):
        self.cfg = cfg or VAConfig()
        self.hold_steps = math.ceil(self.cfg.extension / dt - 1e-9)
        self.max_green_steps = int(math.floor(self.cfg.max_green / dt + 1e-9))
        self.remaining = 0
        self._stage = None

    def reset(self):
        self.remaining = 0
        self._stage = None

    def _next_with_demand(self, active, demand):
        order = self.cfg.rotation
        start = order.index(active)
        for k in range(1, len(order)):
            cand = order[(start + k) % len(order)]
            if demand[cand]:
                return cand
        return None

    def decide(self, frame, ctrl, obs=None) -> int:
        st = ctrl.state
        active = st.active_stage
        if self._stage != active or st.elapsed_steps == ctrl.timing.min_green:
            self.remaining = 0
            self._stage = active
        demand = stage_demand(frame)
        if active in STAGE_LANES and demand[active]:
            self.remaining = self.hold_steps
        can_hold = st.elapsed_steps + 1 <= self.max_green_steps
        if self.remaining > 0 and can_hold:
            self.remaining -= 1
            return active
        self.remaining = 0
        nxt = self._next_with_demand(active, demand)
        if nxt is not None:
            return nxt
        if can_hold:
            return active
        return 4 if active == 2 else 2


def make_baseline(name: str, dt: float = 0.6, va_cfg: VAConfig | None = None):
    if name == "mo":
        return MaxOccupancy()
    if name == "va":
        return VehicleActuated(va_cfg, dt)
    raise ValueError(f"unknown baseline {name!r}")

