"""Emulated signal controller: four stages, minimum green, intergreens and the
mandatory Stage 1 lead-in before Stage 2.

All timers count simulation steps.  Durations configured in seconds are
rounded *up* onto the step grid so no safety interval is ever shortened.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import CROSSINGS, LANES, ControllerConfig

MOVEMENTS = LANES + CROSSINGS
NS_LANES = ("N0", "N1", "S0", "S1")
EW_LANES = ("E0", "W0")

STAGE_PHASES = {
    1: frozenset({"N0", "N1"}),  # protected right turn from the north arm
    2: frozenset(NS_LANES),
    3: frozenset(CROSSINGS),
    4: frozenset(EW_LANES),
}
SELECTABLE = (2, 3, 4)

CONFLICTS = frozenset(
    [frozenset((a, b)) for a in NS_LANES for b in EW_LANES]
    + [frozenset((a, p)) for a in LANES for p in CROSSINGS]
)

GREEN, INTERGREEN, STAGE1 = "green", "intergreen", "stage1"


class ControllerError(RuntimeError):
    """Illegal stage request."""


def to_steps(seconds: float, dt: float) -> int:
    return max(1, math.ceil(seconds / dt - 1e-9))


def conflicting_greens(signal_state: dict) -> list:
    """Pairs of conflicting movements that are simultaneously green."""
    greens = [m for m in MOVEMENTS if signal_state[m]]
    return [(a, b) for i, a in enumerate(greens) for b in greens[i + 1:] if frozenset((a, b)) in CONFLICTS]


@dataclass
class Timing:
    dt: float
    min_green: int
    intergreen: int
    stage1: int
    max_green: int | None

    @classmethod
    def from_config(cls, cfg: ControllerConfig, dt: float) -> "Timing":
        stage1 = cfg.stage1_fixed_duration if cfg.stage1_fixed_duration is not None else cfg.min_green
        return cls(
            dt=dt,
            min_green=to_steps(cfg.min_green, dt),
            intergreen=to_steps(cfg.intergreen, dt),
            stage1=to_steps(stage1, dt),
            max_green=None if cfg.max_green is None else int(math.floor(cfg.max_green / dt + 1e-9)),
        )


@dataclass
class ControllerState:
    mode: str
    active_stage: int
    target_stage: int
    elapsed_steps: int = 0
    from_stage: int | None = None
    route_via_stage1: bool = False
    green_steps: dict = field(default_factory=lambda: {s: 0 for s in STAGE_PHASES})


class SignalController:
    """Stage controller driven by requests at decision points.

    >>> ctrl = SignalController(ControllerConfig(), dt=0.6)
    >>> ctrl.is_decision_point()
    False
    """

    def __init__(self, cfg: ControllerConfig, dt: float):
        self.cfg = cfg
        self.timing = Timing.from_config(cfg, dt)
        self.state = ControllerState(GREEN, cfg.initial_stage, cfg.initial_stage)

    @property
    def dt(self) -> float:
        return self.timing.dt

    @property
    def elapsed_in_mode(self) -> float:
        return self.state.elapsed_steps * self.timing.dt

    def is_decision_point(self) -> bool:
        st = self.state
        return st.mode == GREEN and st.elapsed_steps >= self.timing.min_green

    def encoded_stage(self, use_target: bool = True) -> int:
        st = self.state
        if st.mode == GREEN or not use_target:
            return st.active_stage
        return st.target_stage

    def request_stage(self, requested: int):
        """Submit the agent's choice.  Same stage extends green by one step."""
        if requested not in SELECTABLE:
            raise ControllerError(f"stage {requested} is not selectable; choose from {SELECTABLE}")
        if not self.is_decision_point():
            raise ControllerError("stage requests are only accepted at decision points")
        st = self.state
        if requested == st.active_stage:
            return
        st.from_stage = st.active_stage
        st.target_stage = requested
        st.route_via_stage1 = requested == 2
        st.mode = INTERGREEN
        st.elapsed_steps = 0

    def signal_state(self) -> dict:
        st = self.state
        if st.mode == INTERGREEN:
            to = 1 if st.route_via_stage1 else st.target_stage
            greens = STAGE_PHASES[st.from_stage] & STAGE_PHASES[to]
        else:
            greens = STAGE_PHASES[st.active_stage]
        return {m: m in greens for m in MOVEMENTS}

    def tick(self) -> dict:
        """Return the signal map for the coming step, then advance one step."""
        signal = self.signal_state()
        st = self.state
        tm = self.timing
        if st.mode != INTERGREEN:
            st.green_steps[st.active_stage] += 1
        st.elapsed_steps += 1
        if st.mode == INTERGREEN and st.elapsed_steps >= tm.intergreen:
            if st.route_via_stage1:
                st.mode, st.active_stage = STAGE1, 1
            else:
                st.mode, st.active_stage = GREEN, st.target_stage
            st.elapsed_steps = 0
        elif st.mode == STAGE1 and st.elapsed_steps >= tm.stage1:
            st.mode = INTERGREEN
            st.from_stage = 1
            st.route_via_stage1 = False
            st.elapsed_steps = 0
        return signal
