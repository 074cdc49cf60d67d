"""Reward catalogue: queue, waiting-time, delay, average-speed and throughput
families with their variants, modal weights and demand adjustment.

Every reward is a pure function of a :class:`DecisionContext`, the data
observed at the decision that closes an action interval ``(t_p, t]``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .sensing import SensorFrame


class CatalogueError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass(frozen=True)
class VehicleRecord:
    id: int
    lane: str
    wait: float
    speed: float
    delay_total: float
    delay_current: float  # accrued over [t_p, t]
    delay_previous: float  # accrued over [t_pp, t_p]


@dataclass(frozen=True)
class PedestrianRecord:
    id: int
    crossing: str
    wait: float


@dataclass(frozen=True)
class DecisionContext:
    t: float
    t_p: float
    t_pp: float
    frame: SensorFrame
    frame_p: SensorFrame
    vehicles: tuple  # VehicleRecord for every vehicle in sensor coverage at t
    pedestrians: tuple  # PedestrianRecord for every pedestrian waiting at t
    rho_v: int
    rho_p: int
    d_hat: float
    s_max: float

    @property
    def phase_length(self) -> float:
        return self.t - self.t_p


@dataclass(frozen=True)
class RewardSpec:
    name: str
    family: str
    variant: str
    a: float = 0.5
    b: float = 0.5
    demand_adjusted: bool = False
    tau_max: float = 120.0
    p_max: float = 10.0
    literal_mode: bool = False
    label: str = ""

    def __post_init__(self):
        if abs(self.a + self.b - 1.0) > 1e-12 or not (0 <= self.a <= 1 and 0 <= self.b <= 1):
            raise ValueError("modal weights must satisfy a + b = 1 with a, b in [0, 1]")
        if not (self.tau_max > 0 and self.p_max > 0):
            raise ValueError("tau_max and p_max must be positive")


def _check_d_hat(d_hat):
    if not d_hat > 0:
        raise ValueError(f"demand estimate must be strictly positive, got {d_hat}")


def reward_queue(ctx: DecisionContext, variant: str = "plain", literal_mode: bool = False) -> float:
    qv, qp = ctx.frame.total_vehicle_queue, ctx.frame.total_ped_queue
    if variant == "plain":
        return float(-qv - qp)
    if variant == "squared":
        return float(-qv * qv - qp * qp)
    dt = ctx.phase_length
    if dt <= 0 and variant in ("pln", "delta_pln"):
        raise ValueError("phase length must be positive")
    if variant == "pln":
        if literal_mode:
            return -qv / dt - qp
        return -(qv + qp) / dt
    dv = ctx.frame_p.total_vehicle_queue - qv
    dp = ctx.frame_p.total_ped_queue - qp
    if variant == "delta":
        return float(dv + dp)
    if variant == "delta_pln":
        if literal_mode:
            return -(dv - dp) / dt
        return (dv + dp) / dt
    raise ValueError(f"unknown queue variant {variant!r}")


def reward_wait(ctx: DecisionContext, spec: RewardSpec) -> float:
    wv, wp = ctx.frame.total_vehicle_wait, ctx.frame.total_ped_wait
    if spec.variant == "plain":
        return -(spec.a * wv + spec.b * wp)
    if spec.variant == "ad":
        _check_d_hat(ctx.d_hat)
        return -(spec.a * wv + spec.b * wp) / ctx.d_hat
    if spec.variant == "delta":
        return spec.a * (ctx.frame_p.total_vehicle_wait - wv) + spec.b * (ctx.frame_p.total_ped_wait - wp)
    raise ValueError(f"unknown wait variant {spec.variant!r}")


def reward_delay(ctx: DecisionContext, spec: RewardSpec) -> float:
    wp = ctx.frame.total_ped_wait
    if spec.variant == "plain":
        return -(spec.a * sum(v.delay_total for v in ctx.vehicles) + spec.b * wp)
    if spec.variant == "ad":
        _check_d_hat(ctx.d_hat)
        return -(spec.a * sum(v.delay_current for v in ctx.vehicles) + spec.b * wp) / ctx.d_hat
    if spec.variant == "delta":
        prev = sum(v.delay_previous for v in ctx.vehicles)
        cur = sum(v.delay_current for v in ctx.vehicles)
        return spec.a * (prev - cur) + spec.b * (ctx.frame_p.total_ped_wait - wp)
    raise ValueError(f"unknown delay variant {spec.variant!r}")


def reward_avg_speed(ctx: DecisionContext, spec: RewardSpec) -> float:
    speeds = [s for lane in ctx.frame.lanes for s in lane.speeds]
    r_v = sum(s / ctx.s_max for s in speeds) / len(speeds) if speeds else 1.0
    if spec.variant == "wait":
        p = min(ctx.frame.total_ped_wait / spec.tau_max, 1.0)
    elif spec.variant == "occ":
        p = min(ctx.frame.total_ped_queue / spec.p_max, 1.0)
    else:
        raise ValueError(f"unknown avg_speed variant {spec.variant!r}")
    r = r_v + p if spec.literal_mode else r_v + (1.0 - p)
    if spec.demand_adjusted:
        _check_d_hat(ctx.d_hat)
        r *= ctx.d_hat
    return r


def reward_throughput(ctx: DecisionContext, spec: RewardSpec) -> float:
    return spec.a * ctx.rho_v + spec.b * ctx.rho_p


def compute_reward(spec: RewardSpec, ctx: DecisionContext) -> float:
    if spec.family == "queue":
        return reward_queue(ctx, spec.variant, spec.literal_mode)
    if spec.family == "wait":
        return reward_wait(ctx, spec)
    if spec.family == "delay":
        return reward_delay(ctx, spec)
    if spec.family == "avg_speed":
        return reward_avg_speed(ctx, spec)
    if spec.family == "throughput":
        return reward_throughput(ctx, spec)
    raise ValueError(f"unknown reward family {spec.family!r}")


_PRIORITIES = {"": (0.5, 0.5), "_p80": (0.2, 0.8), "_p95": (0.05, 0.95)}


def _build_catalogue():
    specs = [
        RewardSpec("queues", "queue", "plain", label="Queues"),
        RewardSpec("queues_sq", "queue", "squared", label="Queues Sq."),
        RewardSpec("queues_pln", "queue", "pln", label="Queues PLN"),
        RewardSpec("delta_queues", "queue", "delta", label="Δ Queues"),
        RewardSpec("delta_queues_pln", "queue", "delta_pln", label="Δ Queues PLN"),
        RewardSpec("avg_speed_wait", "avg_speed", "wait", label="Average Speed - Wait"),
        RewardSpec("avg_speed_occ", "avg_speed", "occ", label="Average Speed - Occ"),
        RewardSpec("avg_speed_ad_wait", "avg_speed", "wait", demand_adjusted=True, label="Average Speed AD - Wait"),
        RewardSpec("avg_speed_ad_occ", "avg_speed", "occ", demand_adjusted=True, label="Average Speed AD - Occ"),
    ]
    weighted = [
        ("wait_time", "wait", "plain", "Wait Time"),
        ("wait_time_ad", "wait", "ad", "Wait Time AD"),
        ("delta_wait_time", "wait", "delta", "Δ Wait Time"),
        ("delay", "delay", "plain", "Delay"),
        ("delay_ad", "delay", "ad", "Delay AD"),
        ("delta_delay", "delay", "delta", "Δ Delay"),
        ("throughput", "throughput", "plain", "Throughput"),
    ]
    for base, family, variant, label in weighted:
        for suffix, (a, b) in _PRIORITIES.items():
            specs.append(RewardSpec(
                base + suffix, family, variant, a=a, b=b,
                demand_adjusted=variant == "ad",
                label=label + (" " + suffix[1:].upper() if suffix else ""),
            ))
    return {s.name: s for s in specs}


CATALOGUE = _build_catalogue()


def reward_names() -> list[str]:
    return list(CATALOGUE)


def named_spec(name: str, tau_max: float | None = None, p_max: float | None = None,
               literal_mode: bool | None = None) -> RewardSpec:
    """Look up a catalogue entry, optionally overriding the normalisation constants."""
    try:
        spec = CATALOGUE[name]
    except KeyError:
        raise CatalogueError(f"unknown reward {name!r}; valid names: {', '.join(CATALOGUE)}") from None
    changes = {}
    if tau_max is not None:
        changes["tau_max"] = tau_max
    if p_max is not None:
        changes["p_max"] = p_max
    if literal_mode is not None:
        changes["literal_mode"] = literal_mode
    return replace(spec, **changes) if changes else spec


def all_rewards(ctx: DecisionContext, tau_max=120.0, p_max=10.0, literal_mode=False) -> dict:
    """Evaluate every catalogue configuration on one context."""
    return {name: compute_reward(named_spec(name, tau_max, p_max, literal_mode), ctx) for name in CATALOGUE}
