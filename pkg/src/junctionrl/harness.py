"""Experiment orchestration: training, evaluation, decision traces and reports."""
from __future__ import annotations

import csv
import io
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .agent import STAGES, DQNAgent, epsilon_at, run_episode, training_curriculum
from .baselines import make_baseline
from .config import Config, DemandSchedule, config_from_dict
from .env import JunctionEnv
from .nn import TrainingError, forward, load_weights
from .rewards import all_rewards, compute_reward, named_spec
from .state import OBS_DIM

log = logging.getLogger(__name__)

SCENARIO_RATES = {"normal": 1714.0, "peak": 2117.0, "oversaturated": 2400.0}
CONTROLLERS = ("dqn", "mo", "va", "random")

REPLICATION_FIELDS = [
    "controller", "reward", "scenario", "replication", "seed", "vehicle_wait_mean", "ped_wait_mean",
    "combined", "vehicles_entered", "vehicles_exited", "peds_entered", "peds_exited",
    "green_share_1", "green_share_2", "green_share_3", "green_share_4",
]
TRAINING_LOG_FIELDS = [
    "episode", "vehicle_rate", "ped_rate", "epsilon", "decisions", "transitions", "total_reward",
    "mean_loss", "vehicle_wait", "ped_wait",
]
LONG_FIELDS = ["reward", "controller", "scenario", "mode", "replication", "mean_wait"]


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class ScenarioConfig:
    name: str
    vehicle_rate: float
    ped_rate: float
    duration: float = 1800.0
    replications: int = 100
    seed_base: int = 0


def scenario(cfg: Config, name: str, replications: int = 100, seed_base: int = 0) -> ScenarioConfig:
    if name == "custom":
        rate = cfg.demand.vehicle_rate
    elif name in SCENARIO_RATES:
        rate = SCENARIO_RATES[name]
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_RATES) + ['custom']}")
    return ScenarioConfig(name, rate, cfg.demand.ped_rate, cfg.sim.episode_steps * cfg.sim.delta_t,
                          replications, seed_base)


def scenario_demand(cfg: Config, sc: ScenarioConfig) -> DemandSchedule:
    return replace(cfg.demand, vehicle_rate=sc.vehicle_rate, ped_rate=sc.ped_rate)


def experiment_hash(cfg: Config) -> str:
    """Hash of everything except demand, which scenarios override."""
    data = cfg.to_dict()
    data.pop("demand")
    data.pop("training")
    blob = json.dumps(data, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------- policies

class GreedyPolicy:
    name = "dqn"

    def __init__(self, net):
        self.net = net

    def reset(self):
        pass

    def decide(self, frame, ctrl, obs):
        return STAGES[int(np.argmax(forward(self.net, obs)))]


class RandomPolicy:
    name = "random"

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self):
        pass

    def decide(self, frame, ctrl, obs):
        return STAGES[int(self.rng.integers(len(STAGES)))]


def load_network(path):
    p = Path(path)
    if p.is_dir():
        p = p / "weights.bin"
    return load_weights(p)


def make_policy(cfg: Config, controller: str, checkpoint=None, seed: int = 0):
    if controller == "dqn":
        if checkpoint is None:
            raise ValueError("the dqn controller needs --checkpoint")
        net = load_network(checkpoint)
        if net.sizes[0] != OBS_DIM or net.sizes[-1] != len(STAGES):
            raise ValueError(f"checkpoint layer sizes {net.sizes} do not fit this environment")
        return GreedyPolicy(net)
    if controller == "random":
        return RandomPolicy(seed)
    if controller in ("mo", "va"):
        return make_baseline(controller, cfg.sim.delta_t)
    raise ValueError(f"unknown controller {controller!r}; choose from {CONTROLLERS}")


def run_controlled(env: JunctionEnv, policy, seed: int, demand: DemandSchedule, on_decision=None):
    """Drive one episode with a non-learning policy; returns the episode metrics."""
    env.reset(seed, demand)
    policy.reset()
    while env.run_to_decision():
        ctx = env.close_interval()
        stage = policy.decide(env.frame, env.ctrl, env.observation())
        env.act(stage)
        if on_decision is not None:
            on_decision(env, ctx, stage)
    return env.metrics()


# -------------------------------------------------------------- evaluation

@dataclass
class RunSummary:
    reward: str
    controller: str
    scenario: str
    replications: int
    vehicle_mean: float
    vehicle_std: float
    ped_mean: float
    ped_std: float
    seed_base: int
    config_hash: str
    code_version: str
    vehicle_waits: list = field(default_factory=list)
    ped_waits: list = field(default_factory=list)

    @property
    def combined_mean(self) -> float:
        return 0.5 * (self.vehicle_mean + self.ped_mean)

    def table_row(self) -> str:
        return (f"{self.vehicle_mean:.2f} ± {self.vehicle_std:.2f} | "
                f"{self.ped_mean:.2f} ± {self.ped_std:.2f}")

    def to_dict(self):
        return asdict(self) | {"combined_mean": self.combined_mean}

    @classmethod
    def from_dict(cls, data):
        data = {k: v for k, v in data.items() if k != "combined_mean"}
        return cls(**data)


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def _replication_row(controller, reward, sc_name, rep, seed, m):
    return {
        "controller": controller, "reward": reward, "scenario": sc_name, "replication": rep, "seed": seed,
        "vehicle_wait_mean": m.vehicle_wait_mean, "ped_wait_mean": m.ped_wait_mean, "combined": m.combined,
        "vehicles_entered": m.vehicles_entered, "vehicles_exited": m.vehicles_exited,
        "peds_entered": m.peds_entered, "peds_exited": m.peds_exited,
        **{f"green_share_{s}": m.green_share[s] for s in (1, 2, 3, 4)},
    }


def _evaluate_one(cfg_dict, controller, checkpoint, sc_dict, rep, reward_label):
    cfg = config_from_dict(cfg_dict)
    sc = ScenarioConfig(**sc_dict)
    seed = derive_seed(sc.seed_base, rep)
    policy = make_policy(cfg, controller, checkpoint, seed=derive_seed(sc.seed_base, rep, 7))
    env = JunctionEnv(cfg)
    m = run_controlled(env, policy, seed, scenario_demand(cfg, sc))
    return _replication_row(controller, reward_label, sc.name, rep, seed, m)


def evaluate(cfg: Config, controller: str, scenario_name: str, replications: int, seed: int = 0,
             checkpoint=None, reward_label: str | None = None, jobs: int = 1):
    """Greedy evaluation over independent replications.  Returns ``(summary, rows)``."""
    sc = scenario(cfg, scenario_name, replications, seed)
    if reward_label is None:
        reward_label = _checkpoint_reward(checkpoint) if controller == "dqn" else controller
    make_policy(cfg, controller, checkpoint)  # fail fast on bad checkpoints
    args = (cfg.to_dict(), controller, None if checkpoint is None else str(checkpoint), asdict(sc))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_evaluate_one, *zip(*[args + (r, reward_label) for r in range(replications)])))
    else:
        rows = [_evaluate_one(*args, r, reward_label) for r in range(replications)]
    vm, vs = mean_std([r["vehicle_wait_mean"] for r in rows])
    pm, ps = mean_std([r["ped_wait_mean"] for r in rows])
    summary = RunSummary(
        reward=reward_label, controller=controller, scenario=sc.name, replications=replications,
        vehicle_mean=vm, vehicle_std=vs, ped_mean=pm, ped_std=ps, seed_base=seed,
        config_hash=experiment_hash(cfg), code_version=__version__,
        vehicle_waits=[r["vehicle_wait_mean"] for r in rows], ped_waits=[r["ped_wait_mean"] for r in rows],
    )
    return summary, rows


def _checkpoint_reward(checkpoint):
    if checkpoint is None:
        return "dqn"
    p = Path(checkpoint)
    meta = (p if p.is_dir() else p.parent) / "agent.json"
    if meta.exists():
        return json.loads(meta.read_text()).get("reward", "dqn")
    return "dqn"


def rows_to_csv(rows, fields=REPLICATION_FIELDS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_evaluation(summary: RunSummary, rows, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{summary.reward}_{summary.controller}_{summary.scenario}"
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(rows_to_csv(rows))
    json_path = out / f"{stem}.summary.json"
    json_path.write_text(json.dumps(summary.to_dict(), indent=2))
    return csv_path, json_path


# ---------------------------------------------------------------- training

def train_replica(cfg: Config, reward_name: str, seed: int, replica: int, episodes: int, out_dir=None,
                  progress=None):
    """Train one agent on the demand curriculum.  Returns ``(agent, log_rows)``."""
    spec = named_spec(reward_name, cfg.rewards.tau_max, cfg.rewards.p_max, cfg.rewards.literal_mode)
    tc = cfg.training
    agent = DQNAgent(cfg.agent, seed=derive_seed(seed, replica, 0))
    env = JunctionEnv(cfg)
    if tc.curriculum:
        rates = training_curriculum(episodes, tc.curriculum_min_rate, tc.curriculum_max_rate)
    else:
        rates = [cfg.demand.vehicle_rate] * episodes
    rows = []
    for e in range(episodes):
        demand = replace(cfg.demand, vehicle_rate=rates[e])
        eps = epsilon_at(e, episodes, cfg.agent)
        stats = run_episode(agent, env, spec, seed=derive_seed(seed, replica, e, 1), demand=demand,
                            epsilon=eps, train=True)
        row = {
            "episode": e + 1, "vehicle_rate": rates[e], "ped_rate": demand.effective_ped_rate(),
            "epsilon": eps, "decisions": stats["decisions"], "transitions": stats["transitions"],
            "total_reward": stats["total_reward"], "mean_loss": stats["mean_loss"],
            "vehicle_wait": stats["vehicle_wait"], "ped_wait": stats["ped_wait"],
        }
        rows.append(row)
        if progress is not None:
            progress(replica, row)
    if out_dir is not None:
        d = Path(out_dir)
        agent.save(d, {"reward": reward_name, "replica": replica, "train_seed": seed,
                       "config_hash": cfg.hash()})
        (d / "training_log.csv").write_text(rows_to_csv(rows, TRAINING_LOG_FIELDS))
    return agent, rows


def train(cfg: Config, reward_name: str, out_dir, replicas: int | None = None, episodes: int | None = None,
          seed: int = 0, progress=None) -> dict:
    """Train ``replicas`` agents, score each against both baselines and mark the best.

    A replica whose loss diverges is flagged failed and skipped.
    """
    named_spec(reward_name)
    replicas = cfg.training.replicas if replicas is None else replicas
    episodes = cfg.training.episodes if episodes is None else episodes
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = cfg.training
    sel_seed = derive_seed(seed, 99)
    baseline = {}
    for name in ("mo", "va"):
        s, _ = evaluate(cfg, name, tc.selection_scenario, tc.selection_replications, sel_seed)
        baseline[name] = s.combined_mean
    results = []
    for r in range(replicas):
        rdir = out / f"replica_{r}"
        try:
            train_replica(cfg, reward_name, seed, r, episodes, rdir, progress)
        except TrainingError as exc:
            log.warning("replica %d diverged: %s", r, exc)
            results.append({"replica": r, "status": "failed", "error": str(exc)})
            continue
        s, _ = evaluate(cfg, "dqn", tc.selection_scenario, tc.selection_replications, sel_seed,
                        checkpoint=rdir, reward_label=reward_name)
        results.append({
            "replica": r, "status": "ok", "checkpoint": str(rdir.name),
            "vehicle_mean": s.vehicle_mean, "ped_mean": s.ped_mean, "combined_mean": s.combined_mean,
            "margin_vs_best_baseline": min(baseline.values()) - s.combined_mean,
        })
    ok = [r for r in results if r["status"] == "ok"]
    best = min(ok, key=lambda r: (r["combined_mean"], r["replica"])) if ok else None
    selection = {
        "reward": reward_name, "episodes": episodes, "replicas": replicas, "seed": seed,
        "selection_scenario": tc.selection_scenario, "selection_replications": tc.selection_replications,
        "baseline_combined": baseline, "replica_results": results,
        "best_replica": None if best is None else best["replica"],
        "best_checkpoint": None if best is None else best["checkpoint"],
        "config_hash": cfg.hash(), "code_version": __version__, "config": cfg.to_dict(),
    }
    (out / "selection.json").write_text(json.dumps(selection, indent=2, default=list))
    return selection


def best_checkpoint(train_dir) -> Path:
    sel = json.loads((Path(train_dir) / "selection.json").read_text())
    if sel["best_checkpoint"] is None:
        raise ValueError(f"no successful replica in {train_dir}")
    return Path(train_dir) / sel["best_checkpoint"]


# ------------------------------------------------------------------- trace

def _vehicle_records(ctx):
    return [asdict(v) for v in ctx.vehicles]


def trace(cfg: Config, controller: str, scenario_name: str, seed: int, reward_name: str, out_path,
          checkpoint=None) -> int:
    """Write one JSONL record per decision point and return the record count."""
    spec = named_spec(reward_name, cfg.rewards.tau_max, cfg.rewards.p_max, cfg.rewards.literal_mode)
    sc = scenario(cfg, scenario_name, 1, seed)
    env = JunctionEnv(cfg)
    policy = make_policy(cfg, controller, checkpoint, seed=derive_seed(seed, 7))
    count = 0
    first = [True]
    with open(out_path, "w") as fh:
        def record(env_, ctx, stage):
            nonlocal count
            has_prev = not first[0]
            first[0] = False
            rewards = all_rewards(ctx, cfg.rewards.tau_max, cfg.rewards.p_max, cfg.rewards.literal_mode) \
                if has_prev else None
            rec = {
                "decision": count, "t": ctx.t, "t_p": ctx.t_p, "t_pp": ctx.t_pp,
                "controller": controller, "action": stage,
                "mode": env_.ctrl.state.mode, "active_stage": env_.ctrl.state.active_stage,
                "rho_v": ctx.rho_v, "rho_p": ctx.rho_p, "d_hat": ctx.d_hat, "s_max": ctx.s_max,
                "delta_t": cfg.sim.delta_t, "wait_speed_threshold": cfg.sim.wait_speed_threshold,
                "tau_max": cfg.rewards.tau_max, "p_max": cfg.rewards.p_max,
                "literal_mode": cfg.rewards.literal_mode,
                "frame": ctx.frame.to_dict(), "frame_p": ctx.frame_p.to_dict(),
                "vehicles": _vehicle_records(ctx),
                "pedestrians": [asdict(p) for p in ctx.pedestrians],
                "reward_name": reward_name,
                "reward": compute_reward(spec, ctx) if has_prev else None,
                "rewards": rewards,
            }
            fh.write(json.dumps(rec) + "\n")
            count += 1

        run_controlled(env, policy, derive_seed(seed, 0), scenario_demand(cfg, sc), on_decision=record)
    return count


# ------------------------------------------------------------------ report

class ReportError(ValueError):
    pass


def report(summaries, table_path=None, long_csv_path=None) -> str:
    """Comparison table sorted by combined mean wait plus a long-format CSV."""
    if not summaries:
        raise ReportError("report needs at least one summary")
    hashes = {s.config_hash for s in summaries}
    if len(hashes) > 1:
        raise ReportError(f"summaries come from incompatible configurations: {sorted(hashes)}")
    ordered = sorted(summaries, key=lambda s: (s.combined_mean, s.reward, s.controller, s.scenario))
    width = max(len(s.reward) for s in ordered)
    lines = [f"{'reward':<{width}}  controller  scenario       vehicles              pedestrians           combined"]
    for s in ordered:
        lines.append(
            f"{s.reward:<{width}}  {s.controller:<10}  {s.scenario:<13}  "
            f"{s.vehicle_mean:8.2f} ± {s.vehicle_std:<8.2f}  {s.ped_mean:8.2f} ± {s.ped_std:<8.2f}  "
            f"{s.combined_mean:8.2f}"
        )
    table = "\n".join(lines) + "\n"
    long_rows = []
    for s in summaries:
        for mode, values in (("vehicle", s.vehicle_waits), ("pedestrian", s.ped_waits)):
            for rep, value in enumerate(values):
                long_rows.append({"reward": s.reward, "controller": s.controller, "scenario": s.scenario,
                                  "mode": mode, "replication": rep, "mean_wait": value})
    if table_path is not None:
        Path(table_path).write_text(table)
    if long_csv_path is not None:
        Path(long_csv_path).write_text(rows_to_csv(long_rows, LONG_FIELDS))
    return table


def load_summary(path) -> RunSummary:
    return RunSummary.from_dict(json.loads(Path(path).read_text()))

