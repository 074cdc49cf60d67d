"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line
that is printed in the terminal summary.

The training criteria (4 to 6) take roughly half an hour on one core.
"""
import io
import json
import math
import time
from contextlib import redirect_stdout
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import ACCEPTANCE_RESULTS
from junctionrl import harness
from junctionrl.agent import select_action
from junctionrl.baselines import VehicleActuated, stage_demand
from junctionrl.cli import main
from junctionrl.config import CROSSINGS, LANES, DemandSchedule, make_config
from junctionrl.env import JunctionEnv
from junctionrl.nn import Network, forward, loss_and_grads
from junctionrl.rewards import CATALOGUE
from junctionrl.signals import GREEN, INTERGREEN, conflicting_greens
from junctionrl.sim import new_world, spawn_arrivals
from reward_oracle import oracle_rewards


def record(n, ok, detail):
    ACCEPTANCE_RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 1

def test_criterion_01_reward_oracle(tmp_path):
    start = time.perf_counter()
    cfg = make_config()
    worst = 0.0
    checked = 0
    stored_ok = True
    for controller in ("mo", "va", "random"):
        out = tmp_path / f"{controller}.jsonl"
        harness.trace(cfg, controller, "peak", 1, "queues_pln", out)
        records = [json.loads(line) for line in out.read_text().splitlines()]
        for rec in records[1:]:
            expected = oracle_rewards(rec)
            assert set(expected) == set(rec["rewards"]) == set(CATALOGUE)
            for name, value in rec["rewards"].items():
                worst = max(worst, abs(value - expected[name]))
                checked += 1
            stored_ok &= abs(rec["reward"] - expected["queues_pln"]) <= 1e-9
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and stored_ok and elapsed < 60
    record(1, ok, f"{checked} reward values, max |diff| {worst:.2e}, {elapsed:.1f} s")


def test_criterion_01b_literal_forms(tmp_path):
    # the typeset variants go through the same oracle
    cfg = make_config(overrides={"rewards": {"literal_mode": True}})
    out = tmp_path / "lit.jsonl"
    harness.trace(cfg, "random", "peak", 2, "delta_queues_pln", out)
    worst = 0.0
    for line in out.read_text().splitlines()[1:]:
        rec = json.loads(line)
        expected = oracle_rewards(rec)
        worst = max(worst, max(abs(v - expected[k]) for k, v in rec["rewards"].items()))
    assert worst <= 1e-9


# ---------------------------------------------------------------- 2

def _loss(net, x, a, y):
    q = forward(net, x)
    err = q[np.arange(len(a)), a] - y
    return float(np.mean(err * err))


def _check_components(net, x, a, y, components, h=1e-5):
    """Relative error for components with a non-negligible gradient, absolute error otherwise."""
    _, grads = loss_and_grads(net, x, a, y)
    worst_rel = worst_abs = 0.0
    n_rel = 0
    for p_idx, pos in components:
        p = net.params[p_idx]
        orig = p[pos]
        p[pos] = orig + h
        up = _loss(net, x, a, y)
        p[pos] = orig - h
        down = _loss(net, x, a, y)
        p[pos] = orig
        num = (up - down) / (2 * h)
        ana = grads[p_idx][pos]
        scale = max(abs(num), abs(ana))
        if scale > 1e-7:
            worst_rel = max(worst_rel, abs(num - ana) / scale)
            n_rel += 1
        else:
            worst_abs = max(worst_abs, abs(num - ana))
    return worst_rel, worst_abs, n_rel


def test_criterion_02_gradient_check():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_rel = worst_abs = 0.0
    n_rel_total = 0
    for k in range(5):
        hidden = (8, 16) if k % 2 == 0 else (16, 8)
        net = Network.init((12, *hidden, 3), seed=k)
        for p in net.params:
            p += rng.normal(0, 0.05, p.shape)
        x = rng.random((5, 12))
        a = rng.integers(0, 3, 5)
        y = rng.normal(0, 1, 5)
        comps = [(i, np.unravel_index(j, p.shape)) for i, p in enumerate(net.params) for j in range(p.size)]
        r, ab, n = _check_components(net, x, a, y, comps)
        worst_rel, worst_abs, n_rel_total = max(worst_rel, r), max(worst_abs, ab), n_rel_total + n

    net = Network.init((280, 500, 1000, 3), seed=7)
    x = rng.random((4, 280))
    a = np.array([0, 1, 2, 1])
    y = forward(net, x)[np.arange(4), a] + rng.normal(0, 0.5, 4)
    _, grads = loss_and_grads(net, x, a, y)
    live, dead = [], []
    for i, g in enumerate(grads):
        flat = np.flatnonzero(np.abs(g) > 1e-7)
        zero = np.flatnonzero(np.abs(g) <= 1e-7)
        pick = rng.choice(flat, size=min(250, flat.size), replace=False)
        live += [(i, np.unravel_index(j, g.shape)) for j in pick]
        if zero.size:
            dead += [(i, np.unravel_index(j, g.shape)) for j in rng.choice(zero, size=min(25, zero.size),
                                                                            replace=False)]
    r, ab, n = _check_components(net, x, a, y, live + dead)
    worst_rel, worst_abs = max(worst_rel, r), max(worst_abs, ab)
    elapsed = time.perf_counter() - start
    ok = worst_rel <= 1e-4 and worst_abs <= 1e-8 and n >= 1000 and elapsed < 120
    record(2, ok, f"small nets {n_rel_total} + full net {n} components, max rel err {worst_rel:.2e}, "
                  f"max abs err on zero gradients {worst_abs:.1e}, {elapsed:.1f} s")


# ---------------------------------------------------------------- 3

def _checked_episode(cfg, controller, seed, rate):
    env = JunctionEnv(cfg)
    policy = harness.make_policy(cfg, controller, seed=seed)
    demand = replace(cfg.demand, vehicle_rate=rate)
    env.reset(seed, demand)
    policy.reset()
    tm = env.ctrl.timing
    problems = {"conflict": 0, "min_green": 0, "conservation": 0, "collision": 0}
    runs = []
    spacing = cfg.sim.spacing

    def on_step(e):
        w = e.world
        if conflicting_greens(e.last_signal):
            problems["conflict"] += 1
        st = e.ctrl.state
        key = None if st.mode == INTERGREEN else st.active_stage
        if runs and runs[-1][0] == key:
            runs[-1][1] += 1
        else:
            runs.append([key, 1])
        held = sum(len(b) for b in w.holding.values())
        if not (w.veh_generated == w.veh_entered + held
                and w.veh_entered == w.veh_exited + w.vehicles_in_network()
                and w.ped_entered == w.ped_exited + w.peds_in_network()):
            problems["conservation"] += 1
        for lane in LANES:
            q = w.lanes[lane]
            for lead, follow in zip(q, q[1:]):
                if lead.position - follow.position < spacing - 1e-9:
                    problems["collision"] += 1

    while env.run_to_decision(on_step):
        env.close_interval()
        env.act(policy.decide(env.frame, env.ctrl, env.observation()))
    for stage, length in runs[:-1]:
        if stage is None:
            continue
        needed = tm.stage1 if stage == 1 else tm.min_green
        if length < needed:
            problems["min_green"] += 1
    return problems


def test_criterion_03_safety_and_conservation():
    start = time.perf_counter()
    cfg = make_config()
    totals = {"conflict": 0, "min_green": 0, "conservation": 0, "collision": 0}
    rng = np.random.default_rng(3)
    controllers = ("random", "mo", "va")
    for ep in range(100):
        rate = float(rng.choice([1200.0, 1714.0, 2117.0, 2400.0, 2571.0]))
        seed = int(rng.integers(2**31))
        for k, v in _checked_episode(cfg, controllers[ep % 3], seed, rate).items():
            totals[k] += v
    elapsed = time.perf_counter() - start
    ok = not any(totals.values()) and elapsed < 300
    record(3, ok, f"100 episodes, violations {totals}, {elapsed:.1f} s")


# ------------------------------------------------------------ 4 to 6

@pytest.fixture(scope="session")
def desk_queues_runs(tmp_path_factory):
    """Two complete desk-profile training runs of the Queues reward with one seed."""
    cfg = make_config("desk")
    dirs = []
    for name in ("run_a", "run_b"):
        d = tmp_path_factory.mktemp(name)
        harness.train(cfg, "queues", d, seed=11)
        dirs.append(d)
    return cfg, dirs


@pytest.mark.slow
def test_criterion_04_training_determinism(desk_queues_runs):
    cfg, (a, b) = desk_queues_runs
    compared = []
    same = True
    for r in range(cfg.training.replicas):
        for fname in ("training_log.csv", "weights.bin", "target.bin"):
            fa, fb = a / f"replica_{r}" / fname, b / f"replica_{r}" / fname
            same &= fa.read_bytes() == fb.read_bytes()
            compared.append(fname)
    sel_a = json.loads((a / "selection.json").read_text())
    sel_b = json.loads((b / "selection.json").read_text())
    same &= sel_a == sel_b
    record(4, same, f"{len(compared)} files byte-compared across two {cfg.training.episodes}-episode runs "
                    f"x {cfg.training.replicas} replicas")


@pytest.mark.slow
def test_criterion_05_degenerate_learning(tmp_path):
    start = time.perf_counter()
    cfg = make_config("desk", {
        "junction": {"arm_weights": {"N": 0.5, "S": 0.5, "E": 0.0, "W": 0.0}},
        "demand": {"vehicle_rate": 1800.0, "ped_rate": 0.0},
        "training": {"curriculum": False, "selection_scenario": "custom"},
    })
    harness.train(cfg, "queues", tmp_path, seed=5)
    ck = harness.best_checkpoint(tmp_path)
    _, rows = harness.evaluate(cfg, "dqn", "custom", 5, seed=123, checkpoint=ck)
    share = float(np.mean([r["green_share_2"] for r in rows]))
    elapsed = time.perf_counter() - start
    ok = share >= 0.9 and elapsed < 15 * 60
    record(5, ok, f"greedy Stage 2 green share {share:.3f} over 5 runs, {elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_06_directional_reproduction(desk_queues_runs, tmp_path):
    start = time.perf_counter()
    cfg, (run_a, _) = desk_queues_runs
    checkpoints = {"queues": harness.best_checkpoint(run_a)}
    harness.train(cfg, "avg_speed_occ", tmp_path / "aso", seed=11)
    checkpoints["avg_speed_occ"] = harness.best_checkpoint(tmp_path / "aso")
    mo, _ = harness.evaluate(cfg, "mo", "normal", 20, seed=2000)
    verdicts = []
    lines = [f"MO veh {mo.vehicle_mean:.2f} ped {mo.ped_mean:.2f} combined {mo.combined_mean:.2f}"]
    for reward, ck in checkpoints.items():
        s, _ = harness.evaluate(cfg, "dqn", "normal", 20, seed=2000, checkpoint=ck, reward_label=reward)
        better = s.combined_mean < mo.combined_mean
        peds = s.ped_mean < 0.5 * mo.ped_mean
        verdicts += [better, peds]
        lines.append(f"{reward} veh {s.vehicle_mean:.2f} ped {s.ped_mean:.2f} combined {s.combined_mean:.2f} "
                     f"(combined<MO: {better}, ped<50% MO: {peds})")
    elapsed = time.perf_counter() - start
    ok = all(verdicts) and elapsed < 3600
    record(6, ok, "; ".join(lines) + f"; {elapsed / 60:.1f} min (training for queues shared with criterion 4)")


# ---------------------------------------------------------------- 7

def _va_episode(cfg, seed, demand):
    env = JunctionEnv(cfg)
    va = VehicleActuated(dt=cfg.sim.delta_t)
    env.reset(seed, demand)
    va.reset()
    max_steps = va.max_green_steps
    stats = {"over_cap": 0, "missed_extension": 0, "extensions": 0, "at_cap": 0,
             "missed_ped": 0, "ped_calls": 0}

    def on_step(e):
        st = e.ctrl.state
        if st.mode == GREEN and st.elapsed_steps > max_steps:
            stats["over_cap"] += 1

    while env.run_to_decision(on_step):
        env.close_interval()
        st = env.ctrl.state
        active = st.active_stage
        demand_now = stage_demand(env.frame)
        choice = va.decide(env.frame, env.ctrl)
        if active in (2, 4) and demand_now[active] and st.elapsed_steps < max_steps:
            stats["extensions"] += 1
            stats["missed_extension"] += choice != active
        if st.elapsed_steps >= max_steps:
            stats["at_cap"] += 1
            stats["over_cap"] += choice == active
        if demand_now[3] and not demand_now[2] and not demand_now[4] and active != 3:
            stats["ped_calls"] += 1
            stats["missed_ped"] += choice != 3
        env.act(choice)
    return stats, env.metrics()


def _mo_brute_force(frame, active):
    sums = {
        2: sum(frame.lanes[LANES.index(lane)].queue for lane in ("N0", "N1", "S0", "S1")),
        3: sum(frame.peds[CROSSINGS.index(c)].queue for c in CROSSINGS),
        4: sum(frame.lanes[LANES.index(lane)].queue for lane in ("E0", "W0")),
    }
    best = max(sums.values())
    winners = [s for s in (2, 3, 4) if sums[s] == best]
    return active if active in winners else winners[0]


def test_criterion_07_baseline_behaviour():
    cfg = make_config()
    totals = {}
    for seed, rate in enumerate([1714.0, 2117.0, 2400.0, 2571.0]):
        s, _ = _va_episode(cfg, seed, replace(cfg.demand, vehicle_rate=rate))
        for k, v in s.items():
            totals[k] = totals.get(k, 0) + v
    # constant scaling keeps pedestrians arriving with no vehicle demand
    ped_only, metrics = _va_episode(cfg, 9, replace(cfg.demand, vehicle_rate=0.0, ped_scaling="constant"))
    served = metrics.peds_exited > 0 and ped_only["ped_calls"] > 0 and ped_only["missed_ped"] == 0

    mo_frames = mismatches = 0
    env = JunctionEnv(cfg)
    policy = harness.make_policy(cfg, "mo")
    seed = 0
    while mo_frames < 10000:
        env.reset(100 + seed, replace(cfg.demand, vehicle_rate=[1714.0, 2117.0, 2400.0][seed % 3]))
        while env.run_to_decision():
            env.close_interval()
            choice = policy.decide(env.frame, env.ctrl, None)
            mismatches += choice != _mo_brute_force(env.frame, env.ctrl.state.active_stage)
            mo_frames += 1
            env.act(choice)
        seed += 1

    ok = (totals["over_cap"] == 0 and totals["missed_extension"] == 0 and totals["at_cap"] > 0
          and served and mismatches == 0)
    record(7, ok, f"VA: {totals['extensions']} extension checks, {totals['at_cap']} cap hits, "
                  f"{totals['over_cap']} over cap, {ped_only['ped_calls']} button-only calls "
                  f"({ped_only['missed_ped']} missed); MO: {mismatches} mismatches over {mo_frames} frames")


# ---------------------------------------------------------------- 8

def test_criterion_08_epsilon_greedy():
    rng = np.random.default_rng(8)
    q = np.array([0.3, -1.0, 2.0])
    draws = [select_action(q, 1.0, rng) for _ in range(30000)]
    counts = np.bincount(draws, minlength=3)
    p_value = chisquare(counts).pvalue
    greedy_ok = all(select_action(v, 0.0, rng) == int(np.argmax(v)) for v in rng.normal(size=(5000, 3)))
    ok = p_value > 0.01 and greedy_ok
    record(8, ok, f"counts {counts.tolist()}, chi-square p = {p_value:.3f}, greedy always argmax: {greedy_ok}")


# ---------------------------------------------------------------- 9

def test_criterion_09_scenario_rates():
    cfg = make_config()
    details = []
    ok = True
    horizon = cfg.sim.episode_steps * cfg.sim.delta_t
    for name, rate in harness.SCENARIO_RATES.items():
        counts = []
        for rep in range(200):
            demand = DemandSchedule(vehicle_rate=rate, ped_rate=0.0)
            w = new_world(cfg.sim, cfg.junction, demand, seed=harness.derive_seed(9, rep, int(rate)))
            for _ in range(cfg.sim.episode_steps):
                w.step_count += 1
                spawn_arrivals(w, demand)
            counts.append(w.veh_generated)
        expected = rate * horizon / 3600.0
        sigma = math.sqrt(expected / len(counts))
        mean = float(np.mean(counts))
        z = (mean - expected) / sigma
        ok &= abs(z) <= 3
        details.append(f"{name}: {mean * 3600 / horizon:.1f} veh/h (z = {z:+.2f})")
    record(9, ok, "; ".join(details))


# ---------------------------------------------------------------- 10

TABLE_ROWS = [
    "Queues", "Queues Sq.", "Queues PLN", "Δ Queues", "Δ Queues PLN",
    "Average Speed - Wait", "Average Speed - Occ", "Average Speed AD - Wait", "Average Speed AD - Occ",
    "Wait Time", "Wait Time P80", "Wait Time P95",
    "Wait Time AD", "Wait Time AD P80", "Wait Time AD P95",
    "Δ Wait Time", "Δ Wait Time P80", "Δ Wait Time P95",
    "Delay", "Delay P80", "Delay P95",
    "Delay AD", "Delay AD P80", "Delay AD P95",
    "Δ Delay", "Δ Delay P80", "Δ Delay P95",
    "Throughput", "Throughput P80", "Throughput P95",
]


def test_criterion_10_catalogue():
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["list-rewards"])
    pairs = [line.split("\t") for line in buf.getvalue().strip().splitlines()]
    names = [p[0] for p in pairs]
    labels = [p[1] for p in pairs]
    ok = (code == 0 and len(pairs) == 30 and len(set(names)) == 30
          and sorted(labels) == sorted(TABLE_ROWS))
    record(10, ok, f"{len(pairs)} configurations, {len(set(labels) & set(TABLE_ROWS))} matched table rows")
