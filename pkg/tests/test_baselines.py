import numpy as np
import pytest

from junctionrl.baselines import MaxOccupancy, VAConfig, VehicleActuated, make_baseline, mo_decide, \
    stage_queue_sums
from junctionrl.config import ControllerConfig, DemandSchedule, make_config
from junctionrl.env import JunctionEnv
from junctionrl.harness import run_controlled
from junctionrl.sensing import LaneSensorSnapshot, PedSensorSnapshot, SensorFrame
from junctionrl.signals import SignalController


def frame(qv=(0,) * 6, counts=None, qp=(0,) * 4):
    counts = counts or qv
    lanes = tuple(LaneSensorSnapshot(q, c, 0.0, 0.0, (0.0,) * c, 0) for q, c in zip(qv, counts))
    peds = tuple(PedSensorSnapshot(q, 0.0, q > 0) for q in qp)
    return SensorFrame(0.0, lanes, peds)


def ctrl_at_decision(stage):
    ctrl = SignalController(ControllerConfig(initial_stage=stage), 0.6)
    while not ctrl.is_decision_point():
        ctrl.tick()
    return ctrl


def test_mo_examples():
    # N-S 7, E-W 3, peds 2
    f = frame(qv=(2, 2, 2, 1, 2, 1), qp=(1, 1, 0, 0))
    assert stage_queue_sums(f) == {2: 7, 3: 2, 4: 3}
    assert mo_decide(f, ctrl_at_decision(4)) == 2
    f = frame(qv=(2, 2, 2, 2, 0, 0), qp=(3, 3, 2, 1))
    assert mo_decide(f, ctrl_at_decision(2)) == 3
    assert mo_decide(frame(), ctrl_at_decision(4)) == 4


def test_mo_tie_breaks():
    f = frame(qv=(1, 0, 0, 0, 1, 0), qp=(1, 0, 0, 0))
    assert mo_decide(f, ctrl_at_decision(3)) == 3
    assert mo_decide(f, ctrl_at_decision(2)) == 2


def test_va_extends_on_detection():
    va = VehicleActuated(VAConfig(), 0.6)
    ctrl = ctrl_at_decision(2)
    f = frame(counts=(1, 0, 0, 0, 0, 0), qv=(0,) * 6, qp=(0, 1, 0, 0))
    assert va.decide(f, ctrl) == 2


def test_va_rotates_to_pedestrians_without_vehicles():
    va = VehicleActuated(VAConfig(), 0.6)
    ctrl = ctrl_at_decision(2)
    f = frame(qp=(0, 0, 1, 0))
    assert va.decide(f, ctrl) == 3


def test_va_holds_without_any_demand():
    va = VehicleActuated(VAConfig(), 0.6)
    assert va.decide(frame(), ctrl_at_decision(4)) == 4


def test_va_extension_lasts_three_holds():
    va = VehicleActuated(VAConfig(), 0.6)
    ctrl = ctrl_at_decision(2)
    busy = frame(counts=(1, 0, 0, 0, 0, 0), qv=(0,) * 6, qp=(1, 0, 0, 0))
    idle = frame(qp=(1, 0, 0, 0))
    assert va.decide(busy, ctrl) == 2
    ctrl.request_stage(2)
    ctrl.tick()
    assert [va.decide(idle, ctrl) for _ in range(2)] == [2, 2]
    assert va.decide(idle, ctrl) == 3


def test_va_forced_rotation_at_max_green():
    va = VehicleActuated(VAConfig(max_green=60.0), 0.6)
    ctrl = ctrl_at_decision(2)
    busy = frame(counts=(3, 3, 3, 3, 0, 0), qv=(0,) * 6)
    while True:
        choice = va.decide(busy, ctrl)
        if choice != 2:
            break
        ctrl.request_stage(choice)
        ctrl.tick()
    assert ctrl.elapsed_in_mode == pytest.approx(60.0)
    assert choice == 4


def test_make_baseline():
    assert isinstance(make_baseline("mo"), MaxOccupancy)
    assert isinstance(make_baseline("va"), VehicleActuated)
    with pytest.raises(ValueError):
        make_baseline("fixed")


@pytest.mark.parametrize("name", ["mo", "va"])
def test_baselines_respect_controller_invariants(name):
    cfg = make_config()
    env = JunctionEnv(cfg)
    policy = make_baseline(name)
    greens = []
    run_controlled(env, policy, 4, DemandSchedule(vehicle_rate=2117),
                   on_decision=lambda e, ctx, stage: greens.append(stage))
    assert set(greens) <= {2, 3, 4} and len(greens) > 10
