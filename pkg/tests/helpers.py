"""Shared builders for engine-level tests."""
import copy
import math

from conftest import BUNDLED_SCENARIO
from tmsnav.igtl.codec import PolyDataBody, StatusBody
from tmsnav.sim.scenario import load_scenario, scenario_from_mapping
from tmsnav.sim.tracker import Tracker
from tmsnav.spatial.transform import RigidTransform
from tmsnav.workflow.engine import WorkflowEngine

TARGET = RigidTransform.from_rpy(0.0, math.radians(10), math.radians(-20), (15, 30, 85))


def make_engine(path=BUNDLED_SCENARIO, seed=None, **overrides):
    """Engine over a scenario file, with top-level keys of the YAML replaced."""
    base = load_scenario(path)
    raw = copy.deepcopy(base.raw)
    raw.update(overrides)
    scenario = scenario_from_mapping(raw, base.base_dir, seed=seed)
    tree = scenario.scene.build_tree()
    world = scenario.build_world(tree)
    engine = WorkflowEngine(tree, world, Tracker(world, scenario.noise()),
                            sync_rate_hz=scenario.scene.sync_rate_hz)
    return engine


def command(engine, text):
    """Run one command; return the STATUS reply body."""
    return engine.handle_command(StatusBody(1, 0, "", text)).body


def calibrated(engine):
    assert command(engine, "START_CALIB").ok
    assert command(engine, "PIVOT 50").ok
    assert command(engine, "ANCHOR 20").ok
    return engine


def registered(engine, labels=None):
    calibrated(engine)
    assert command(engine, "START_REG").ok
    engine.receive_image_fiducials(PolyDataBody.from_points(engine.world.fiducials_image.as_array()))
    for label in labels or engine.world.fiducials_image.labels:
        assert command(engine, f"COLLECT {label}").ok
    reply = command(engine, "REGISTER")
    assert reply.ok, reply.status_message
    return engine


def navigating(engine, target=TARGET):
    from tmsnav.workflow.phases import TargetSpec
    registered(engine)
    assert command(engine, "START_NAV").ok
    engine.set_target(TargetSpec(target))
    return engine
