import math

import numpy as np
import pytest

from conftest import BUNDLED_SCENARIO, HEAD_MOTION_SCENARIO
from tmsnav.sim.scenario import ScenarioError, load_scenario, scenario_from_mapping
from tmsnav.sim.tracker import NoiseModel, Tracker, tracker_observe
from tmsnav.sim.world import (
    COIL_TAG,
    HEAD_TAG,
    STYLUS_TAG,
    MotionProfile,
    SimRobotState,
    robot_command,
    sim_step,
    step_robot,
)
from tmsnav.spatial.transform import (
    RigidTransform,
    apply,
    compose,
    rotation_distance,
    translation_distance,
)


@pytest.fixture
def scenario():
    return load_scenario(BUNDLED_SCENARIO)


@pytest.fixture
def world(scenario):
    return scenario.build_world(scenario.scene.build_tree())


# -- tracker -------------------------------------------------------------------------

def test_noiseless_observation_is_ground_truth(world):
    obs = dict(tracker_observe(world, 0.0, NoiseModel()))
    assert obs[HEAD_TAG] == world.head_pose(0.0)
    assert obs[STYLUS_TAG] == world.stylus_pose(0.0)
    assert obs[COIL_TAG] == compose(compose(world.base, world.robot.current), world.flange_to_tag)


def test_different_seed_differs(world):
    a = tracker_observe(world, 0.0, NoiseModel(0.3, 0.01, seed=4))
    assert tracker_observe(world, 0.0, NoiseModel(0.3, 0.01, seed=5)) != a


def test_same_seed_identical_streams(world):
    n1, n2 = NoiseModel(0.3, 0.01, seed=9), NoiseModel(0.3, 0.01, seed=9)
    for k in range(20):
        assert tracker_observe(world, k / 30, n1) == tracker_observe(world, k / 30, n2)


def test_translation_noise_statistics():
    noise = NoiseModel(sigma_translation=0.5, seed=123)
    base = RigidTransform.from_translation((10, 20, 30))
    samples = np.array([noise.perturb(base).translation for _ in range(10000)]) - base.translation
    std = samples.std(axis=0, ddof=1)
    assert np.all(np.abs(std - 0.5) < 0.05 * 0.5)


def test_rotation_noise_scale():
    noise = NoiseModel(sigma_rotation=0.01, seed=1)
    angles = [rotation_distance(RigidTransform.identity(), noise.perturb(RigidTransform.identity()))
              for _ in range(4000)]
    # half-normal mean is sigma * sqrt(2 / pi)
    assert np.mean(angles) == pytest.approx(0.01 * math.sqrt(2 / math.pi), rel=0.05)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        NoiseModel(-1.0)


def test_negative_time_rejected(world):
    with pytest.raises(ValueError):
        tracker_observe(world, -0.1, NoiseModel())


def test_occlusion_window(world):
    world.occlusions = [(HEAD_TAG, 1.0, 2.0)]
    assert HEAD_TAG in dict(tracker_observe(world, 0.99, NoiseModel()))
    assert HEAD_TAG not in dict(tracker_observe(world, 1.0, NoiseModel()))
    assert HEAD_TAG in dict(tracker_observe(world, 2.0, NoiseModel()))


def test_tracker_counts_frames(world):
    tracker = Tracker(world)
    tracker.observe()
    tracker.observe(0.5)
    assert tracker.frames == 2 and tracker.period == pytest.approx(1 / 30)


# -- stylus script ---------------------------------------------------------------------

def test_pivot_sweep_keeps_tip_on_pivot(world):
    world.start_pivot_sweep()
    for t in np.linspace(0, 2, 25):
        tip = apply(world.stylus_pose(t), world.stylus_tip)
        np.testing.assert_allclose(tip, world.pivot_point, atol=1e-12)


def test_touch_puts_tip_on_fiducial(world):
    world.touch_fiducial("F3")
    tip = apply(world.stylus_pose(0.0), world.stylus_tip)
    expected = apply(world.head_pose(0.0), dict(world.fiducials_head.points)["F3"])
    np.testing.assert_allclose(tip, expected, atol=1e-12)


def test_touch_unknown_fiducial(world):
    world.touch_fiducial("F99")
    with pytest.raises(KeyError):
        world.stylus_pose()


# -- robot ----------------------------------------------------------------------------

def _robot(**kw):
    return SimRobotState.at(RigidTransform.identity(), **kw)


def test_command_current_pose_converges_immediately():
    assert robot_command(_robot(), RigidTransform.identity()).status == "converged"


def test_far_target_is_moving():
    assert robot_command(_robot(), RigidTransform.from_translation((100, 0, 0))).status == "moving"


def test_target_outside_workspace_faults():
    state = robot_command(_robot(), RigidTransform.from_translation((5000, 0, 0)))
    assert state.status == "fault" and "workspace" in state.fault_reason
    assert step_robot(state, 0.1).current == state.current


def test_straight_line_convergence_time():
    state = robot_command(_robot(max_linear_speed=50.0),
                          RigidTransform.from_translation((100, 0, 0)))
    t = 0.0
    while state.status != "converged":
        state = step_robot(state, 0.1)
        t += 0.1
        assert t < 5
    assert abs(t - 2.0) <= 0.1 + 1e-9
    np.testing.assert_array_equal(state.current.translation, [100, 0, 0])


def test_partition_invariance():
    target = RigidTransform.from_rpy(0.3, -0.2, 0.5, (120, -40, 60))
    start = robot_command(_robot(max_linear_speed=50.0, max_angular_speed=0.5), target)
    a = start
    for _ in range(20):
        a = step_robot(a, 0.05)
    b = start
    for dt in (0.3, 0.1, 0.05, 0.25, 0.3):
        b = step_robot(b, dt)
    assert translation_distance(a.current, b.current) < 1e-9
    assert rotation_distance(a.current, b.current) < 1e-9


def test_no_command_change_keeps_pose():
    state = robot_command(_robot(), RigidTransform.identity())
    assert step_robot(state, 0.1).current == RigidTransform.identity()


def test_nonpositive_dt_rejected():
    with pytest.raises(ValueError):
        step_robot(_robot(), 0.0)


def test_sim_step_advances_time(world):
    robot = robot_command(world.robot, compose(world.robot.current,
                                               RigidTransform.from_translation((10, 0, 0))))
    sim_step(world, robot, 0.5)
    assert world.time == 0.5
    assert world.robot.current != robot.current


# -- motion profile -------------------------------------------------------------------

def test_motion_profile_interpolates_and_steps():
    a = RigidTransform.from_translation((0, 0, 0))
    b = RigidTransform.from_translation((10, 0, 0))
    c = RigidTransform.from_translation((10, 5, 0))
    prof = MotionProfile([(0.0, a), (1.0, b), (2.0, b), (2.0, c)])
    np.testing.assert_allclose(prof.pose_at(0.5).translation, (5, 0, 0))
    assert prof.pose_at(1.999) == b
    assert prof.pose_at(2.0) == c
    assert prof.pose_at(-1.0) == a and prof.pose_at(9.0) == c


def test_motion_profile_needs_ordered_keyframes():
    with pytest.raises(ValueError):
        MotionProfile([(1.0, RigidTransform.identity()), (0.0, RigidTransform.identity())])


# -- scenarios ---------------------------------------------------------------------------

def test_bundled_scenario(scenario, world):
    assert scenario.fiducial_labels == ["F1", "F2", "F3", "F4", "F5"]
    assert scenario.sigma_translation == 0.0
    tree = scenario.scene.build_tree()
    # simulator offsets default to the scene's URDF
    assert world.flange_to_coil == tree.relative_transform("flange", "coil")


def test_head_motion_scenario_has_step():
    sc = load_scenario(HEAD_MOTION_SCENARIO)
    w = sc.build_world(sc.scene.build_tree())
    jump = w.head_pose(14.0).translation - w.head_pose(13.999).translation
    np.testing.assert_array_equal(jump, [0, 5, 0])


def test_fiducials_are_float32_exact(world):
    pts = world.fiducials_image.as_array()
    np.testing.assert_array_equal(pts, pts.astype(np.float32).astype(float))


def test_scenario_fiducial_labels_must_follow_order(tmp_path):
    raw = {"scene": {"urdf": "x.urdf"}, "fiducials_image": {"F2": [0, 0, 0], "F1": [1, 0, 0]}}
    with pytest.raises(ScenarioError):
        scenario_from_mapping(raw, str(tmp_path))


def test_scenario_without_fiducials(tmp_path):
    with pytest.raises(ScenarioError):
        scenario_from_mapping({"scene": {"urdf": "x.urdf"}}, str(tmp_path))


def test_scenario_bad_vector(tmp_path, scenario):
    raw = dict(scenario.raw)
    raw["stylus"] = {"tip_offset": [1, 2]}
    sc = scenario_from_mapping(raw, scenario.base_dir)
    with pytest.raises(ScenarioError):
        sc.build_world(sc.scene.build_tree())


def test_missing_scenario_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "nope.yaml")


def test_seed_override(scenario):
    assert load_scenario(BUNDLED_SCENARIO, seed=99).seed == 99
