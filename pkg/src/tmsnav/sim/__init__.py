"""Deterministic stand-in for the tracker, robot and phantom."""
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_mapping
from .tracker import DEFAULT_TRACKER_RATE_HZ, NoiseModel, Tracker, tracker_observe
from .world import (
    COIL_TAG,
    HEAD_TAG,
    STYLUS_TAG,
    MotionProfile,
    SimRobotState,
    SimWorld,
    StylusSweep,
    robot_command,
    sim_step,
    step_robot,
)
