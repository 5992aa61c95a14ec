"""Integration-layer engine: detector, calibrator, register, tracker, controller.

The engine is single-threaded. Inbound OpenIGTLink messages go through
:meth:`WorkflowEngine.handle_message`; simulated time advances through
:meth:`WorkflowEngine.tick`. Outbound messages are handed to ``sink``
as ``(session_id, message)`` pairs, ``session_id`` None meaning broadcast.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..igtl.codec import (
    STATUS_OK,
    STATUS_UNKNOWN_ERROR,
    Message,
    PolyDataBody,
    StatusBody,
    TransformBody,
    make_message,
)
from ..igtl.devices import (
    CMD_DEVICE,
    IMAGE_FIDUCIALS_DEVICE,
    TARGET_DEVICE,
    fiducial_label,
    status_device,
)
from ..scene.sync import SceneSynchronizer
from ..scene.tree import TransformTree
from ..sim.tracker import Tracker
from ..sim.world import COIL_TAG, HEAD_TAG, STYLUS_TAG, SimWorld, robot_command, sim_step
from ..spatial.calibration import CalibrationError, anchor_base, pivot_calibrate
from ..spatial.registration import FiducialSet, RegistrationError, register_paired_points
from ..spatial.transform import (
    RigidTransform,
    apply,
    compose,
    invert,
    rotation_distance,
    translation_distance,
)
from .phases import (
    AcquisitionError,
    CalibrationFailed,
    CalibrationState,
    DuplicateFiducialError,
    NavigationFailed,
    Phase,
    PhaseError,
    RegistrationFailed,
    RegistrationState,
    TargetSpec,
    UnknownCommandError,
    WorkflowError,
    is_legal,
)

logger = logging.getLogger(__name__)

DEFAULT_EPOCH = 1_700_000_000.0
DEFAULT_TAG_FRAMES = {HEAD_TAG: "head", STYLUS_TAG: "stylus", COIL_TAG: None}

Sink = Callable[[Optional[int], Message], None]


@dataclass(frozen=True)
class NavigationTelemetry:
    time: float
    desired_coil: RigidTransform          # W_T_C*
    desired_flange_world: RigidTransform  # W_T_F*
    desired_flange: RigidTransform        # B_T_F*
    coil_error_mm: float
    coil_error_rad: float
    robot_status: str


class WorkflowEngine:
    def __init__(self, tree: TransformTree, world: SimWorld, tracker: Tracker,
                 sync_rate_hz: float = 30.0, sink: Optional[Sink] = None,
                 epoch: float = DEFAULT_EPOCH, tag_frames: Optional[Dict] = None,
                 pivot_samples: int = 50, anchor_samples: int = 20):
        self.tree = tree
        self.world = world
        self.tracker = tracker
        self.rate_hz = float(sync_rate_hz)
        self.dt = 1.0 / self.rate_hz
        self.epoch = epoch
        self.sync = SceneSynchronizer(tree, self.rate_hz, epoch=epoch)
        self.sink = sink
        self.tag_frames = dict(DEFAULT_TAG_FRAMES if tag_frames is None else tag_frames)
        self.pivot_samples = pivot_samples
        self.anchor_samples = anchor_samples

        self.phase = Phase.IDLE
        self.calibration = CalibrationState()
        self.registration = RegistrationState()
        self.target: Optional[TargetSpec] = None
        self.target_time: Optional[float] = None
        self.convergence_time: Optional[float] = None
        self.paused = False
        self.ticks = 0
        self.unknown_tags = 0
        self.latest: Dict[str, RigidTransform] = {}
        self.latest_time: Optional[float] = None
        self.telemetry: List[NavigationTelemetry] = []
        self.counts: Counter = Counter()
        self.outbox: List[Tuple[Optional[int], Message]] = []
        self.phase_history: List[str] = [self.phase.value]
        self._inbound_seq: Counter = Counter()
        self._nav_condition = ""

        self._sync_robot_frame()

    # -- output ------------------------------------------------------------

    @property
    def now(self) -> float:
        return self.ticks * self.dt

    def publish(self, message: Message, session_id: Optional[int] = None):
        self.counts[message.device_name] += 1
        if self.sink is not None:
            self.sink(session_id, message)
        else:
            self.outbox.append((session_id, message))

    def status(self, node: str, body: StatusBody) -> Message:
        return make_message(status_device(node), body, self.epoch + self.now)

    def _reply(self, node: str, session_id, seq: int, text: str,
               error: Optional[WorkflowError] = None) -> Message:
        if error is None:
            body = StatusBody(STATUS_OK, seq, "OK", text)
        else:
            body = StatusBody(error.code, seq, error.error_name, f"{text}: {error}")
        message = self.status(node, body)
        self.publish(message, session_id)
        return message

    def _notice(self, node: str, error_name: str, text: str, code: int = STATUS_OK):
        self.publish(self.status(node, StatusBody(code, 0, error_name, text)))

    # -- time --------------------------------------------------------------

    def tick(self) -> List[Message]:
        """Advance one period: robot, tracker, scene, navigation, sync."""
        self.ticks += 1
        now = self.now
        sim_step(self.world, self.world.robot, self.dt)
        self.world.time = now
        self._sync_robot_frame()
        observations = self.tracker.observe(now)
        self.ingest_observation(observations, now)
        if self.phase is Phase.NAVIGATION and self.target is not None and not self.paused:
            try:
                self.navigation_step(now)
                self._set_nav_condition("", now)
            except NavigationFailed as exc:
                self._freeze_robot()
                self._set_nav_condition(str(exc), now)
        messages = self.sync.tick(now)
        for m in messages:
            self.publish(m)
        return messages

    def advance(self, seconds: float) -> int:
        n = int(round(seconds * self.rate_hz))
        for _ in range(n):
            self.tick()
        return n

    def _set_nav_condition(self, problem: str, now: float):
        if problem == self._nav_condition:
            return
        self._nav_condition = problem
        if problem:
            self._notice("TRACKER", "NAV_FAIL", problem, NavigationFailed.code)
        else:
            self._notice("TRACKER", "OK", "navigation resumed")

    def _sync_robot_frame(self):
        if "flange" in self.tree:
            self.tree.set_local_transform("flange", self.world.robot.current)

    # -- detector ----------------------------------------------------------

    def ingest_observation(self, tags: Sequence[Tuple[str, RigidTransform]],
                           now: Optional[float] = None) -> List[str]:
        """Apply one tracker batch to the scene; returns updated frame ids."""
        if self.phase is Phase.IDLE:
            return []
        self.latest = {}
        self.latest_time = self.now if now is None else now
        updated = []
        with self.tree.batch():
            for tag_id, pose in tags:
                if tag_id not in self.tag_frames:
                    self.unknown_tags += 1
                    logger.warning("ignoring observation of unknown tag %r", tag_id)
                    continue
                self.latest[tag_id] = pose
                frame = self.tag_frames[tag_id]
                if frame is not None:
                    self.tree.set_local_transform(frame, pose)
                    updated.append(frame)
        return updated

    # -- phase machine -----------------------------------------------------

    def transition(self, target: Phase):
        if not is_legal(self.phase, target):
            raise PhaseError(f"cannot go from {self.phase.value} to {target.value}")
        if target is Phase.REGISTRATION and not self.calibration.complete:
            raise PhaseError("calibration is incomplete (needs PIVOT and ANCHOR)")
        if target is Phase.NAVIGATION and not self.registration.complete:
            raise PhaseError("no registration result")
        if target is Phase.IDLE:
            self._freeze_robot()
            self.target = None
            self.paused = False
            self._nav_condition = ""
        self.phase = target
        self.phase_history.append(target.value)

    def _freeze_robot(self):
        robot = self.world.robot
        self.world.robot = replace(robot_command(robot, robot.current), status="idle")

    def _require(self, phase: Phase, what: str):
        if self.phase is not phase:
            raise PhaseError(f"{what} needs phase {phase.value}, engine is in {self.phase.value}")

    # -- calibrator --------------------------------------------------------

    def _collect(self, tag: str, n: int, max_ticks: int) -> List[Tuple[RigidTransform, RigidTransform]]:
        samples = []
        for _ in range(max_ticks):
            if len(samples) >= n:
                break
            self.tick()
            if tag in self.latest:
                samples.append((self.latest[tag], self.world.robot.current))
        return samples

    def run_pivot_calibration(self, n_samples: Optional[int] = None):
        self._require(Phase.CALIBRATION, "pivot calibration")
        n = self.pivot_samples if n_samples is None else int(n_samples)
        self.world.start_pivot_sweep()
        try:
            samples = self._collect(STYLUS_TAG, n, 4 * n + 30)
        finally:
            self.world.park_stylus()
        if len(samples) < n:
            raise CalibrationFailed(f"stylus visible in only {len(samples)} of {n} frames")
        try:
            result = pivot_calibrate([pose for pose, _ in samples])
        except CalibrationError as exc:
            raise CalibrationFailed(str(exc)) from exc
        self.calibration.pivot = result
        if "stylus_tip" in self.tree:
            self.tree.set_local_transform("stylus_tip", RigidTransform.from_translation(result.tip_offset))
        return result

    def run_anchor(self, n_samples: Optional[int] = None) -> RigidTransform:
        self._require(Phase.CALIBRATION, "base anchoring")
        n = self.anchor_samples if n_samples is None else int(n_samples)
        samples = self._collect(COIL_TAG, n, 4 * n + 30)
        if len(samples) < max(n, 1):
            raise CalibrationFailed(f"flange tag visible in only {len(samples)} of {n} frames")
        f_t_tag = self.tree.relative_transform("flange", "coil_tag")
        try:
            base = anchor_base(samples, f_t_tag)
        except CalibrationError as exc:
            raise CalibrationFailed(str(exc)) from exc
        self.calibration.base = base
        self.tree.set_local_transform("robot_base", base)
        return base

    # -- register ----------------------------------------------------------

    def receive_image_fiducials(self, body: PolyDataBody) -> FiducialSet:
        pts = body.points_array()
        fiducials = FiducialSet("image", [(fiducial_label(i), p) for i, p in enumerate(pts)])
        self.registration.image_fiducials = fiducials
        return fiducials

    def collect_fiducial(self, label: str) -> np.ndarray:
        self._require(Phase.REGISTRATION, "fiducial collection")
        if not self.calibration.complete:
            raise PhaseError("calibration is incomplete")
        if label in self.registration.collected:
            raise DuplicateFiducialError(f"fiducial {label!r} already collected")
        try:
            self.world.touch_fiducial(label)
            self.world.stylus_pose()
        except KeyError as exc:
            self.world.park_stylus()
            raise AcquisitionError(f"no fiducial {label!r} to touch") from exc
        try:
            self.tick()
        finally:
            self.world.park_stylus()
        if STYLUS_TAG not in self.latest:
            raise AcquisitionError("stylus is occluded")
        if HEAD_TAG not in self.latest:
            raise AcquisitionError("head tag is occluded")
        w_t_s = self.latest[STYLUS_TAG]
        w_t_h = self.latest[HEAD_TAG]
        p_w = apply(w_t_s, self.calibration.pivot.tip_offset)
        p_h = apply(invert(w_t_h), p_w)
        self.registration.collected[label] = p_h
        return p_h

    def run_registration(self, image_fiducials: Optional[FiducialSet] = None):
        self._require(Phase.REGISTRATION, "registration")
        image = image_fiducials or self.registration.image_fiducials
        if image is None:
            raise RegistrationFailed("no image fiducials received")
        collected = self.registration.collected
        missing = [l for l in collected if l not in image.labels]
        if missing:
            raise RegistrationFailed(f"collected labels without image counterpart: {missing}")
        labels = [l for l in image.labels if l in collected]
        if len(labels) < 3:
            raise RegistrationFailed(f"only {len(labels)} fiducials collected; need >= 3")
        moving = FiducialSet("image", [(l, image.as_array([l])[0]) for l in labels])
        fixed = FiducialSet("head", [(l, collected[l]) for l in labels])
        try:
            result = register_paired_points(moving, fixed)
        except RegistrationError as exc:
            raise RegistrationFailed(str(exc)) from exc
        self.registration.result = result
        if "image" in self.tree:
            self.tree.set_local_transform("image", result.transform)
        return result

    # -- tracker / controller ------------------------------------------------

    def set_target(self, spec: TargetSpec):
        self._require(Phase.NAVIGATION, "target update")
        self.target = spec
        self.target_time = self.now
        self.convergence_time = None
        self.paused = False
        if "stim_target" in self.tree:
            self.tree.set_local_transform("stim_target", spec.pose)

    def desired_poses(self, w_t_h: RigidTransform) -> Tuple[RigidTransform, RigidTransform, RigidTransform]:
        """(W_T_C*, W_T_F*, B_T_F*) for head pose ``w_t_h``."""
        h_t_i = self.registration.result.transform
        w_t_c = compose(compose(w_t_h, h_t_i), self.target.pose)
        f_t_c = self.tree.relative_transform("flange", "coil")
        w_t_f = compose(w_t_c, invert(f_t_c))
        b_t_f = compose(invert(self.calibration.base), w_t_f)
        return w_t_c, w_t_f, b_t_f

    def navigation_step(self, now: Optional[float] = None) -> NavigationTelemetry:
        now = self.now if now is None else now
        if self.phase is not Phase.NAVIGATION:
            raise NavigationFailed(f"not navigating (phase {self.phase.value})")
        if self.target is None:
            raise NavigationFailed("no target set")
        if not (self.calibration.complete and self.registration.complete):
            raise NavigationFailed("calibration or registration missing")
        if HEAD_TAG not in self.latest:
            raise NavigationFailed("head tag not visible")
        w_t_c, w_t_f, b_t_f = self.desired_poses(self.latest[HEAD_TAG])
        before = self.world.robot.status
        robot = robot_command(self.world.robot, b_t_f)
        self.world.robot = robot
        if robot.status == "fault":
            if before != "fault":
                self._notice("CONTROLLER", "ROBOT_FAULT", robot.fault_reason, STATUS_UNKNOWN_ERROR)
            raise NavigationFailed(f"robot fault: {robot.fault_reason}")
        actual = compose(compose(self.calibration.base, robot.current),
                         self.tree.relative_transform("flange", "coil"))
        err_mm = translation_distance(actual, w_t_c)
        err_rad = rotation_distance(actual, w_t_c)
        if robot.status == "converged":
            if self.convergence_time is None:
                self.convergence_time = now - self.target_time
            if before != "converged":
                self._notice("CONTROLLER", "OK", f"CONVERGED err={err_mm:.6f}mm")
        telemetry = NavigationTelemetry(now, w_t_c, w_t_f, b_t_f, err_mm, err_rad, robot.status)
        self.telemetry.append(telemetry)
        if (len(self.telemetry) - 1) % max(1, int(round(self.rate_hz))) == 0:
            self._notice("TRACKER", "TRACKING",
                         f"err_mm={err_mm:.6f} err_rad={err_rad:.6e} robot={robot.status}")
        return telemetry

    def on_session_closed(self, session_id: int):
        if self.phase is Phase.NAVIGATION and not self.paused:
            self.paused = True
            self._freeze_robot()
            self._notice("CONTROLLER", "PAUSED",
                         f"session {session_id} disconnected; motion paused until a new target")

    # -- inbound messages --------------------------------------------------

    def handle_message(self, session_id: Optional[int], message: Message) -> Optional[Message]:
        """Dispatch one inbound message; returns the STATUS reply if any."""
        self._inbound_seq[session_id] += 1
        seq = self._inbound_seq[session_id]
        if message.device_name == CMD_DEVICE and isinstance(message.body, StatusBody):
            return self.handle_command(message.body, session_id, seq)
        if message.device_name == TARGET_DEVICE and isinstance(message.body, TransformBody):
            return self._handle_target(message.body, session_id, seq)
        if message.device_name == IMAGE_FIDUCIALS_DEVICE and isinstance(message.body, PolyDataBody):
            fiducials = self.receive_image_fiducials(message.body)
            return self._reply("REGISTER", session_id, seq, f"FIDUCIALS n={len(fiducials)}")
        logger.info("ignoring %s on %r", message.type_name, message.device_name)
        return None

    def _handle_target(self, body: TransformBody, session_id, seq):
        if not body.is_orthonormal(1e-3):
            return self._reply("TRACKER", session_id, seq, "TARGET",
                               WorkflowError("rotation is not orthonormal", "BAD_TARGET"))
        pose = RigidTransform.from_matrix(body.as_matrix(), orthonormalize=True)
        try:
            self.set_target(TargetSpec(pose))
        except WorkflowError as exc:
            return self._reply("TRACKER", session_id, seq, "TARGET", exc)
        p = ", ".join(f"{v:.3f}" for v in pose.translation)
        return self._reply("TRACKER", session_id, seq, f"TARGET acknowledged at ({p})")

    COMMAND_NODES = {
        "START_CALIB": "CALIBRATOR",
        "PIVOT": "CALIBRATOR",
        "ANCHOR": "CALIBRATOR",
        "START_REG": "REGISTER",
        "COLLECT": "REGISTER",
        "REGISTER": "REGISTER",
        "START_NAV": "TRACKER",
        "ABORT": "CONTROLLER",
    }

    def handle_command(self, body: StatusBody, session_id: Optional[int] = None,
                       seq: Optional[int] = None) -> Message:
        """Execute a command string and reply with exactly one STATUS."""
        if seq is None:
            self._inbound_seq[session_id] += 1
            seq = self._inbound_seq[session_id]
        tokens = body.status_message.split()
        name = tokens[0].upper() if tokens else ""
        args = tokens[1:]
        node = self.COMMAND_NODES.get(name, "CONTROLLER")
        try:
            text = self._execute(name, args)
        except WorkflowError as exc:
            return self._reply(node, session_id, seq, name or "<empty>", exc)
        except (ValueError, IndexError) as exc:
            return self._reply(node, session_id, seq, name,
                               UnknownCommandError(f"bad arguments {args}: {exc}"))
        return self._reply(node, session_id, seq, text)

    def _execute(self, name: str, args: List[str]) -> str:
        if name == "START_CALIB":
            self.transition(Phase.CALIBRATION)
        elif name == "START_REG":
            self.transition(Phase.REGISTRATION)
        elif name == "START_NAV":
            self.transition(Phase.NAVIGATION)
        elif name == "ABORT":
            self.transition(Phase.IDLE)
        elif name == "PIVOT":
            r = self.run_pivot_calibration(int(args[0]) if args else None)
            tip = ", ".join(f"{v:.4f}" for v in r.tip_offset)
            return f"PIVOT residual_rms={r.residual_rms:.6g}mm tip=({tip})"
        elif name == "ANCHOR":
            base = self.run_anchor(int(args[0]) if args else None)
            p = ", ".join(f"{v:.3f}" for v in base.translation)
            return f"ANCHOR base=({p})"
        elif name == "COLLECT":
            p = self.collect_fiducial(args[0])
            return f"COLLECT {args[0]} p_H=({', '.join(f'{v:.4f}' for v in p)})"
        elif name == "REGISTER":
            r = self.run_registration()
            return f"REGISTER fre_rms={r.fre_rms:.6g}mm n={len(r.labels)}"
        else:
            raise UnknownCommandError(f"unknown command {name!r}")
        return f"{name} phase={self.phase.value}"

    def shutdown(self):
        """Freeze the robot where it stands and tell clients we are going away."""
        self._freeze_robot()
        self.paused = True
        self._notice("CONTROLLER", "SHUTDOWN", f"server stopping in phase {self.phase.value}")

    def ready_message(self) -> Message:
        body = StatusBody(STATUS_OK, 0, "READY", f"READY phase={self.phase.value}")
        return self.status("CONTROLLER", body)
