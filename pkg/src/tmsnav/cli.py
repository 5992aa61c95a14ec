"""Command-line entry points: ``tmsnav serve``, ``tmsnav run`` and ``tmsnav codec``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import queue
import signal
import sys
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

from . import __version__
from .igtl.codec import (
    HEADER_SIZE,
    CodecError,
    IncompleteFrameError,
    IntegrityError,
    PolyDataBody,
    StatusBody,
    TransformBody,
    decode_frame,
    decode_header,
    encode,
    make_message,
)
from .igtl.devices import CMD_DEVICE, IMAGE_FIDUCIALS_DEVICE, TARGET_DEVICE
from .igtl.transport import DEFAULT_PORT, EndpointConfig, StartupError, connect, serve
from .scene.tree import SceneError
from .sim.scenario import Scenario, ScenarioError, load_scenario
from .sim.tracker import Tracker
from .spatial.registration import target_registration_error
from .spatial.transform import RigidTransform, compose, rotation_distance, translation_distance
from .workflow.engine import WorkflowEngine
from .workflow.loop import EngineLoop

logger = logging.getLogger("tmsnav")

PORT_ENV = "RTMS_IGTL_PORT"
PHASES = ("Calibration", "Registration", "Navigation")
REPLY_TIMEOUT = 60.0

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
BUNDLED_SCENARIO = os.path.join(DATA_DIR, "scenario.yaml")
BUNDLED_SCRIPT = os.path.join(DATA_DIR, "session.txt")

STEP_PHASE = {
    "START_CALIB": "Calibration", "PIVOT": "Calibration", "ANCHOR": "Calibration",
    "START_REG": "Registration", "FIDUCIALS": "Registration", "COLLECT": "Registration",
    "COLLECT_ALL": "Registration", "REGISTER": "Registration",
    "START_NAV": "Navigation", "TARGET": "Navigation",
}


class CliError(Exception):
    pass


def build_engine(scenario: Scenario, seed: Optional[int] = None) -> WorkflowEngine:
    tree = scenario.scene.build_tree()
    world = scenario.build_world(tree)
    tracker = Tracker(world, scenario.noise(seed), scenario.tracker_rate_hz)
    return WorkflowEngine(tree, world, tracker, sync_rate_hz=scenario.scene.sync_rate_hz)


def _load(scenario_path: str, urdf_path: Optional[str], seed: Optional[int]) -> Scenario:
    if not os.path.exists(scenario_path):
        raise CliError(f"scenario not found: {scenario_path}")
    try:
        scenario = load_scenario(scenario_path, urdf_path, seed)
    except (ScenarioError, SceneError, OSError) as exc:
        raise CliError(str(exc)) from exc
    if not os.path.exists(scenario.scene.urdf_path):
        raise CliError(f"URDF not found: {scenario.scene.urdf_path}")
    return scenario


# -- script ------------------------------------------------------------------

@dataclass
class ScriptStep:
    line: int
    name: str
    args: List[str]
    text: str


def parse_script(text: str) -> List[ScriptStep]:
    steps = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        name = tokens[0].upper()
        if name == "TARGET" and len(tokens) != 7:
            raise CliError(f"script line {n}: TARGET needs x y z roll pitch yaw")
        if name == "WAIT" and len(tokens) != 2:
            raise CliError(f"script line {n}: WAIT needs a duration in seconds")
        if name in ("TARGET", "WAIT"):
            try:
                [float(t) for t in tokens[1:]]
            except ValueError:
                raise CliError(f"script line {n}: {name} arguments must be numbers") from None
        steps.append(ScriptStep(n, name, tokens[1:], line))
    return steps


def target_message(args: Sequence[str]):
    x, y, z, roll, pitch, yaw = (float(a) for a in args)
    pose = RigidTransform.from_rpy(math.radians(roll), math.radians(pitch), math.radians(yaw),
                                   (x, y, z))
    return make_message(TARGET_DEVICE, TransformBody.from_matrix(pose.as_matrix()))


# -- report --------------------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    seed: int
    phases: Dict[str, str] = field(default_factory=lambda: {p: "NOT_RUN" for p in PHASES})
    failure: Optional[Dict[str, object]] = None
    metrics: Dict[str, object] = field(default_factory=dict)
    message_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v == "OK" for v in self.phases.values())

    def as_dict(self) -> dict:
        out = {"scenario": self.scenario, "seed": self.seed, "ok": self.ok,
               "phases": dict(self.phases), "failure": self.failure,
               "message_counts": dict(sorted(self.message_counts.items()))}
        out.update(self.metrics)
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def lines(self) -> List[str]:
        flat: List[Tuple[str, object]] = []

        def walk(prefix, value):
            if isinstance(value, dict):
                for k in sorted(value):
                    walk(f"{prefix}.{k}" if prefix else str(k), value[k])
            elif isinstance(value, list):
                flat.append((prefix, " ".join(repr(v) for v in value)))
            else:
                flat.append((prefix, value))

        walk("", self.as_dict())
        return [f"{k}={v}" for k, v in flat]


def _pose_dict(pose: RigidTransform) -> dict:
    return {"translation": [float(v) for v in pose.translation],
            "quaternion_wxyz": [float(v) for v in pose.rotation]}


def collect_metrics(engine: WorkflowEngine) -> dict:
    """Ground-truth comparisons; runs on the engine loop thread."""
    world = engine.world
    m: Dict[str, object] = {
        "sim_time_s": engine.now,
        "phase_history": list(engine.phase_history),
        "final_phase": engine.phase.value,
        "unknown_tags": engine.unknown_tags,
        "pivot_residual_mm": None, "pivot_tip_error_mm": None,
        "base_error_mm": None, "base_error_rad": None,
        "fre_rms_mm": None, "tre_mm": None,
        "coil_error_mm": None, "coil_error_rad": None, "coil_pose": None,
        "convergence_time_s": engine.convergence_time,
    }
    pivot = engine.calibration.pivot
    if pivot is not None:
        m["pivot_residual_mm"] = float(pivot.residual_rms)
        m["pivot_tip_error_mm"] = float(math.dist(pivot.tip_offset, world.stylus_tip))
    base = engine.calibration.base
    if base is not None:
        m["base_error_mm"] = translation_distance(base, world.base)
        m["base_error_rad"] = rotation_distance(base, world.base)
    result = engine.registration.result
    if result is not None:
        m["fre_rms_mm"] = float(result.fre_rms)
    if engine.target is not None:
        target = engine.target.pose
        if result is not None:
            m["tre_mm"] = target_registration_error(result, world.image_to_head, target.translation)
        truth = compose(compose(world.head_pose(), world.image_to_head), target)
        coil = world.coil_pose()
        m["coil_error_mm"] = translation_distance(coil, truth)
        m["coil_error_rad"] = rotation_distance(coil, truth)
        m["coil_pose"] = _pose_dict(coil)
    return m


# -- run ---------------------------------------------------------------------------

class _Driver:
    """Client side of a scripted run; waits for each reply by subcode."""

    def __init__(self, client):
        self.client = client
        self.replies = client.subscribe(type_name="STATUS")
        self.seq = 0

    def request(self, message) -> StatusBody:
        self.seq += 1
        self.client.send(message)
        while True:
            try:
                item = self.replies.get(timeout=REPLY_TIMEOUT)
            except queue.Empty:
                raise CliError(f"no reply to message {self.seq} within {REPLY_TIMEOUT:.0f} s")
            body = item.message.body
            if body.subcode == self.seq:
                return body

    def command(self, text: str) -> StatusBody:
        return self.request(make_message(CMD_DEVICE, StatusBody(1, 0, "", text)))


def _execute_script(steps, driver: _Driver, loop: EngineLoop, scenario: Scenario,
                    report: RunReport, out: TextIO) -> None:
    for step in steps:
        phase = STEP_PHASE.get(step.name)
        if step.name == "WAIT":
            loop.call(lambda e, s=float(step.args[0]): e.advance(s))
            continue
        if step.name == "FIDUCIALS":
            world_fids = loop.call(lambda e: e.world.fiducials_image.as_array())
            replies = [driver.request(make_message(
                IMAGE_FIDUCIALS_DEVICE, PolyDataBody.from_points(world_fids)))]
        elif step.name == "COLLECT_ALL":
            replies = []
            for label in scenario.fiducial_labels:
                replies.append(driver.command(f"COLLECT {label}"))
                if not replies[-1].ok:
                    break
        elif step.name == "TARGET":
            replies = [driver.request(target_message(step.args))]
        else:
            replies = [driver.command(step.text)]
        for body in replies:
            print(f"[{step.line}] {body.error_name}: {body.status_message}", file=out)
        bad = next((b for b in replies if not b.ok), None)
        if phase is not None:
            if bad is None and report.phases[phase] == "NOT_RUN":
                report.phases[phase] = "OK"
        if bad is not None:
            if phase is not None:
                report.phases[phase] = bad.error_name
            report.failure = {"line": step.line, "step": step.text,
                              "error_name": bad.error_name, "message": bad.status_message}
            return


def cmd_run(scenario_path: str, urdf_path: Optional[str] = None,
            script_path: Optional[str] = None, report_path: Optional[str] = None,
            seed: Optional[int] = None, out: TextIO = sys.stdout) -> Tuple[int, RunReport]:
    """Replay a script against an in-process server over loopback."""
    scenario = _load(scenario_path, urdf_path, seed)
    script_path = script_path or BUNDLED_SCRIPT
    if not os.path.exists(script_path):
        raise CliError(f"script not found: {script_path}")
    with open(script_path, "r", encoding="utf-8") as fh:
        steps = parse_script(fh.read())

    engine = build_engine(scenario, seed)
    report = RunReport(scenario.name, scenario.seed if seed is None else seed)
    server = serve(EndpointConfig("127.0.0.1", 0, "server"))
    loop = EngineLoop(engine, server).start()
    client = None
    try:
        client = connect("127.0.0.1", server.port)
        driver = _Driver(client)
        _execute_script(steps, driver, loop, scenario, report, out)
        report.metrics = loop.call(collect_metrics)
        report.message_counts = loop.call(lambda e: dict(e.counts))
    finally:
        if client is not None:
            client.close()
        loop.stop()
        server.close()

    nav = report.phases["Navigation"]
    if nav == "OK":
        thresholds = engine.world.robot
        err = report.metrics.get("coil_error_mm")
        if (report.metrics.get("convergence_time_s") is None or err is None
                or err >= thresholds.translation_threshold
                or report.metrics["coil_error_rad"] >= thresholds.rotation_threshold):
            report.phases["Navigation"] = "NAV_FAIL"
            report.failure = report.failure or {"step": "navigation",
                                                "error_name": "NAV_FAIL",
                                                "message": "coil did not converge on the target"}
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    for line in report.lines():
        print(line, file=out)
    return (0 if report.ok else 1), report


# -- serve ---------------------------------------------------------------------------

def cmd_serve(scenario_path: str, urdf_path: Optional[str] = None, port: int = DEFAULT_PORT,
              seed: Optional[int] = None, host: str = "0.0.0.0",
              stop: Optional[threading.Event] = None, ready=None) -> int:
    """Run simulator, engine and server in real time until interrupted or ``stop`` is set."""
    scenario = _load(scenario_path, urdf_path, seed)
    engine = build_engine(scenario, seed)
    try:
        server = serve(EndpointConfig(host, port, "server"))
    except StartupError as exc:
        raise CliError(str(exc)) from exc
    loop = EngineLoop(engine, server, realtime=True).start()
    logger.info("serving scenario %r on %s:%d", scenario.name, *server.address)
    if ready is not None:
        ready(server)
    stop = stop or threading.Event()
    try:
        while not stop.wait(0.2):
            pass
    except KeyboardInterrupt:
        logger.info("interrupted")
    finally:
        loop.call(lambda e: e.shutdown(), timeout=5.0)
        for s in server.open_sessions():
            s.flush(1.0)
        loop.stop()
        server.close()
    logger.info("stopped in phase %s", engine.phase.value)
    return 0


# -- codec --------------------------------------------------------------------------

def _frames(data: bytes):
    """Yield (index, offset, message or exception, size) over a byte stream."""
    offset = 0
    index = 0
    while offset < len(data):
        if len(data) - offset < HEADER_SIZE:
            yield index, offset, IncompleteFrameError(
                f"{len(data) - offset} trailing bytes", offset, len(data) - offset), len(data) - offset
            return
        try:
            header = decode_header(data[offset:offset + HEADER_SIZE])
        except CodecError as exc:
            yield index, offset, exc, len(data) - offset
            return
        size = HEADER_SIZE + header.body_size
        if offset + size > len(data):
            yield index, offset, IncompleteFrameError(
                f"frame needs {size} bytes, {len(data) - offset} left", offset,
                len(data) - offset), len(data) - offset
            return
        try:
            message, _ = decode_frame(data[offset:offset + size])
            yield index, offset, message, size
        except CodecError as exc:
            yield index, offset, exc, size
        offset += size
        index += 1


def cmd_codec(subcommand: str, path: str, out: TextIO = sys.stdout) -> int:
    if not os.path.exists(path):
        raise CliError(f"file not found: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    failures = 0
    for index, offset, item, size in _frames(data):
        if isinstance(item, Exception):
            failures += 1
            kind = "CRC FAIL" if isinstance(item, IntegrityError) else "CORRUPT"
            print(f"frame {index} @{offset}: {kind}: {item}", file=out)
            continue
        frame = data[offset:offset + size]
        if subcommand == "inspect":
            print(f"frame {index} @{offset}: type={item.type_name} device={item.device_name} "
                  f"version={item.version} ts={item.timestamp_sec}+{item.timestamp_frac}/2^32 "
                  f"body={size - HEADER_SIZE} crc=OK", file=out)
        else:
            same = encode(item) == frame
            failures += 0 if same else 1
            print(f"frame {index} @{offset}: {item.type_name} {item.device_name} "
                  f"{'identical' if same else 'DIFFERS'}", file=out)
    # inspect is diagnostic only; roundtrip is the check
    return 1 if failures and subcommand == "roundtrip" else 0


# -- main -------------------------------------------------------------------------------

def _default_port() -> int:
    value = os.environ.get(PORT_ENV)
    if not value:
        return DEFAULT_PORT
    try:
        return int(value)
    except ValueError:
        raise CliError(f"{PORT_ENV}={value!r} is not a port number") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmsnav", description="Robot-assisted TMS navigation server")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", default=BUNDLED_SCENARIO)
        p.add_argument("--urdf", default=None, help="override the scenario's URDF")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("serve", help="serve the simulated setup over OpenIGTLink")
    common(p)
    p.add_argument("--port", type=int, default=None, help=f"default ${PORT_ENV} or {DEFAULT_PORT}")
    p.add_argument("--host", default="0.0.0.0")

    p = sub.add_parser("run", help="replay a scripted session over loopback")
    common(p)
    p.add_argument("--script", default=BUNDLED_SCRIPT)
    p.add_argument("--report", default=None, help="write the JSON report here")

    p = sub.add_parser("codec", help="inspect or round-trip a file of frames")
    p.add_argument("action", choices=("inspect", "roundtrip"))
    p.add_argument("path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "serve":
            port = args.port if args.port is not None else _default_port()
            stop = threading.Event()
            signal.signal(signal.SIGTERM, lambda *_: stop.set())
            return cmd_serve(args.scenario, args.urdf, port, args.seed, args.host, stop=stop)
        if args.command == "run":
            code, _ = cmd_run(args.scenario, args.urdf, args.script, args.report, args.seed)
            return code
        return cmd_codec(args.action, args.path)
    except (CliError, FileNotFoundError) as exc:
        print(f"tmsnav: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
