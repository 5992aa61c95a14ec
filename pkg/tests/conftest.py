import os
import random
import string

import numpy as np
import pytest

from tmsnav.igtl.codec import Message, PolyDataBody, StatusBody, TransformBody, make_message

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "data")
GOLDEN = os.path.join(DATA, "golden")
PKG_DATA = os.path.join(HERE, "..", "src", "tmsnav", "data")
BUNDLED_SCENARIO = os.path.normpath(os.path.join(PKG_DATA, "scenario.yaml"))
HEAD_MOTION_SCENARIO = os.path.normpath(os.path.join(PKG_DATA, "head_motion.yaml"))
BUNDLED_SCRIPT = os.path.normpath(os.path.join(PKG_DATA, "session.txt"))
SCENE_URDF = os.path.normpath(os.path.join(PKG_DATA, "scene.urdf"))

_NAME_CHARS = string.ascii_uppercase + string.digits + "_"


def random_message(rng: random.Random) -> Message:
    """Seeded random TRANSFORM / STATUS / POLYDATA message with wire-exact fields."""
    device = "".join(rng.choice(_NAME_CHARS) for _ in range(rng.randint(1, 20)))
    kind = rng.randrange(3)
    if kind == 0:
        vals = np.array([rng.uniform(-1e4, 1e4) for _ in range(12)], dtype=np.float32)
        body = TransformBody(tuple(float(v) for v in vals))
    elif kind == 1:
        text = "".join(rng.choice(string.printable[:94] + " ") for _ in range(rng.randint(0, 200)))
        body = StatusBody(rng.randrange(0, 0x10000), rng.randint(-2 ** 63, 2 ** 63 - 1),
                          "".join(rng.choice(_NAME_CHARS) for _ in range(rng.randint(0, 20))),
                          text.rstrip("\0"))
    else:
        n = rng.randint(0, 12)
        pts = np.array([[rng.uniform(-500, 500) for _ in range(3)] for _ in range(n)])
        polys = []
        if n >= 3:
            for _ in range(rng.randint(0, 4)):
                polys.append(tuple(rng.randrange(n) for _ in range(rng.randint(3, 5))))
        body = PolyDataBody.from_points(pts.reshape(-1, 3), polys)
    return Message(device, body, rng.randrange(0, 2 ** 32), rng.randrange(0, 2 ** 32))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def status_cmd(text: str) -> Message:
    return make_message("RTMS_STATUS_CMD", StatusBody(1, 0, "", text))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
