"""Regenerate the OpenIGTLink golden vectors under tests/data/golden.

Requires ``pyigtl`` (pip install pyigtl). TRANSFORM and POLYDATA frames are
packed by pyigtl's own message classes. pyigtl has no STATUS class, so the
STATUS frame is packed by pyigtl's header/CRC machinery around a body laid
out per the published STATUS format (uint16 code, int64 subcode,
char[20] error name, message bytes).
"""
import importlib.metadata
import json
import struct
import sys
from pathlib import Path

import numpy as np
import pyigtl
from pyigtl.messages import MessageBase

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden"

# a half-second fraction keeps pyigtl's bit-search conversion and
# round-to-nearest in exact agreement
TIMESTAMP = 1700000000.5

TRANSFORM = {
    "device_name": "RTMS_TF_COIL",
    "matrix": [[0.0, -1.0, 0.0, 12.5],
               [1.0, 0.0, 0.0, -40.25],
               [0.0, 0.0, 1.0, 310.0],
               [0.0, 0.0, 0.0, 1.0]],
}
STATUS = {
    "device_name": "RTMS_STATUS_TRACKER",
    "code": 1,
    "subcode": -42,
    "error_name": "OK",
    "status_message": "TARGET acknowledged",
}
POLYDATA = {
    "device_name": "RTMS_FID_IMAGE",
    "points": [[10.0, 20.0, 30.0], [-15.5, 4.25, 60.0], [0.0, -32.0, 12.75]],
    "polygons": [[0, 1, 2]],
}


class _StatusMessage(MessageBase):
    def __init__(self, code, subcode, error_name, status_message, timestamp, device_name):
        super().__init__(timestamp=timestamp, device_name=device_name)
        self._message_type = "STATUS"
        self.content = (code, subcode, error_name, status_message)
        self._valid_message = True

    def _pack_content(self):
        code, subcode, error_name, message = self.content
        return (struct.pack("> H q 20s", code, subcode, error_name.encode("ascii"))
                + message.encode("ascii"))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    frames = {
        "transform": pyigtl.TransformMessage(
            np.array(TRANSFORM["matrix"]), timestamp=TIMESTAMP,
            device_name=TRANSFORM["device_name"]).pack(),
        "status": _StatusMessage(STATUS["code"], STATUS["subcode"], STATUS["error_name"],
                                 STATUS["status_message"], TIMESTAMP,
                                 STATUS["device_name"]).pack(),
        "polydata": pyigtl.PolyDataMessage(
            points=np.array(POLYDATA["points"], dtype=np.float32),
            polygons=np.array([3, 0, 1, 2], dtype=np.uint32),
            timestamp=TIMESTAMP, device_name=POLYDATA["device_name"]).pack(),
    }
    for name, frame in frames.items():
        (OUT / f"{name}.bin").write_bytes(frame)
    meta = {
        "generator": f"pyigtl {importlib.metadata.version('pyigtl')}",
        "timestamp": TIMESTAMP,
        "transform": TRANSFORM,
        "status": STATUS,
        "polydata": POLYDATA,
    }
    (OUT / "vectors.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {len(frames)} vectors to {OUT}", file=sys.stderr)


if __name__ == "__main__":
    main()
