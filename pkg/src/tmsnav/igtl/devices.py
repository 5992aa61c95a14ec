"""Device-name conventions shared by the server and its clients.

OpenIGTLink device names are limited to 20 ASCII bytes, so node names longer
than eight characters are abbreviated in their STATUS device names.
"""
from __future__ import annotations

from .codec import DEVICE_NAME_LEN, EncodingError

TF_PREFIX = "RTMS_TF_"
FID_PREFIX = "RTMS_FID_"
STATUS_PREFIX = "RTMS_STATUS_"

CMD_DEVICE = "RTMS_STATUS_CMD"
TARGET_DEVICE = "RTMS_TF_TARGET"
IMAGE_FIDUCIALS_DEVICE = "RTMS_FID_IMAGE"
SERVER_DEVICE = "RTMS_STATUS_SERVER"

NODE_DEVICES = {
    "DETECTOR": "RTMS_STATUS_DETECTOR",
    "CALIBRATOR": "RTMS_STATUS_CALIB",
    "REGISTER": "RTMS_STATUS_REGISTER",
    "TRACKER": "RTMS_STATUS_TRACKER",
    "CONTROLLER": "RTMS_STATUS_CTRL",
}


def _checked(name: str) -> str:
    if len(name.encode("ascii")) > DEVICE_NAME_LEN:
        raise EncodingError(f"device name {name!r} exceeds {DEVICE_NAME_LEN} bytes")
    return name


def transform_device(frame_id: str) -> str:
    return _checked(TF_PREFIX + frame_id.upper())


def fiducial_device(set_name: str) -> str:
    return _checked(FID_PREFIX + set_name.upper())


def status_device(node: str) -> str:
    return NODE_DEVICES.get(node.upper()) or _checked(STATUS_PREFIX + node.upper())


def fiducial_label(index: int) -> str:
    """Label carried implicitly by point ``index`` of a fiducial POLYDATA."""
    return f"F{index + 1}"
