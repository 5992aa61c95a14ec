"""Scene configuration: URDF location, per-frame overrides, sync rate."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

from ..spatial.transform import RigidTransform
from .sync import DEFAULT_SYNC_RATE_HZ
from .tree import SceneError, TransformTree
from .urdf import load_urdf


def pose_from_mapping(spec: Mapping) -> RigidTransform:
    """Pose from ``{translation: [x, y, z], rpy_deg: [r, p, y]}`` (``rpy`` in radians also accepted)."""
    if spec is None:
        return RigidTransform.identity()
    xyz = spec.get("translation", spec.get("xyz", (0.0, 0.0, 0.0)))
    if "rpy_deg" in spec:
        rpy = [math.radians(a) for a in spec["rpy_deg"]]
    else:
        rpy = spec.get("rpy", (0.0, 0.0, 0.0))
    if len(xyz) != 3 or len(rpy) != 3:
        raise SceneError(f"pose needs 3 translation and 3 rpy values: {dict(spec)}")
    return RigidTransform.from_rpy(*[float(a) for a in rpy], [float(v) for v in xyz])


@dataclass
class SceneConfig:
    urdf_path: str
    sync_rate_hz: float = DEFAULT_SYNC_RATE_HZ
    frame_overrides: Dict[str, RigidTransform] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sync_rate_hz > 0:
            raise SceneError(f"sync_rate_hz must be > 0, got {self.sync_rate_hz}")

    @classmethod
    def from_mapping(cls, data: Mapping, base_dir: Optional[str] = None,
                     urdf_path: Optional[str] = None) -> "SceneConfig":
        path = urdf_path or data.get("urdf")
        if not path:
            raise SceneError("scene configuration names no URDF")
        if base_dir and not os.path.isabs(path) and urdf_path is None:
            path = os.path.join(base_dir, path)
        overrides = {name: pose_from_mapping(pose)
                     for name, pose in (data.get("frame_overrides") or {}).items()}
        return cls(os.fspath(path), float(data.get("sync_rate_hz", DEFAULT_SYNC_RATE_HZ)),
                   overrides)

    def build_tree(self) -> TransformTree:
        if not os.path.exists(self.urdf_path):
            raise FileNotFoundError(f"URDF not found: {self.urdf_path}")
        tree = load_urdf(self.urdf_path)
        for frame_id, pose in self.frame_overrides.items():
            tree.set_local_transform(frame_id, pose)
        return tree
