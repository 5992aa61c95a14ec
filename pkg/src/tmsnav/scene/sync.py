"""Timer-driven emission of changed frames as TRANSFORM messages."""
from __future__ import annotations

import math
from typing import Callable, List, Optional

from ..igtl.codec import Message, TransformBody, make_message
from ..igtl.devices import transform_device
from .tree import TransformTree

DEFAULT_SYNC_RATE_HZ = 30.0


class SceneSynchronizer:
    """Emit world poses of dirty frames at most once per period.

    Emission slots sit on a fixed grid ``t0 + k / rate`` anchored at the
    first tick, so a caller ticking with jitter still gets ``rate`` emissions
    per second on average. Slots missed entirely are skipped, never replayed.
    """

    def __init__(self, tree: TransformTree, rate_hz: float = DEFAULT_SYNC_RATE_HZ,
                 frames: Optional[List[str]] = None,
                 epoch: float = 0.0,
                 device_for: Callable[[str], str] = transform_device):
        if not rate_hz > 0:
            raise ValueError(f"sync rate must be positive, got {rate_hz}")
        self.tree = tree
        self.rate_hz = float(rate_hz)
        self.period = 1.0 / self.rate_hz
        self.frames = frames
        self.epoch = epoch
        self.device_for = device_for
        self._t0: Optional[float] = None
        self._next_slot = 0
        self.emitted = 0
        if frames is not None:
            for f in frames:
                device_for(f)

    def _due(self, now: float) -> bool:
        if self._t0 is None:
            self._t0 = now
            self._next_slot = 1
            return True
        # small slack absorbs float error when the caller ticks exactly on the grid
        slot = math.floor((now - self._t0) * self.rate_hz + 1e-9)
        if slot >= self._next_slot:
            self._next_slot = slot + 1
            return True
        return False

    def tick(self, now: float) -> List[Message]:
        if not self._due(now):
            return []
        dirty = self.tree.dirty_frames()
        if self.frames is not None:
            allowed = set(self.frames)
            dirty = [f for f in dirty if f in allowed]
        stamp = self.epoch + now
        out = []
        for frame_id in dirty:
            if frame_id == self.tree.root_id:
                continue
            world = self.tree.world_transform(frame_id)
            out.append(make_message(self.device_for(frame_id),
                                    TransformBody.from_matrix(world.as_matrix()), stamp))
        self.tree.clear_dirty(dirty)
        self.emitted += len(out)
        return out
