"""Hierarchical frame tree with lazily cached world transforms."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple

from ..spatial.transform import RigidTransform, compose, invert


class SceneError(Exception):
    pass


class FrameLookupError(SceneError, KeyError):
    pass


class StructureError(SceneError):
    pass


class ImmutableRootError(SceneError):
    pass


@dataclass(frozen=True)
class MeshRef:
    path: str
    rgba: Optional[Tuple[float, float, float, float]] = None


@dataclass
class FrameNode:
    frame_id: str
    parent_id: Optional[str]
    local: RigidTransform = field(default_factory=RigidTransform.identity)
    mesh: Optional[MeshRef] = None
    joint_type: str = "fixed"
    dirty: bool = True


@dataclass(frozen=True)
class ChangeEvent:
    frame_ids: Tuple[str, ...]


class TransformTree:
    """Single-root tree of frames; ``local`` transforms are parent_T_child.

    Mutations mark the touched frame and every descendant dirty. Observers
    registered with :meth:`subscribe` receive one :class:`ChangeEvent` per
    mutation, or one per :meth:`batch` block.
    """

    def __init__(self, nodes: Iterable[FrameNode] = ()):
        self._nodes: Dict[str, FrameNode] = {}
        self._children: Dict[str, List[str]] = {}
        self._cache: Dict[str, RigidTransform] = {}
        self._observers: List[Callable[[ChangeEvent], None]] = []
        self._batch: Optional[List[str]] = None
        self.root_id: Optional[str] = None
        pending = list(nodes)
        roots = [n for n in pending if n.parent_id is None]
        if pending and len(roots) != 1:
            raise StructureError(f"expected exactly one root frame, found {[n.frame_id for n in roots]}")
        # insert parents before children
        placed = set()
        while pending:
            progressed = False
            for node in list(pending):
                if node.parent_id is None or node.parent_id in placed:
                    self._insert(replace(node))
                    placed.add(node.frame_id)
                    pending.remove(node)
                    progressed = True
            if not progressed:
                missing = {n.parent_id for n in pending} - placed - {n.frame_id for n in pending}
                if missing:
                    raise StructureError(f"unknown parent frame(s): {sorted(missing)}")
                raise StructureError(f"frames form a cycle: {sorted(n.frame_id for n in pending)}")

    def _insert(self, node: FrameNode):
        if node.frame_id in self._nodes:
            raise StructureError(f"duplicate frame id {node.frame_id!r}")
        if node.parent_id is None:
            if self.root_id is not None:
                raise StructureError("tree already has a root")
            self.root_id = node.frame_id
        elif node.parent_id not in self._nodes:
            raise StructureError(f"unknown parent {node.parent_id!r} for {node.frame_id!r}")
        node.dirty = True
        self._nodes[node.frame_id] = node
        self._children[node.frame_id] = []
        if node.parent_id is not None:
            self._children[node.parent_id].append(node.frame_id)

    # -- queries -----------------------------------------------------------

    def __contains__(self, frame_id) -> bool:
        return frame_id in self._nodes

    def __len__(self):
        return len(self._nodes)

    @property
    def frame_ids(self) -> List[str]:
        return list(self._nodes)

    def node(self, frame_id: str) -> FrameNode:
        try:
            return self._nodes[frame_id]
        except KeyError:
            raise FrameLookupError(f"unknown frame {frame_id!r}") from None

    def parent(self, frame_id: str) -> Optional[str]:
        return self.node(frame_id).parent_id

    def children(self, frame_id: str) -> List[str]:
        self.node(frame_id)
        return list(self._children[frame_id])

    def path_from_root(self, frame_id: str) -> List[str]:
        path = []
        current: Optional[str] = frame_id
        while current is not None:
            path.append(current)
            current = self.node(current).parent_id
        return path[::-1]

    def descendants(self, frame_id: str) -> List[str]:
        out, stack = [], [frame_id]
        while stack:
            f = stack.pop()
            out.append(f)
            stack.extend(self._children[f])
        return out

    def local_transform(self, frame_id: str) -> RigidTransform:
        return self.node(frame_id).local

    def world_transform(self, frame_id: str) -> RigidTransform:
        """root_T_frame, cached until an ancestor changes."""
        cached = self._cache.get(frame_id)
        if cached is not None:
            return cached
        node = self.node(frame_id)
        if node.parent_id is None:
            world = RigidTransform.identity()
        else:
            world = compose(self.world_transform(node.parent_id), node.local)
        self._cache[frame_id] = world
        return world

    def relative_transform(self, target: str, source: str) -> RigidTransform:
        """target_T_source."""
        return compose(invert(self.world_transform(target)), self.world_transform(source))

    def snapshot(self) -> Mapping[str, RigidTransform]:
        return MappingProxyType({f: self.world_transform(f) for f in self._nodes})

    def dirty_frames(self) -> List[str]:
        return [f for f, n in self._nodes.items() if n.dirty]

    def clear_dirty(self, frame_ids: Optional[Iterable[str]] = None):
        for f in (self._nodes if frame_ids is None else frame_ids):
            self._nodes[f].dirty = False

    # -- mutation ----------------------------------------------------------

    def subscribe(self, callback: Callable[[ChangeEvent], None]):
        self._observers.append(callback)

    @contextmanager
    def batch(self):
        """Coalesce the change notifications of several mutations into one."""
        if self._batch is not None:
            yield
            return
        self._batch = []
        try:
            yield
        finally:
            touched, self._batch = self._batch, None
            if touched:
                self._notify(ChangeEvent(tuple(dict.fromkeys(touched))))

    def _touched(self, frame_ids: List[str]) -> ChangeEvent:
        for f in frame_ids:
            self._nodes[f].dirty = True
            self._cache.pop(f, None)
        event = ChangeEvent(tuple(frame_ids))
        if self._batch is not None:
            self._batch.extend(frame_ids)
        else:
            self._notify(event)
        return event

    def _notify(self, event: ChangeEvent):
        for callback in list(self._observers):
            callback(event)

    def set_local_transform(self, frame_id: str, transform: RigidTransform) -> ChangeEvent:
        node = self.node(frame_id)
        if node.parent_id is None:
            raise ImmutableRootError(f"root frame {frame_id!r} cannot be moved")
        node.local = transform
        return self._touched(self.descendants(frame_id))

    def add_frame(self, frame_id: str, parent_id: str,
                  local: Optional[RigidTransform] = None, mesh: Optional[MeshRef] = None,
                  joint_type: str = "floating") -> ChangeEvent:
        self._insert(FrameNode(frame_id, parent_id, local or RigidTransform.identity(),
                               mesh, joint_type))
        return self._touched([frame_id])

    def reparent(self, frame_id: str, new_parent: str,
                 keep_world: bool = False) -> ChangeEvent:
        node = self.node(frame_id)
        if node.parent_id is None:
            raise ImmutableRootError("the root frame cannot be reparented")
        self.node(new_parent)
        if new_parent in self.descendants(frame_id):
            raise StructureError(f"reparenting {frame_id!r} under {new_parent!r} creates a cycle")
        if keep_world:
            node.local = self.relative_transform(new_parent, frame_id)
        self._children[node.parent_id].remove(frame_id)
        self._children[new_parent].append(frame_id)
        node.parent_id = new_parent
        return self._touched(self.descendants(frame_id))

    def remove_frame(self, frame_id: str) -> ChangeEvent:
        node = self.node(frame_id)
        if node.parent_id is None:
            raise ImmutableRootError("the root frame cannot be removed")
        doomed = self.descendants(frame_id)
        self._children[node.parent_id].remove(frame_id)
        for f in doomed:
            del self._nodes[f]
            del self._children[f]
            self._cache.pop(f, None)
        event = ChangeEvent(tuple(doomed))
        if self._batch is not None:
            self._batch.extend(doomed)
        else:
            self._notify(event)
        return event

    def check_invariants(self):
        """Raise StructureError unless the frames form a single-rooted tree."""
        roots = [f for f, n in self._nodes.items() if n.parent_id is None]
        if len(roots) != 1:
            raise StructureError(f"expected one root, found {roots}")
        seen = set()
        stack = [roots[0]]
        while stack:
            f = stack.pop()
            if f in seen:
                raise StructureError(f"frame {f!r} reachable twice")
            seen.add(f)
            for c in self._children[f]:
                if self._nodes[c].parent_id != f:
                    raise StructureError(f"child list of {f!r} disagrees with {c!r}'s parent")
                stack.append(c)
        if seen != set(self._nodes):
            raise StructureError(f"unreachable frames: {sorted(set(self._nodes) - seen)}")
