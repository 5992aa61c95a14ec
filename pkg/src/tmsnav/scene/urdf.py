"""URDF subset reader: links, fixed/floating joints, origins, meshes, colours.

Lengths are read as authored (the scene convention is millimetres, RAS) and
no axis permutation is applied.
"""
from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from typing import Dict, List, Optional, Tuple

from ..spatial.transform import RigidTransform
from .tree import FrameNode, MeshRef, SceneError, StructureError, TransformTree

SUPPORTED_JOINTS = ("fixed", "floating")


class URDFParseError(SceneError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class UnsupportedJointError(SceneError):
    pass


def _floats(text: Optional[str], n: int, what: str) -> Tuple[float, ...]:
    if text is None:
        return (0.0,) * n
    parts = text.split()
    if len(parts) != n:
        raise URDFParseError(f"{what} needs {n} numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise URDFParseError(f"{what} is not numeric: {text!r}") from None


def origin_to_transform(origin: Optional[ET.Element]) -> RigidTransform:
    if origin is None:
        return RigidTransform.identity()
    xyz = _floats(origin.get("xyz"), 3, "origin xyz")
    roll, pitch, yaw = _floats(origin.get("rpy"), 3, "origin rpy")
    return RigidTransform.from_rpy(roll, pitch, yaw, xyz)


def _color(material: Optional[ET.Element], named: Dict[str, Tuple[float, ...]]):
    if material is None:
        return None
    color = material.find("color")
    if color is not None and color.get("rgba"):
        return _floats(color.get("rgba"), 4, "material rgba")
    return named.get(material.get("name", ""))


def _mesh(link: ET.Element, named, base_dir: Optional[str]) -> Optional[MeshRef]:
    visual = link.find("visual")
    if visual is None:
        return None
    mesh = visual.find("geometry/mesh")
    if mesh is None or not mesh.get("filename"):
        return None
    path = mesh.get("filename")
    if path.startswith("file://"):
        path = path[len("file://"):]
    if base_dir and not os.path.isabs(path) and "://" not in path:
        path = os.path.normpath(os.path.join(base_dir, path))
    return MeshRef(path, _color(visual.find("material"), named))


def parse_urdf(data, base_dir: Optional[str] = None) -> List[FrameNode]:
    """Frames described by URDF ``data`` (bytes or str), root first.

    Relative mesh filenames are resolved against ``base_dir`` when given.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line = exc.position[0] if getattr(exc, "position", None) else None
        raise URDFParseError(f"malformed XML: {exc}", line) from None
    if root.tag != "robot":
        raise URDFParseError(f"expected <robot> root element, found <{root.tag}>")

    named = {}
    for material in root.findall("material"):
        color = material.find("color")
        if material.get("name") and color is not None and color.get("rgba"):
            named[material.get("name")] = _floats(color.get("rgba"), 4, "material rgba")

    links: Dict[str, ET.Element] = {}
    for link in root.findall("link"):
        name = link.get("name")
        if not name:
            raise URDFParseError("<link> without a name")
        if name in links:
            raise StructureError(f"duplicate link {name!r}")
        links[name] = link

    parent_of: Dict[str, Tuple[str, RigidTransform, str]] = {}
    for joint in root.findall("joint"):
        jname = joint.get("name", "?")
        jtype = joint.get("type")
        if jtype not in SUPPORTED_JOINTS:
            raise UnsupportedJointError(
                f"joint {jname!r} has type {jtype!r}; only {SUPPORTED_JOINTS} are supported")
        parent_el, child_el = joint.find("parent"), joint.find("child")
        if parent_el is None or child_el is None:
            raise URDFParseError(f"joint {jname!r} lacks <parent> or <child>")
        parent, child = parent_el.get("link"), child_el.get("link")
        for link_name in (parent, child):
            if link_name not in links:
                raise StructureError(f"joint {jname!r} references unknown link {link_name!r}")
        if child in parent_of:
            raise StructureError(f"link {child!r} has more than one parent")
        parent_of[child] = (parent, origin_to_transform(joint.find("origin")), jtype)

    for start in parent_of:
        seen = {start}
        node = parent_of[start][0]
        while node in parent_of:
            if node in seen:
                raise StructureError(f"joint graph contains a cycle through {node!r}")
            seen.add(node)
            node = parent_of[node][0]

    roots = [name for name in links if name not in parent_of]
    if len(roots) != 1:
        raise StructureError(f"expected exactly one root link, found {roots}")

    nodes = []
    for name, link in links.items():
        mesh = _mesh(link, named, base_dir)
        if name in parent_of:
            parent, local, jtype = parent_of[name]
            nodes.append(FrameNode(name, parent, local, mesh, jtype))
        else:
            nodes.append(FrameNode(name, None, RigidTransform.identity(), mesh, "root"))
    nodes.sort(key=lambda n: n.parent_id is not None)
    return nodes


def load_urdf(path) -> TransformTree:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    return TransformTree(parse_urdf(data, base_dir=os.path.dirname(os.path.abspath(path))))
