"""URDF parsing for kinematic chains.

Supports the subset needed for kinematics: ``robot``, ``link``, and
``joint`` elements with ``origin``, ``axis``, ``limit``, ``parent``, and
``child``.  Visual, collision, and inertial data are ignored.  Joint
``rpy`` follows the URDF convention of extrinsic x-y-z rotations.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

__all__ = [
    "UrdfError",
    "UrdfJoint",
    "UrdfModel",
    "parse_urdf",
    "load_urdf",
    "serialize_urdf",
    "extract_chain",
    "CONTINUOUS_LIMIT_SENTINEL",
]

SUPPORTED_JOINT_TYPES = ("fixed", "revolute", "continuous", "prismatic")

# Bound substituted for continuous joints when a consumer insists on
# finite limits (documented sentinel; parsing itself stores +-inf).
CONTINUOUS_LIMIT_SENTINEL = math.pi * 1e6

_AXIS_NORM_TOL = 1e-9


class UrdfError(ValueError):
    """Raised for malformed or unsupported URDF content."""


@dataclass(frozen=True)
class UrdfJoint:
    name: str
    type: str
    parent: str
    child: str
    origin_xyz: tuple[float, float, float]
    origin_rpy: tuple[float, float, float]
    axis: tuple[float, float, float]
    lower: float
    upper: float
    velocity: float

    @property
    def actuated(self) -> bool:
        return self.type != "fixed"


@dataclass(frozen=True)
class UrdfModel:
    name: str
    links: tuple[str, ...]
    joints: tuple[UrdfJoint, ...]
    root: str

    def joint_by_child(self) -> dict[str, UrdfJoint]:
        return {j.child: j for j in self.joints}

    def joints_by_parent(self) -> dict[str, list[UrdfJoint]]:
        out: dict[str, list[UrdfJoint]] = {}
        for j in self.joints:
            out.setdefault(j.parent, []).append(j)
        return out


def _parse_triplet(text: str | None, default, what: str) -> tuple[float, float, float]:
    if text is None:
        return default
    parts = text.split()
    if len(parts) != 3:
        raise UrdfError(f"{what} must hold 3 numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as err:
        raise UrdfError(f"bad number in {what}: {text!r}") from err


def _parse_float(elem, attr: str, default: float) -> float:
    raw = elem.get(attr)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as err:
        raise UrdfError(f"bad {attr} value {raw!r}") from err


def _normalize_axis(axis, joint_name: str) -> tuple[float, float, float]:
    n = math.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
    if n < _AXIS_NORM_TOL:
        raise UrdfError(f"joint {joint_name!r} has zero axis")
    if abs(n - 1.0) <= _AXIS_NORM_TOL:
        return tuple(axis)
    return (axis[0] / n, axis[1] / n, axis[2] / n)


def parse_urdf(document: str) -> UrdfModel:
    """Parse a URDF XML document into a validated model."""
    try:
        root_el = ET.fromstring(document)
    except ET.ParseError as err:
        raise UrdfError(f"malformed XML: {err}") from err
    if root_el.tag != "robot":
        raise UrdfError(f"expected <robot> root element, got <{root_el.tag}>")
    name = root_el.get("name", "robot")

    links: list[str] = []
    for link_el in root_el.findall("link"):
        link_name = link_el.get("name")
        if not link_name:
            raise UrdfError("link without a name")
        if link_name in links:
            raise UrdfError(f"duplicate link {link_name!r}")
        links.append(link_name)
    if not links:
        raise UrdfError("URDF has no links")

    joints: list[UrdfJoint] = []
    for joint_el in root_el.findall("joint"):
        joints.append(_parse_joint(joint_el))

    _validate_tree(links, joints)
    root = _find_root(links, joints)
    return UrdfModel(name=name, links=tuple(links), joints=tuple(joints), root=root)


def _parse_joint(joint_el) -> UrdfJoint:
    jname = joint_el.get("name")
    if not jname:
        raise UrdfError("joint without a name")
    jtype = joint_el.get("type")
    if jtype not in SUPPORTED_JOINT_TYPES:
        raise UrdfError(f"joint {jname!r} has unsupported type {jtype!r}")
    if joint_el.find("mimic") is not None:
        raise UrdfError(f"joint {jname!r} uses unsupported mimic element")

    parent_el = joint_el.find("parent")
    child_el = joint_el.find("child")
    if parent_el is None or child_el is None:
        raise UrdfError(f"joint {jname!r} is missing parent or child")
    parent = parent_el.get("link")
    child = child_el.get("link")
    if not parent or not child:
        raise UrdfError(f"joint {jname!r} has parent/child without a link name")

    origin_el = joint_el.find("origin")
    xyz = _parse_triplet(
        origin_el.get("xyz") if origin_el is not None else None,
        (0.0, 0.0, 0.0),
        f"joint {jname!r} origin xyz",
    )
    rpy = _parse_triplet(
        origin_el.get("rpy") if origin_el is not None else None,
        (0.0, 0.0, 0.0),
        f"joint {jname!r} origin rpy",
    )

    axis_el = joint_el.find("axis")
    axis = _parse_triplet(
        axis_el.get("xyz") if axis_el is not None else None,
        (1.0, 0.0, 0.0),
        f"joint {jname!r} axis",
    )
    axis = _normalize_axis(axis, jname)

    limit_el = joint_el.find("limit")
    if jtype in ("revolute", "prismatic"):
        if limit_el is None:
            raise UrdfError(f"{jtype} joint {jname!r} is missing limits")
        lower = _parse_float(limit_el, "lower", 0.0)
        upper = _parse_float(limit_el, "upper", 0.0)
        if lower > upper:
            raise UrdfError(f"joint {jname!r} has lower > upper limit")
        velocity = _parse_float(limit_el, "velocity", math.inf)
    elif jtype == "continuous":
        lower, upper = -math.inf, math.inf
        velocity = _parse_float(limit_el, "velocity", math.inf) if limit_el is not None else math.inf
    else:  # fixed
        lower = upper = 0.0
        velocity = 0.0

    return UrdfJoint(
        name=jname,
        type=jtype,
        parent=parent,
        child=child,
        origin_xyz=xyz,
        origin_rpy=rpy,
        axis=axis,
        lower=lower,
        upper=upper,
        velocity=velocity,
    )


def _validate_tree(links: list[str], joints: list[UrdfJoint]) -> None:
    link_set = set(links)
    seen_joint_names = set()
    child_count: dict[str, int] = {}
    for j in joints:
        if j.name in seen_joint_names:
            raise UrdfError(f"duplicate joint {j.name!r}")
        seen_joint_names.add(j.name)
        if j.parent not in link_set:
            raise UrdfError(f"joint {j.name!r} references unknown parent link {j.parent!r}")
        if j.child not in link_set:
            raise UrdfError(f"joint {j.name!r} references unknown child link {j.child!r}")
        child_count[j.child] = child_count.get(j.child, 0) + 1
        if child_count[j.child] > 1:
            raise UrdfError(f"link {j.child!r} has multiple parent joints")


def _find_root(links: list[str], joints: list[UrdfJoint]) -> str:
    children = {j.child for j in joints}
    roots = [l for l in links if l not in children]
    if len(roots) != 1:
        raise UrdfError(f"expected exactly one root link, found {len(roots)}: {roots}")
    root = roots[0]

    by_parent: dict[str, list[str]] = {}
    for j in joints:
        by_parent.setdefault(j.parent, []).append(j.child)
    reachable = {root}
    frontier = [root]
    while frontier:
        link = frontier.pop()
        for child in by_parent.get(link, ()):
            if child not in reachable:
                reachable.add(child)
                frontier.append(child)
    if len(reachable) != len(links):
        missing = sorted(set(links) - reachable)
        raise UrdfError(f"links unreachable from root (cycle?): {missing}")
    return root


def load_urdf(path) -> UrdfModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_urdf(fh.read())


def serialize_urdf(model: UrdfModel) -> str:
    """Write the supported subset back to XML (parse/serialize round-trips)."""
    lines = [f'<robot name="{model.name}">']
    for link in model.links:
        lines.append(f'  <link name="{link}"/>')
    for j in model.joints:
        lines.append(f'  <joint name="{j.name}" type="{j.type}">')
        lines.append(f'    <parent link="{j.parent}"/>')
        lines.append(f'    <child link="{j.child}"/>')
        xyz = " ".join(repr(v) for v in j.origin_xyz)
        rpy = " ".join(repr(v) for v in j.origin_rpy)
        lines.append(f'    <origin xyz="{xyz}" rpy="{rpy}"/>')
        axis = " ".join(repr(v) for v in j.axis)
        lines.append(f'    <axis xyz="{axis}"/>')
        if j.type in ("revolute", "prismatic"):
            vel = f' velocity="{repr(j.velocity)}"' if math.isfinite(j.velocity) else ""
            lines.append(
                f'    <limit lower="{repr(j.lower)}" upper="{repr(j.upper)}"{vel}/>'
            )
        elif j.type == "continuous" and math.isfinite(j.velocity):
            lines.append(f'    <limit velocity="{repr(j.velocity)}"/>')
        lines.append("  </joint>")
    lines.append("</robot>")
    return "\n".join(lines)


def extract_chain(model: UrdfModel, base: str, tip: str) -> list[UrdfJoint]:
    """Joints along the unique path from ``base`` to ``tip``, in order."""
    link_set = set(model.links)
    if base not in link_set:
        raise UrdfError(f"unknown link {base!r}")
    if tip not in link_set:
        raise UrdfError(f"unknown link {tip!r}")
    if base == tip:
        return []
    by_child = model.joint_by_child()
    chain: list[UrdfJoint] = []
    link = tip
    while link != base:
        joint = by_child.get(link)
        if joint is None:
            raise UrdfError(f"link {tip!r} is not in the subtree of {base!r}")
        chain.append(joint)
        link = joint.parent
    chain.reverse()
    return chain
