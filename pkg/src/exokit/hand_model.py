"""Passive-hand kinematic chain: description format, forward kinematics,
and the thumb coupling function.

The chain is a tree of revolute joints rooted at the palm base frame.
Attachment markers (points fixed to a link) are the quantities the thumb
coupling consumes.  The thumb convention is three joints named
``theta2`` (passive IP flexion), ``theta3`` (mechanically coupled to
theta2), and ``theta4`` (TM abduction/adduction), plus markers named
``distal`` and ``metacarpal``.

Chain-description format (line-oriented text, ``#`` comments, meters and
radians)::

    joint <name> parent=<name|base> origin=<x> <y> <z> <qw> <qx> <qy> <qz> axis=<ax> <ay> <az> limits=<lo> <hi>
    marker <name> joint=<name> offset=<x> <y> <z>
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import FormatError, ToolkitError
from .geometry import Pose, quat_from_axis_angle
from .kvformat import format_number

AXIS_NORM_TOL = 1e-9

BASE = "base"


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: fixed origin pose in the parent frame, local
    rotation axis, and travel limits in radians."""

    name: str
    parent: str
    origin: Pose
    axis: np.ndarray
    limits: tuple[float, float]

    def __post_init__(self):
        axis = np.array(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > AXIS_NORM_TOL:
            raise ValueError(f"joint {self.name!r}: non-unit axis (norm {n!r})")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if lo > hi:
            raise ValueError(f"joint {self.name!r}: limits min {lo} > max {hi}")
        object.__setattr__(self, "limits", (lo, hi))


@dataclass(frozen=True)
class KinematicChain:
    """Ordered joint list (parents precede children) plus named markers.

    ``markers`` maps a marker name to (owning joint name, local offset
    in meters).
    """

    joints: tuple[JointSpec, ...]
    markers: dict[str, tuple[str, np.ndarray]]

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        seen: set[str] = set()
        for j in self.joints:
            if j.name in seen:
                raise ValueError(f"duplicate joint name {j.name!r}")
            if j.parent != BASE and j.parent not in seen:
                raise ValueError(
                    f"joint {j.name!r}: parent {j.parent!r} undefined or out of order")
            seen.add(j.name)
        markers = {}
        for name, (joint, offset) in self.markers.items():
            if joint not in seen:
                raise ValueError(f"marker {name!r}: unknown joint {joint!r}")
            off = np.array(offset, dtype=float).reshape(3)
            off.setflags(write=False)
            markers[name] = (joint, off)
        object.__setattr__(self, "markers", markers)

    def joint(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]


@dataclass(frozen=True)
class PassiveThumbConfig:
    """Passive thumb configuration: IP flexion and TM ab/ad, radians."""

    theta2: float
    theta4: float


@dataclass(frozen=True)
class CouplingFunction:
    """Monotone piecewise-linear map theta2 -> theta3.

    The transmission between the coupled joints is device-specific; the
    default is the identity table."""

    waypoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        wps = tuple((float(a), float(b)) for a, b in self.waypoints)
        if len(wps) < 2:
            raise ValueError("coupling function needs >= 2 waypoints")
        xs = [a for a, _ in wps]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("coupling waypoint abscissae must be strictly increasing")
        object.__setattr__(self, "waypoints", wps)

    @classmethod
    def identity(cls, lo: float = -math.pi, hi: float = math.pi) -> "CouplingFunction":
        return cls(((lo, lo), (hi, hi)))


def coupling_theta3(f: CouplingFunction, theta2: float) -> float:
    """Piecewise-linear interpolation through the coupling waypoints.

    Queries outside the table clamp to the end ordinates (joint stops)."""
    xs = np.array([a for a, _ in f.waypoints])
    ys = np.array([b for _, b in f.waypoints])
    return float(np.interp(theta2, xs, ys))


def fk_world_transforms(chain: KinematicChain,
                        angles: Mapping[str, float]) -> dict[str, Pose]:
    """Palm-base-frame pose of every joint frame; missing angles are 0."""
    world: dict[str, Pose] = {}
    for j in chain.joints:
        parent = world[j.parent] if j.parent != BASE else Pose.identity()
        theta = float(angles.get(j.name, 0.0))
        rot = Pose(quat_from_axis_angle(j.axis, theta), np.zeros(3))
        world[j.name] = parent.compose(j.origin).compose(rot)
    return world


def fk_marker(chain: KinematicChain, angles: Mapping[str, float],
              marker: str) -> np.ndarray:
    if marker not in chain.markers:
        raise ToolkitError(f"chain has no marker {marker!r}")
    joint, offset = chain.markers[marker]
    return fk_world_transforms(chain, angles)[joint].apply(offset)


def thumb_angles(chain: KinematicChain, f: CouplingFunction,
                 theta2: float, theta4: float) -> dict[str, float]:
    """Joint-angle assignment for the thumb convention (no limit checks)."""
    angles = {"theta2": theta2, "theta4": theta4}
    if any(j.name == "theta3" for j in chain.joints):
        angles["theta3"] = coupling_theta3(f, theta2)
    return angles


def fk_attachment_points(chain: KinematicChain, f: CouplingFunction,
                         q_p: PassiveThumbConfig) -> tuple[np.ndarray, np.ndarray]:
    """Distal and metacarpal attachment points in the palm-base frame."""
    for marker in ("distal", "metacarpal"):
        if marker not in chain.markers:
            raise ToolkitError(f"chain has no marker {marker!r}")
    for name, theta in (("theta2", q_p.theta2), ("theta4", q_p.theta4)):
        try:
            lo, hi = chain.joint(name).limits
        except KeyError:
            raise ToolkitError(f"chain has no joint {name!r}") from None
        if not lo <= theta <= hi:
            raise ToolkitError(
                f"{name}={theta} outside joint limits [{lo}, {hi}]")
    angles = thumb_angles(chain, f, q_p.theta2, q_p.theta4)
    world = fk_world_transforms(chain, angles)
    out = []
    for marker in ("distal", "metacarpal"):
        joint, offset = chain.markers[marker]
        out.append(world[joint].apply(offset))
    return out[0], out[1]


# --- chain-description text format ---------------------------------------

_TOKEN = re.compile(r"\S+")


def _tokenize(line: str) -> list[tuple[str, int]]:
    """(token, 1-based column) pairs; the comment tail is stripped."""
    code = line.split("#", 1)[0]
    return [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(code)]


class _LineReader:
    def __init__(self, tokens: list[tuple[str, int]], lineno: int):
        self.tokens = tokens
        self.lineno = lineno
        self.pos = 0

    def error(self, message: str, column: int | None = None) -> FormatError:
        if column is None:
            column = self.tokens[-1][1] + len(self.tokens[-1][0]) if self.tokens else 1
        return FormatError(message, line=self.lineno, column=column)

    def take(self, what: str) -> tuple[str, int]:
        if self.pos >= len(self.tokens):
            raise self.error(f"expected {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def take_keyed(self, key: str) -> tuple[str, int]:
        tok, col = self.take(f"{key}=<value>")
        if not tok.startswith(key + "="):
            raise self.error(f"expected {key}=<value>, got {tok!r}", col)
        return tok[len(key) + 1:], col

    def take_floats(self, first: str, count: int, what: str) -> tuple[np.ndarray, int]:
        """``first`` is the value glued to the key; count-1 bare tokens follow."""
        vals = [first]
        col0 = self.tokens[self.pos - 1][1]
        for _ in range(count - 1):
            tok, _ = self.take(f"number ({what})")
            vals.append(tok)
        try:
            return np.array([float(v) for v in vals]), col0
        except ValueError:
            raise self.error(f"bad number in {what}", col0) from None

    def finish(self):
        if self.pos != len(self.tokens):
            tok, col = self.tokens[self.pos]
            raise self.error(f"unexpected trailing token {tok!r}", col)


def parse_chain(text: str) -> KinematicChain:
    """Parse a chain-description document.

    Joints may appear in any order; they are topologically sorted (file
    order is preserved among joints whose parents are already placed).
    """
    joints: list[tuple[JointSpec, int]] = []
    names: dict[str, int] = {}
    markers: dict[str, tuple[str, np.ndarray]] = {}
    marker_lines: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(raw)
        if not tokens:
            continue
        rd = _LineReader(tokens, lineno)
        kind, kcol = rd.take("'joint' or 'marker'")
        if kind == "joint":
            name, ncol = rd.take("joint name")
            parent, _ = rd.take_keyed("parent")
            ofirst, _ = rd.take_keyed("origin")
            ovals, ocol = rd.take_floats(ofirst, 7, "origin")
            afirst, _ = rd.take_keyed("axis")
            avals, acol = rd.take_floats(afirst, 3, "axis")
            lfirst, _ = rd.take_keyed("limits")
            lvals, lcol = rd.take_floats(lfirst, 2, "limits")
            rd.finish()
            if name in names:
                raise FormatError(f"duplicate joint name {name!r}", lineno, ncol)
            try:
                origin = Pose(ovals[3:7], ovals[0:3])
            except ValueError as exc:
                raise FormatError(f"origin: {exc}", lineno, ocol) from None
            if lvals[0] > lvals[1]:
                raise FormatError("limits min > max", lineno, lcol)
            try:
                spec = JointSpec(name, parent, origin, avals, (lvals[0], lvals[1]))
            except ValueError as exc:
                raise FormatError(str(exc), lineno, acol) from None
            names[name] = lineno
            joints.append((spec, lineno))
        elif kind == "marker":
            name, ncol = rd.take("marker name")
            joint, _ = rd.take_keyed("joint")
            ofirst, _ = rd.take_keyed("offset")
            ovals, _ = rd.take_floats(ofirst, 3, "offset")
            rd.finish()
            if name in markers:
                raise FormatError(f"duplicate marker name {name!r}", lineno, ncol)
            markers[name] = (joint, ovals)
            marker_lines[name] = lineno
        else:
            raise FormatError(f"unknown record type {kind!r}", lineno, kcol)

    ordered = _toposort(joints)
    for mname, (joint, _) in markers.items():
        if joint not in names:
            raise FormatError(f"marker {mname!r}: unknown joint {joint!r}",
                              line=marker_lines[mname])
    return KinematicChain(tuple(ordered), markers)


def _toposort(joints: list[tuple[JointSpec, int]]) -> list[JointSpec]:
    placed: dict[str, JointSpec] = {}
    pending = list(joints)
    while pending:
        progressed = False
        remaining = []
        for spec, lineno in pending:
            if spec.parent == BASE or spec.parent in placed:
                placed[spec.name] = spec
                progressed = True
            else:
                remaining.append((spec, lineno))
        if not progressed:
            spec, lineno = remaining[0]
            known = {s.name for s, _ in joints}
            if spec.parent not in known:
                raise FormatError(
                    f"joint {spec.name!r}: unknown parent {spec.parent!r}", line=lineno)
            raise FormatError(
                f"cycle detected involving joint {spec.name!r}", line=lineno)
        pending = remaining
    return list(placed.values())


def serialize_chain(chain: KinematicChain) -> str:
    lines = []
    for j in chain.joints:
        origin = " ".join(format_number(v) for v in
                          (*j.origin.translation, *j.origin.rotation))
        axis = " ".join(format_number(v) for v in j.axis)
        limits = " ".join(format_number(v) for v in j.limits)
        lines.append(f"joint {j.name} parent={j.parent} origin={origin} "
                     f"axis={axis} limits={limits}")
    for name, (joint, offset) in chain.markers.items():
        off = " ".join(format_number(v) for v in offset)
        lines.append(f"marker {name} joint={joint} offset={off}")
    return "\n".join(lines) + "\n"
