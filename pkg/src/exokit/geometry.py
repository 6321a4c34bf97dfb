"""Quaternion and rigid-pose primitives.

Conventions used throughout the toolkit:

- quaternions are length-4 arrays in (w, x, y, z) order, unit norm;
- a Pose maps body-frame coordinates into the reference frame,
  p_ref = R @ p_body + t, with R the rotation matrix of ``rotation``;
- twists are body-frame 6-vectors [v; omega], v in meters, omega in
  radians; a twist is applied as q <- q * exp(omega), t <- t + R v.

Stored quaternions are sign-canonical (scalar part >= 0) so that equal
rotations compare equal component-wise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

QUAT_NORM_TOL = 1e-9


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    u = q[1:]
    return v + 2.0 * np.cross(u, np.cross(u, v) + q[0] * v)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def quat_exp(omega) -> np.ndarray:
    """Unit quaternion for the rotation vector ``omega`` (radians)."""
    omega = np.asarray(omega, dtype=float)
    angle = np.linalg.norm(omega)
    if angle < 1e-12:
        q = np.concatenate(([1.0], 0.5 * omega))
        return q / np.linalg.norm(q)
    return np.concatenate(([math.cos(0.5 * angle)],
                           math.sin(0.5 * angle) * omega / angle))


def quat_log(q: np.ndarray) -> np.ndarray:
    """Principal rotation vector of a unit quaternion (magnitude <= pi)."""
    if q[0] < 0.0:
        q = -q
    vn = np.linalg.norm(q[1:])
    if vn < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * math.atan2(vn, q[0])
    return angle * q[1:] / vn


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is >= 0 (ties: first nonzero positive)."""
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return q if c > 0.0 else -q
    return q


def quat_slerp(qa: np.ndarray, qb: np.ndarray, u: float) -> np.ndarray:
    """Shortest-arc spherical interpolation; u in [0, 1], exact endpoints."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if u == 0.0:
        return qa.copy()
    if u == 1.0:
        return qb.copy()
    if dot > 1.0 - 1e-12:
        out = (1.0 - u) * qa + u * qb
        return out / np.linalg.norm(out)
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    out = (math.sin((1.0 - u) * theta) / s) * qa + (math.sin(u * theta) / s) * qb
    return out / np.linalg.norm(out)


def _frozen_array(x, shape) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    """Rigid transform: unit quaternion (w, x, y, z) plus translation (m)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=float).reshape(4)
        t = _frozen_array(self.translation, (3,))
        n = np.linalg.norm(q)
        if abs(n - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {n!r} not within {QUAT_NORM_TOL} of 1")
        q = quat_canonical(q)
        q.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_parts(cls, rotation, translation, normalize: bool = False) -> "Pose":
        q = np.asarray(rotation, dtype=float)
        if normalize:
            n = np.linalg.norm(q)
            if n == 0.0:
                raise ValueError("cannot normalize zero quaternion")
            q = q / n
        return cls(q, np.asarray(translation, dtype=float))

    def apply(self, point) -> np.ndarray:
        return quat_rotate(self.rotation, np.asarray(point, dtype=float)) + self.translation

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(quat_mul(self.rotation, other.rotation), self.apply(other.translation))

    def inverse(self) -> "Pose":
        qc = quat_conjugate(self.rotation)
        return Pose(qc, -quat_rotate(qc, self.translation))

    def apply_body_twist(self, xi) -> "Pose":
        """One step along a body twist [v; omega]."""
        xi = np.asarray(xi, dtype=float).reshape(6)
        q = quat_mul(self.rotation, quat_exp(xi[3:]))
        q = q / np.linalg.norm(q)
        return Pose(q, self.translation + quat_rotate(self.rotation, xi[:3]))

    def twist_to(self, other: "Pose") -> np.ndarray:
        """Body-twist log coordinates of ``other`` relative to ``self``."""
        dq = quat_mul(quat_conjugate(self.rotation), other.rotation)
        v = quat_rotate(quat_conjugate(self.rotation),
                        other.translation - self.translation)
        return np.concatenate([v, quat_log(dq)])

    def isclose(self, other: "Pose", atol: float = 1e-12) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
                and np.allclose(self.translation, other.translation, atol=atol, rtol=0.0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))
