"""Pose-tolerant thumb coupling: two distance constraints between the
exoskeleton frame and the passive thumb, and the residual pose freedom
they leave.

The exoskeleton pose has 6 DoF; the two link-length constraints
generically remove 2, leaving a 4-dimensional self-motion manifold
("wiggle space").  This module evaluates the constraint residuals and
their analytic Jacobian with respect to a body twist, projects poses
onto the constraint manifold (minimum-norm Gauss-Newton), inverts the
coupling for the passive configuration, and explores the self-motion
manifold by a seeded tangent-space random walk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (ConvergenceError, JointLimitError, SelfMotionError,
                     SingularConfigurationError)
from .geometry import Pose
from .hand_model import (CouplingFunction, KinematicChain, PassiveThumbConfig,
                         fk_attachment_points, fk_world_transforms, thumb_angles)
from .kvformat import (float_field, format_kv, format_number, format_vector,
                       parse_kv, vector_field)

DEFAULT_TOL = 1e-9
DEFAULT_SV_TOL = 1e-6
DEFAULT_MAX_ITER = 50

_DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class CouplingGeometry:
    """Exoskeleton-frame attachment points and link lengths (meters)."""

    r_bar_d: np.ndarray
    r_bar_m: np.ndarray
    L_d: float
    L_m: float

    def __post_init__(self):
        rd = np.array(self.r_bar_d, dtype=float).reshape(3)
        rm = np.array(self.r_bar_m, dtype=float).reshape(3)
        if self.L_d <= 0.0 or self.L_m <= 0.0:
            raise ValueError("link lengths must be strictly positive")
        if np.array_equal(rd, rm):
            raise ValueError("attachment points r_bar_d and r_bar_m coincide")
        rd.setflags(write=False)
        rm.setflags(write=False)
        object.__setattr__(self, "r_bar_d", rd)
        object.__setattr__(self, "r_bar_m", rm)
        object.__setattr__(self, "L_d", float(self.L_d))
        object.__setattr__(self, "L_m", float(self.L_m))


@dataclass(frozen=True)
class ConstraintResidual:
    """Signed distance defects of the two coupling links (meters)."""

    g_d: float
    g_m: float

    def __post_init__(self):
        if not (math.isfinite(self.g_d) and math.isfinite(self.g_m)):
            raise ValueError("non-finite constraint residual")

    def max_abs(self) -> float:
        return max(abs(self.g_d), abs(self.g_m))

    def as_array(self) -> np.ndarray:
        return np.array([self.g_d, self.g_m])


def attachment_in_base(pose: Pose, r_bar) -> np.ndarray:
    """Exoskeleton-frame point expressed in the palm-base frame."""
    return pose.apply(r_bar)


def _hand_points(chain: KinematicChain, f: CouplingFunction,
                 theta2: float, theta4: float) -> tuple[np.ndarray, np.ndarray]:
    """Marker positions without joint-limit checks (solver internals)."""
    world = fk_world_transforms(chain, thumb_angles(chain, f, theta2, theta4))
    jd, od = chain.markers["distal"]
    jm, om = chain.markers["metacarpal"]
    return world[jd].apply(od), world[jm].apply(om)


def _residual_vec(pose: Pose, hand_d: np.ndarray, hand_m: np.ndarray,
                  geom: CouplingGeometry) -> np.ndarray:
    gd = np.linalg.norm(pose.apply(geom.r_bar_d) - hand_d) - geom.L_d
    gm = np.linalg.norm(pose.apply(geom.r_bar_m) - hand_m) - geom.L_m
    return np.array([gd, gm])


def constraint_residual(pose: Pose, q_p: PassiveThumbConfig,
                        geom: CouplingGeometry, chain: KinematicChain,
                        f: CouplingFunction) -> ConstraintResidual:
    """g_i = ||attachment_in_base(pose, r_bar_i) - r_i(q_p)|| - L_i."""
    hand_d, hand_m = fk_attachment_points(chain, f, q_p)
    g = _residual_vec(pose, hand_d, hand_m, geom)
    return ConstraintResidual(float(g[0]), float(g[1]))


def _jacobian(pose: Pose, hand_d: np.ndarray, hand_m: np.ndarray,
              geom: CouplingGeometry) -> np.ndarray:
    R = pose.rotation_matrix()
    rows = []
    for r_bar, hand in ((geom.r_bar_d, hand_d), (geom.r_bar_m, hand_m)):
        diff = (R @ r_bar + pose.translation) - hand
        dist = np.linalg.norm(diff)
        if dist < _DEGENERATE_EPS:
            raise SingularConfigurationError(
                "attachment point coincides with its hand point")
        u_body = R.T @ (diff / dist)
        rows.append(np.concatenate([u_body, np.cross(r_bar, u_body)]))
    return np.array(rows)


def constraint_jacobian(pose: Pose, q_p: PassiveThumbConfig,
                        geom: CouplingGeometry, chain: KinematicChain,
                        f: CouplingFunction) -> np.ndarray:
    """2x6 gradient of (g_d, g_m) with respect to a body twist [v; omega].

    Row i translation block is the unit difference vector rotated into
    the exoskeleton frame; the rotation block is its moment about the
    attachment point.
    """
    hand_d, hand_m = fk_attachment_points(chain, f, q_p)
    return _jacobian(pose, hand_d, hand_m, geom)


def project_to_manifold(guess: Pose, q_p: PassiveThumbConfig,
                        geom: CouplingGeometry, chain: KinematicChain,
                        f: CouplingFunction, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> Pose:
    """Gauss-Newton projection onto the constraint manifold.

    Each step is the minimum-norm twist solving the linearized
    constraints (Moore-Penrose pseudoinverse of the 2x6 Jacobian), so an
    already-feasible guess is returned unchanged.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    hand_d, hand_m = fk_attachment_points(chain, f, q_p)
    pose = guess
    for _ in range(max_iter + 1):
        g = _residual_vec(pose, hand_d, hand_m, geom)
        if np.max(np.abs(g)) <= tol:
            return pose
        J = _jacobian(pose, hand_d, hand_m, geom)
        pose = pose.apply_body_twist(-np.linalg.pinv(J) @ g)
    raise ConvergenceError(
        f"projection did not reach {tol} m in {max_iter} iterations "
        "(geometry may be unreachable)")


def solve_passive(pose: Pose, geom: CouplingGeometry, chain: KinematicChain,
                  f: CouplingFunction, q_init: PassiveThumbConfig,
                  tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> PassiveThumbConfig:
    """Passive configuration satisfying both constraints at a fixed pose.

    Newton iteration on the 2x2 system in (theta2, theta4) with iterates
    clamped to the joint limits; the 2x2 Jacobian is taken by central
    differences (the coupling table is only piecewise smooth).  Converges
    to the solution in the basin of ``q_init``.
    """
    lim2 = chain.joint("theta2").limits
    lim4 = chain.joint("theta4").limits
    lo = np.array([lim2[0], lim4[0]])
    hi = np.array([lim2[1], lim4[1]])
    q = np.array([q_init.theta2, q_init.theta4], dtype=float)
    if np.any(q < lo) or np.any(q > hi):
        raise ValueError("q_init outside joint limits")

    def g_of(qv: np.ndarray) -> np.ndarray:
        hand_d, hand_m = _hand_points(chain, f, qv[0], qv[1])
        return _residual_vec(pose, hand_d, hand_m, geom)

    h = 1e-6
    max_step = 0.5
    for it in range(max_iter + 1):
        g = g_of(q)
        if np.max(np.abs(g)) <= tol:
            if it == 0:
                return q_init
            return PassiveThumbConfig(float(q[0]), float(q[1]))
        if it == max_iter:
            break
        J = np.empty((2, 2))
        for col in range(2):
            e = np.zeros(2)
            e[col] = h
            J[:, col] = (g_of(q + e) - g_of(q - e)) / (2.0 * h)
        try:
            dq = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            break
        norm = np.linalg.norm(dq)
        if norm > max_step:
            dq *= max_step / norm
        q = np.clip(q + dq, lo, hi)

    at_limit = bool(np.any(np.isclose(q, lo, rtol=0.0, atol=1e-9))
                    or np.any(np.isclose(q, hi, rtol=0.0, atol=1e-9)))
    if at_limit:
        raise JointLimitError(
            f"passive solve stalled at a joint limit (residual {np.max(np.abs(g_of(q))):.3e} m)")
    raise ConvergenceError(
        f"passive solve did not reach {tol} m in {max_iter} iterations")


def jacobian_nullity(jac: np.ndarray, sv_tol: float = DEFAULT_SV_TOL) -> int:
    """6 minus the numerical rank of a constraint Jacobian.

    ``jac`` has one row per active constraint and 6 columns; with no
    active constraints (0 rows) every direction is free.
    """
    jac = np.asarray(jac, dtype=float)
    if jac.size == 0:
        return 6
    sv = np.linalg.svd(jac, compute_uv=False)
    rank = int(np.sum(sv > sv_tol * sv[0]))
    return 6 - rank


def nullspace_dimension(pose: Pose, q_p: PassiveThumbConfig,
                        geom: CouplingGeometry, chain: KinematicChain,
                        f: CouplingFunction,
                        sv_tol: float = DEFAULT_SV_TOL) -> int:
    """Local degrees of residual pose freedom at a feasible pose."""
    res = constraint_residual(pose, q_p, geom, chain, f)
    if res.max_abs() >= 1e-6:
        raise ValueError(
            f"pose not feasible: residual {res.max_abs():.3e} m >= 1e-6 m")
    return jacobian_nullity(constraint_jacobian(pose, q_p, geom, chain, f), sv_tol)


def sample_self_motion(pose0: Pose, q_p: PassiveThumbConfig,
                       geom: CouplingGeometry, chain: KinematicChain,
                       f: CouplingFunction, n: int, step: float,
                       seed: int) -> list[Pose]:
    """Random walk on the self-motion manifold.

    Each step moves by a random unit tangent from the Jacobian nullspace
    scaled by ``step`` (twist norm), then re-projects.  Every returned
    pose satisfies both constraints to 1e-8 m; the walk is deterministic
    given ``seed``.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    res = constraint_residual(pose0, q_p, geom, chain, f)
    if res.max_abs() > 1e-8:
        raise ValueError(
            f"pose0 not feasible: residual {res.max_abs():.3e} m > 1e-8 m")
    hand_d, hand_m = fk_attachment_points(chain, f, q_p)
    rng = np.random.default_rng(seed)
    poses: list[Pose] = []
    pose = pose0
    for k in range(n):
        J = _jacobian(pose, hand_d, hand_m, geom)
        _, sv, vt = np.linalg.svd(J, full_matrices=True)
        rank = int(np.sum(sv > DEFAULT_SV_TOL * sv[0]))
        basis = vt[rank:]
        norm = 0.0
        while norm == 0.0:
            coeffs = rng.standard_normal(basis.shape[0])
            tangent = basis.T @ coeffs
            norm = np.linalg.norm(tangent)
        try:
            pose = project_to_manifold(pose.apply_body_twist(step * tangent / norm),
                                       q_p, geom, chain, f)
        except ConvergenceError as exc:
            raise SelfMotionError(f"projection failed at sample {k}: {exc}",
                                  poses) from exc
        poses.append(pose)
    return poses


# --- geometry text block --------------------------------------------------

def parse_geometry(text: str) -> CouplingGeometry:
    kv = parse_kv(text)
    return CouplingGeometry(
        r_bar_d=vector_field(kv, "r_bar_d", 3),
        r_bar_m=vector_field(kv, "r_bar_m", 3),
        L_d=float_field(kv, "L_d"),
        L_m=float_field(kv, "L_m"),
    )


def serialize_geometry(geom: CouplingGeometry) -> str:
    return format_kv([
        ("r_bar_d", format_vector(geom.r_bar_d)),
        ("r_bar_m", format_vector(geom.r_bar_m)),
        ("L_d", format_number(geom.L_d)),
        ("L_m", format_number(geom.L_m)),
    ])
