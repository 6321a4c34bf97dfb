import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from exokit.errors import (ConvergenceError, SelfMotionError,
                           SingularConfigurationError)
from exokit.geometry import Pose, quat_from_axis_angle
from exokit.hand_model import (JointSpec, KinematicChain, PassiveThumbConfig,
                               fk_attachment_points, parse_chain)
from exokit.thumb_coupling import (ConstraintResidual, CouplingGeometry,
                                   attachment_in_base, constraint_jacobian,
                                   constraint_residual, jacobian_nullity,
                                   nullspace_dimension, parse_geometry,
                                   project_to_manifold, sample_self_motion,
                                   serialize_geometry, solve_passive)

from conftest import random_pose


def _random_config(rng, chain, coupling, geom, min_dist=5e-3):
    """Random pose/configuration with comfortably nonzero link vectors."""
    while True:
        q_p = PassiveThumbConfig(rng.uniform(-0.1, 1.2), rng.uniform(-0.6, 0.6))
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        rot = quat_from_axis_angle(axis, rng.uniform(-0.5, 0.5))
        trans = np.array([0.09, -0.01, 0.035]) + rng.uniform(-0.02, 0.02, 3)
        pose = Pose(rot, trans)
        hand_d, hand_m = fk_attachment_points(chain, coupling, q_p)
        d1 = np.linalg.norm(pose.apply(geom.r_bar_d) - hand_d)
        d2 = np.linalg.norm(pose.apply(geom.r_bar_m) - hand_m)
        if min(d1, d2) > min_dist:
            return pose, q_p


def _random_feasible(rng, chain, coupling, geom, q_range=((0.05, 0.9), (-0.5, 0.5))):
    q_p = PassiveThumbConfig(rng.uniform(*q_range[0]), rng.uniform(*q_range[1]))
    guess = Pose.from_parts([1.0, 0, 0, 0],
                            np.array([0.09, -0.01, 0.035]) + rng.uniform(-0.01, 0.01, 3))
    pose = project_to_manifold(guess, q_p, geom, chain, coupling, tol=1e-12)
    return pose, q_p


# --- attachment_in_base -------------------------------------------------------

def test_attachment_identity_pose():
    out = attachment_in_base(Pose.identity(), [0.03, 0, 0])
    assert np.array_equal(out, [0.03, 0, 0])


def test_attachment_pure_translation():
    pose = Pose(np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, 0.1]))
    assert np.allclose(attachment_in_base(pose, [0.03, 0, 0]), [0.03, 0, 0.1],
                       atol=1e-15)


def test_attachment_half_turn():
    pose = Pose(quat_from_axis_angle([0, 0, 1], math.pi), np.array([0, 0, 0.01]))
    assert np.allclose(attachment_in_base(pose, [0.03, 0, 0]), [-0.03, 0, 0.01],
                       atol=1e-12)


# --- constraint residual ------------------------------------------------------

def test_residual_zero_by_construction(chain, coupling, q_nominal):
    pose = Pose.from_parts([1.0, 0, 0, 0], [0.09, -0.01, 0.035])
    hand_d, hand_m = fk_attachment_points(chain, coupling, q_nominal)
    geom = CouplingGeometry(
        r_bar_d=np.array([0.01, 0.0, -0.012]),
        r_bar_m=np.array([-0.035, 0.005, -0.015]),
        L_d=float(np.linalg.norm(pose.apply([0.01, 0.0, -0.012]) - hand_d)),
        L_m=float(np.linalg.norm(pose.apply([-0.035, 0.005, -0.015]) - hand_m)))
    res = constraint_residual(pose, q_nominal, geom, chain, coupling)
    assert abs(res.g_d) < 1e-12 and abs(res.g_m) < 1e-12


def test_residual_one_mm_along_distal_gradient(chain, coupling, geom,
                                               q_nominal, feasible_pose):
    hand_d, hand_m = fk_attachment_points(chain, coupling, q_nominal)
    u = feasible_pose.apply(geom.r_bar_d) - hand_d
    u /= np.linalg.norm(u)
    moved = Pose(feasible_pose.rotation, feasible_pose.translation + 0.001 * u)
    res = constraint_residual(moved, q_nominal, geom, chain, coupling)
    assert abs(res.g_d - 0.001) < 1e-9
    # independent Euclidean-distance oracle for the other link
    g_m_oracle = np.linalg.norm(moved.apply(geom.r_bar_m) - hand_m) - geom.L_m
    assert abs(res.g_m - g_m_oracle) < 1e-15


def test_residual_matches_distance_oracle(chain, coupling, geom):
    # oracle path: scipy rotation matrices instead of quaternion algebra
    rng = np.random.default_rng(21)
    for _ in range(100):
        pose, q_p = _random_config(rng, chain, coupling, geom, min_dist=0.0)
        res = constraint_residual(pose, q_p, geom, chain, coupling)
        w, x, y, z = pose.rotation
        R = Rotation.from_quat([x, y, z, w]).as_matrix()
        hand_d, hand_m = fk_attachment_points(chain, coupling, q_p)
        gd = np.linalg.norm(R @ geom.r_bar_d + pose.translation - hand_d) - geom.L_d
        gm = np.linalg.norm(R @ geom.r_bar_m + pose.translation - hand_m) - geom.L_m
        assert abs(res.g_d - gd) < 1e-12
        assert abs(res.g_m - gm) < 1e-12


def test_residual_invariant_under_base_frame_transform(chain, coupling, geom,
                                                       q_nominal, feasible_pose):
    rng = np.random.default_rng(22)
    for _ in range(20):
        g = random_pose(rng, scale=0.5)
        moved_chain = _transformed_chain(chain, g)
        moved_pose = g.compose(feasible_pose)
        before = constraint_residual(feasible_pose, q_nominal, geom, chain, coupling)
        after = constraint_residual(moved_pose, q_nominal, geom, moved_chain, coupling)
        assert abs(before.g_d - after.g_d) < 1e-12
        assert abs(before.g_m - after.g_m) < 1e-12


def _transformed_chain(chain, g: Pose) -> KinematicChain:
    joints = []
    for j in chain.joints:
        origin = g.compose(j.origin) if j.parent == "base" else j.origin
        joints.append(JointSpec(j.name, j.parent, origin, j.axis, j.limits))
    return KinematicChain(tuple(joints), dict(chain.markers))


def test_residual_requires_finite():
    with pytest.raises(ValueError):
        ConstraintResidual(float("nan"), 0.0)


# --- constraint Jacobian ------------------------------------------------------

def _fd_jacobian(pose, q_p, geom, chain, coupling, h=1e-7):
    J = np.zeros((2, 6))
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        rp = constraint_residual(pose.apply_body_twist(e), q_p, geom, chain, coupling)
        rm = constraint_residual(pose.apply_body_twist(-e), q_p, geom, chain, coupling)
        J[:, i] = (rp.as_array() - rm.as_array()) / (2.0 * h)
    return J


def test_jacobian_matches_central_differences(chain, coupling, geom):
    rng = np.random.default_rng(23)
    for _ in range(100):
        pose, q_p = _random_config(rng, chain, coupling, geom)
        J = constraint_jacobian(pose, q_p, geom, chain, coupling)
        J_fd = _fd_jacobian(pose, q_p, geom, chain, coupling)
        assert np.max(np.abs(J - J_fd)) < 1e-6


def test_jacobian_orthogonal_direction_gives_zero_rate(chain, coupling, geom,
                                                       q_nominal, feasible_pose):
    hand_d, hand_m = fk_attachment_points(chain, coupling, q_nominal)
    u_d = feasible_pose.apply(geom.r_bar_d) - hand_d
    u_m = feasible_pose.apply(geom.r_bar_m) - hand_m
    v_world = np.cross(u_d, u_m)
    v_world /= np.linalg.norm(v_world)
    # pure translation orthogonal to both difference vectors: both
    # attachment-point velocities are orthogonal to them
    xi = np.concatenate([feasible_pose.rotation_matrix().T @ v_world, np.zeros(3)])
    J = constraint_jacobian(feasible_pose, q_nominal, geom, chain, coupling)
    assert np.max(np.abs(J @ xi)) < 1e-9
    h = 1e-6
    res0 = constraint_residual(feasible_pose, q_nominal, geom, chain, coupling)
    res1 = constraint_residual(feasible_pose.apply_body_twist(h * xi), q_nominal,
                               geom, chain, coupling)
    assert abs(res1.g_d - res0.g_d) < 1e-9 * h + 1e-10
    assert abs(res1.g_m - res0.g_m) < 1e-9 * h + 1e-10


def test_jacobian_singular_on_coincident_points(chain, coupling, geom, q_nominal):
    hand_d, _ = fk_attachment_points(chain, coupling, q_nominal)
    pose = Pose(np.array([1.0, 0, 0, 0]), hand_d - geom.r_bar_d)
    with pytest.raises(SingularConfigurationError):
        constraint_jacobian(pose, q_nominal, geom, chain, coupling)


# --- projection ---------------------------------------------------------------

def test_project_feasible_pose_unchanged(chain, coupling, geom, q_nominal,
                                         feasible_pose):
    out = project_to_manifold(feasible_pose, q_nominal, geom, chain, coupling,
                              tol=1e-9)
    assert out is feasible_pose  # zero iterations: same object back


def test_project_converges_from_gradient_perturbation(chain, coupling, geom,
                                                      q_nominal, feasible_pose):
    hand_d, _ = fk_attachment_points(chain, coupling, q_nominal)
    u = feasible_pose.apply(geom.r_bar_d) - hand_d
    u /= np.linalg.norm(u)
    perturbed = Pose(feasible_pose.rotation, feasible_pose.translation + 0.005 * u)
    out = project_to_manifold(perturbed, q_nominal, geom, chain, coupling,
                              tol=1e-9, max_iter=10)
    res = constraint_residual(out, q_nominal, geom, chain, coupling)
    assert res.max_abs() < 1e-9


def test_project_idempotent(chain, coupling, geom):
    rng = np.random.default_rng(24)
    tol = 1e-9
    for _ in range(20):
        pose, q_p = _random_config(rng, chain, coupling, geom)
        try:
            once = project_to_manifold(pose, q_p, geom, chain, coupling, tol=tol)
        except ConvergenceError:
            continue
        twice = project_to_manifold(once, q_p, geom, chain, coupling, tol=tol)
        assert np.linalg.norm(once.twist_to(twice)) < tol


def test_project_unreachable_geometry_errors(chain, coupling, q_nominal):
    geom = CouplingGeometry(r_bar_d=np.array([0.01, 0.0, -0.012]),
                            r_bar_m=np.array([-0.035, 0.005, -0.015]),
                            L_d=1.0, L_m=0.0428)  # distal link longer than reach
    guess = Pose.from_parts([1.0, 0, 0, 0], [0.09, -0.01, 0.035])
    with pytest.raises(ConvergenceError):
        project_to_manifold(guess, q_nominal, geom, chain, coupling)


# --- passive solve --------------------------------------------------------------

def test_solve_passive_recovers_forward_config(chain, coupling, geom):
    rng = np.random.default_rng(25)
    for _ in range(20):
        q_star = PassiveThumbConfig(rng.uniform(0.1, 0.9), rng.uniform(-0.4, 0.4))
        pose, _ = _random_feasible(rng, chain, coupling, geom,
                                   q_range=((q_star.theta2, q_star.theta2),
                                            (q_star.theta4, q_star.theta4)))
        q_init = PassiveThumbConfig(q_star.theta2 + 0.05, q_star.theta4 + 0.05)
        got = solve_passive(pose, geom, chain, coupling, q_init, tol=1e-10)
        assert abs(got.theta2 - q_star.theta2) < 1e-6
        assert abs(got.theta4 - q_star.theta4) < 1e-6


def test_solve_passive_fixed_point(chain, coupling, geom, q_nominal, feasible_pose):
    out = solve_passive(feasible_pose, geom, chain, coupling, q_nominal, tol=1e-6)
    assert out is q_nominal  # residual already below tol: returned unchanged


def test_solve_passive_unreachable_pose_errors(chain, coupling, geom, q_nominal):
    pose = Pose(np.array([1.0, 0, 0, 0]), np.array([10.0, 0.0, 0.0]))
    with pytest.raises(ConvergenceError):
        solve_passive(pose, geom, chain, coupling, q_nominal)


def test_solve_passive_rejects_out_of_limit_init(chain, coupling, geom, feasible_pose):
    with pytest.raises(ValueError):
        solve_passive(feasible_pose, geom, chain, coupling,
                      PassiveThumbConfig(2.0, 0.0))


def test_solve_passive_flags_joint_limit_stall(chain, coupling, geom):
    # pose generated at theta2 = 1.3; a clone of the chain whose theta2
    # stops at 1.0 cannot reach it, so the solve pins at the stop
    q_star = PassiveThumbConfig(1.3, 0.2)
    guess = Pose.from_parts([1.0, 0, 0, 0], [0.09, -0.01, 0.035])
    pose = project_to_manifold(guess, q_star, geom, chain, coupling)
    tight = KinematicChain(
        tuple(JointSpec(j.name, j.parent, j.origin, j.axis,
                        (j.limits[0], 1.0) if j.name == "theta2" else j.limits)
              for j in chain.joints),
        dict(chain.markers))
    from exokit.errors import JointLimitError
    with pytest.raises(JointLimitError):
        solve_passive(pose, geom, tight, coupling, PassiveThumbConfig(0.8, 0.2))


# --- nullspace dimension --------------------------------------------------------

def test_nullspace_dimension_generic_is_four(chain, coupling, geom, q_nominal,
                                             feasible_pose):
    assert nullspace_dimension(feasible_pose, q_nominal, geom, chain, coupling) == 4


def test_nullspace_dimension_random_feasible(chain, coupling, geom):
    rng = np.random.default_rng(26)
    for _ in range(20):
        pose, q_p = _random_feasible(rng, chain, coupling, geom)
        assert nullspace_dimension(pose, q_p, geom, chain, coupling) == 4


def test_nullspace_requires_feasible_pose(chain, coupling, geom, q_nominal,
                                          feasible_pose):
    off = Pose(feasible_pose.rotation, feasible_pose.translation + [0.01, 0, 0])
    with pytest.raises(ValueError, match="not feasible"):
        nullspace_dimension(off, q_nominal, geom, chain, coupling)


def test_jacobian_nullity_oracle():
    rng = np.random.default_rng(27)
    # rank-1: proportional rows
    row = rng.standard_normal(6)
    J = np.vstack([row, 2.5 * row])
    assert jacobian_nullity(J) == 5
    assert np.linalg.matrix_rank(J) == 1  # independent rank oracle
    # generic rank-2
    J2 = rng.standard_normal((2, 6))
    assert jacobian_nullity(J2) == 6 - np.linalg.matrix_rank(J2) == 4
    # empty constraint set: every direction is free
    assert jacobian_nullity(np.zeros((0, 6))) == 6


def test_nullspace_degenerate_geometry_is_five(coupling):
    # coincident markers plus (near-)coincident exoskeleton attachments
    # make the two constraint rows proportional
    doc = ("joint theta4 parent=base origin=0.025 -0.02 0 1 0 0 0 axis=0 0 1 limits=-0.8 0.8\n"
           "joint theta3 parent=theta4 origin=0.045 0 0 1 0 0 0 axis=0 1 0 limits=-0.2 1.6\n"
           "joint theta2 parent=theta3 origin=0.035 0 0 1 0 0 0 axis=0 1 0 limits=-0.2 1.4\n"
           "marker metacarpal joint=theta2 offset=0.022 0 0.006\n"
           "marker distal joint=theta2 offset=0.022 0 0.006\n")
    chain = parse_chain(doc)
    q_p = PassiveThumbConfig(0.3, 0.15)
    pose = Pose.from_parts([1.0, 0, 0, 0], [0.09, -0.01, 0.035])
    hand_d, hand_m = fk_attachment_points(chain, coupling, q_p)
    r_bar_d = np.array([0.01, 0.0, -0.012])
    r_bar_m = r_bar_d + np.array([1e-9, 0.0, 0.0])
    geom = CouplingGeometry(
        r_bar_d=r_bar_d, r_bar_m=r_bar_m,
        L_d=float(np.linalg.norm(pose.apply(r_bar_d) - hand_d)),
        L_m=float(np.linalg.norm(pose.apply(r_bar_m) - hand_m)))
    assert nullspace_dimension(pose, q_p, geom, chain, coupling) == 5


# --- self-motion sampling --------------------------------------------------------

def test_sample_zero_steps(chain, coupling, geom, q_nominal, feasible_pose):
    assert sample_self_motion(feasible_pose, q_nominal, geom, chain, coupling,
                              n=0, step=1e-3, seed=0) == []


def test_sample_residuals_below_1e8(chain, coupling, geom, q_nominal, feasible_pose):
    poses = sample_self_motion(feasible_pose, q_nominal, geom, chain, coupling,
                               n=1000, step=1e-3, seed=5)
    assert len(poses) == 1000
    worst = max(constraint_residual(p, q_nominal, geom, chain, coupling).max_abs()
                for p in poses)
    assert worst < 1e-8


def test_sample_deterministic_given_seed(chain, coupling, geom, q_nominal,
                                         feasible_pose):
    a = sample_self_motion(feasible_pose, q_nominal, geom, chain, coupling,
                           n=20, step=1e-3, seed=9)
    b = sample_self_motion(feasible_pose, q_nominal, geom, chain, coupling,
                           n=20, step=1e-3, seed=9)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.rotation, pb.rotation)
        assert np.array_equal(pa.translation, pb.translation)


def test_sample_twist_pca_shows_four_components(chain, coupling, geom, q_nominal,
                                                feasible_pose):
    # step small relative to the manifold curvature, so the twist cloud
    # stays in the tangent space
    poses = sample_self_motion(feasible_pose, q_nominal, geom, chain, coupling,
                               n=500, step=5e-5, seed=12)
    twists = np.array([feasible_pose.twist_to(p) for p in poses])
    centered = twists - twists.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    assert np.sum(sv > 0.01 * sv[0]) == 4


def test_sample_infeasible_start_rejected(chain, coupling, geom, q_nominal,
                                          feasible_pose):
    off = Pose(feasible_pose.rotation, feasible_pose.translation + [0.001, 0, 0])
    with pytest.raises(ValueError, match="not feasible"):
        sample_self_motion(off, q_nominal, geom, chain, coupling, n=1,
                           step=1e-3, seed=0)


def test_sample_projection_failure_carries_partial_walk(chain, coupling, geom,
                                                        q_nominal, feasible_pose,
                                                        monkeypatch):
    import exokit.thumb_coupling as tc

    real_project = tc.project_to_manifold
    calls = {"n": 0}

    def flaky_project(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 3:
            raise ConvergenceError("injected failure")
        return real_project(*args, **kwargs)

    monkeypatch.setattr(tc, "project_to_manifold", flaky_project)
    with pytest.raises(SelfMotionError) as err:
        tc.sample_self_motion(feasible_pose, q_nominal, geom, chain, coupling,
                              n=10, step=1e-4, seed=1)
    assert len(err.value.poses) == 3  # samples collected before the failure


# --- geometry serialization -------------------------------------------------------

def test_geometry_roundtrip(geom):
    text = serialize_geometry(geom)
    again = parse_geometry(text)
    assert np.array_equal(again.r_bar_d, geom.r_bar_d)
    assert np.array_equal(again.r_bar_m, geom.r_bar_m)
    assert again.L_d == geom.L_d and again.L_m == geom.L_m


def test_geometry_invariants():
    with pytest.raises(ValueError):
        CouplingGeometry(np.zeros(3), np.zeros(3), 0.05, 0.05)
    with pytest.raises(ValueError):
        CouplingGeometry(np.zeros(3), np.ones(3), -0.05, 0.05)
