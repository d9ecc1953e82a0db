import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from jengabot.errors import JointLimit, NonPositiveDepth
from jengabot.geometry import (CameraIntrinsics, KinematicChain, RigidPose, axis_angle_to_rotation, compose,
                               condition_number, damped_pinv, dh_matrix, forward_kinematics, geometric_jacobian,
                               inverse, pose_error, project, rot_x, rot_z, rotation_angle, rotation_to_axis_angle,
                               skew, solve_ik, twist_exp, twist_transform, vee)

vec3 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3).map(np.array)


def random_pose(rng):
    return RigidPose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))


@given(vec3)
def test_skew_vee_roundtrip(w):
    assert np.allclose(vee(skew(w)), w)
    assert np.allclose(skew(w), -skew(w).T)


@given(vec3)
def test_axis_angle_matches_scipy(w):
    R = axis_angle_to_rotation(w)
    assert np.allclose(R, Rotation.from_rotvec(w).as_matrix(), atol=1e-12)


@settings(max_examples=200)
@given(vec3)
def test_log_inverts_exp(w):
    theta = np.linalg.norm(w)
    if theta > np.pi - 1e-6:
        w = w / theta * (np.pi - 1e-6)
    R = axis_angle_to_rotation(w)
    assert np.allclose(rotation_to_axis_angle(R), Rotation.from_matrix(R).as_rotvec(), atol=1e-8)
    assert np.isclose(rotation_angle(R), np.linalg.norm(w), atol=1e-8)


def test_log_at_pi_has_canonical_sign():
    for u in np.eye(3):
        for s in (1, -1):
            w = rotation_to_axis_angle(axis_angle_to_rotation(s * np.pi * u))
            assert np.isclose(np.linalg.norm(w), np.pi)
            assert np.allclose(np.abs(w), np.pi * u)
            assert w[np.argmax(np.abs(w))] > 0


def test_small_angle_log():
    w = np.array([1e-10, -2e-10, 3e-10])
    assert np.allclose(rotation_to_axis_angle(axis_angle_to_rotation(w)), w, atol=1e-16)


def test_compose_inverse_and_associativity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c = random_pose(rng), random_pose(rng), random_pose(rng)
        assert np.allclose((a @ b @ c).matrix, (a @ (b @ c)).matrix)
        assert np.allclose(compose(a, inverse(a)).matrix, np.eye(4), atol=1e-12)
        assert np.allclose((a @ b).matrix, a.matrix @ b.matrix)
        assert (a @ b).is_valid()


def test_apply_maps_points():
    p = RigidPose(rot_z(np.pi / 2), [1.0, 0, 0])
    assert np.allclose(p.apply([1.0, 0, 0]), [1.0, 1.0, 0])


def test_twist_exp_matches_matrix_exponential():
    rng = np.random.default_rng(1)
    for _ in range(20):
        xi = rng.normal(size=6)
        M = np.zeros((4, 4))
        M[:3, :3] = skew(xi[3:])
        M[:3, 3] = xi[:3]
        assert np.allclose(twist_exp(xi).matrix, expm(M), atol=1e-10)


def test_adjoint_conjugates_twists():
    # exp(Ad_T xi) = T exp(xi) T^-1
    rng = np.random.default_rng(2)
    for _ in range(20):
        T = random_pose(rng)
        xi = rng.normal(size=6) * 0.5
        lhs = twist_exp(twist_transform(T) @ xi)
        rhs = T @ twist_exp(xi) @ T.inv()
        assert np.allclose(lhs.matrix, rhs.matrix, atol=1e-10)


def test_project_principal_point_and_depth_error():
    K = CameraIntrinsics()
    assert np.allclose(project(K, [0, 0, 1.0]), [320, 240])
    assert np.allclose(project(K, [0.1, -0.05, 0.5]), [320 + 615 * 0.2, 240 - 615 * 0.1])
    with pytest.raises(NonPositiveDepth):
        project(K, [0, 0, -0.1])


def test_dh_matrix_is_product_of_elementary_motions():
    a, alpha, d, theta = 0.3, 0.7, 0.1, -1.2
    Tz = np.eye(4)
    Tz[:3, :3] = rot_z(theta)
    Tz[2, 3] = d
    Tx = np.eye(4)
    Tx[:3, :3] = rot_x(alpha)
    Tx[0, 3] = a
    assert np.allclose(dh_matrix(a, alpha, d, theta), Tz @ Tx)


def _random_q(rng, chain):
    return rng.uniform(chain.q_min * 0.8, chain.q_max * 0.8)


def test_jacobian_matches_finite_differences():
    chain = KinematicChain()
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(20):
        q = _random_q(rng, chain)
        J = geometric_jacobian(chain, q)
        T0 = forward_kinematics(chain, q)
        for i in range(6):
            dq = np.zeros(6)
            dq[i] = h
            Tp = forward_kinematics(chain, q + dq, check_limits=False)
            Tm = forward_kinematics(chain, q - dq, check_limits=False)
            v = (Tp.t - Tm.t) / (2 * h)
            w = vee((Tp.R - Tm.R) / (2 * h) @ T0.R.T)
            assert np.allclose(J[:3, i], v, atol=1e-6)
            assert np.allclose(J[3:, i], w, atol=1e-6)


def test_joint_limits_raise():
    chain = KinematicChain()
    q = np.zeros(6)
    q[1] = chain.q_max[1] + 0.1
    with pytest.raises(JointLimit):
        forward_kinematics(chain, q)


def test_damped_pinv_close_to_pinv_when_well_conditioned():
    rng = np.random.default_rng(4)
    J = rng.normal(size=(6, 6))
    assert condition_number(J) < 1e4
    assert np.allclose(damped_pinv(J), np.linalg.pinv(J), atol=1e-8)


def test_damped_pinv_stays_bounded_at_singularity():
    J = np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 0.0])
    assert condition_number(J) == float("inf")
    P = damped_pinv(J, 1e-3)
    assert np.all(np.isfinite(P)) and abs(P[5, 5]) < 1e-9


def test_solve_ik_roundtrip():
    chain = KinematicChain()
    rng = np.random.default_rng(5)
    for _ in range(5):
        q_true = _random_q(rng, chain) * 0.5
        target = forward_kinematics(chain, q_true)
        q, res = solve_ik(chain, target, q_true + rng.normal(scale=0.1, size=6))
        assert res < 1e-10
        assert np.linalg.norm(pose_error(forward_kinematics(chain, q), target)) < 1e-9
