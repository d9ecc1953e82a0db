"""Rigid transforms, axis-angle maps, pinhole projection and 6R arm kinematics.

Conventions: poses map child-frame coordinates to parent-frame coordinates,
twists are ordered (linear, angular), all quantities are SI.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import JointLimit, NonPositiveDepth

SINGULARITY_CONDITION = 1e6


def skew(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(W: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])


@dataclass(frozen=True, eq=False)
class RigidPose:
    """SE(3) element: rotation R and translation t (m)."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls()

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "RigidPose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_rotvec(cls, theta_u, t=(0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(axis_angle_to_rotation(theta_u), t)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def apply(self, points) -> np.ndarray:
        """Map points (..., 3) from this pose's frame into its parent frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def inv(self) -> "RigidPose":
        return inverse(self)

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return compose(self, other)

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (np.allclose(self.R.T @ self.R, np.eye(3), atol=tol)
                and abs(np.linalg.det(self.R) - 1.0) < tol)

    def __repr__(self) -> str:
        return f"RigidPose(rotvec={rotation_to_axis_angle(self.R).round(6).tolist()}, t={self.t.round(6).tolist()})"


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    return RigidPose(a.R @ b.R, a.R @ b.t + a.t)


def inverse(a: RigidPose) -> RigidPose:
    Rt = a.R.T
    return RigidPose(Rt, -Rt @ a.t)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_to_rotation(theta_u) -> np.ndarray:
    """Rodrigues' formula."""
    w = np.asarray(theta_u, dtype=float)
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < 1e-8:
        return np.eye(3) + W + 0.5 * W @ W
    A = np.sin(theta) / theta
    B = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + A * W + B * W @ W


def _canonical_sign(u: np.ndarray) -> np.ndarray:
    # theta == pi: u and -u describe the same rotation; make the first nonzero entry positive
    for x in u:
        if abs(x) > 1e-12:
            return u if x > 0 else -u
    return u


def rotation_to_axis_angle(R) -> np.ndarray:
    """Log map SO(3) -> theta*u with theta in [0, pi]."""
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - R.T)  # sin(theta) * u
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta < 1e-8:
        return w  # first-order, exact to O(theta^3)
    if theta < np.pi - 1e-3:
        return w * (theta / s)
    # near pi the antisymmetric part vanishes; read the axis from the symmetric part
    B = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    u = B[:, k] / np.sqrt(B[k, k] * (1.0 - c))
    u /= np.linalg.norm(u)
    if s > 1e-12:
        if np.dot(u, w) < 0:
            u = -u
    else:
        u = _canonical_sign(u)
    return theta * u


def rotation_angle(R) -> float:
    """Geodesic angle of a rotation (rad)."""
    R = np.asarray(R, dtype=float)
    s = 0.5 * np.linalg.norm(vee(R - R.T))
    c = 0.5 * (np.trace(R) - 1.0)
    return float(np.arctan2(s, c))


def twist_exp(xi) -> RigidPose:
    """SE(3) exponential of a twist (v, w)."""
    xi = np.asarray(xi, dtype=float)
    v, w = xi[:3], xi[3:]
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < 1e-8:
        V = np.eye(3) + 0.5 * W + W @ W / 6.0
    else:
        V = (np.eye(3) + (1.0 - np.cos(theta)) / theta**2 * W
             + (theta - np.sin(theta)) / theta**3 * W @ W)
    return RigidPose(axis_angle_to_rotation(w), V @ v)


def twist_transform(x_pose: RigidPose) -> np.ndarray:
    """Adjoint of a pose: maps a twist expressed in the child frame to the parent frame."""
    R, t = x_pose.R, x_pose.t
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[:3, 3:] = skew(t) @ R
    Ad[3:, 3:] = R
    return Ad


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 615.0
    fy: float = 615.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def project(K: CameraIntrinsics, p_cam) -> np.ndarray:
    """Pinhole projection of camera-frame points (..., 3) to pixels (..., 2)."""
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("point behind or on the camera plane")
    u = K.fx * p[..., 0] / z + K.cx
    v = K.fy * p[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def dh_matrix(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    """Standard Denavit-Hartenberg link transform Rz(theta) Tz(d) Tx(a) Rx(alpha)."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


# a, alpha, d, theta offset; anthropomorphic arm with spherical wrist, 0.9 m of links
DEFAULT_DH = (
    (0.0, np.pi / 2, 0.30, 0.0),
    (0.40, 0.0, 0.0, np.pi / 2),
    (0.0, np.pi / 2, 0.0, 0.0),
    (0.0, -np.pi / 2, 0.35, 0.0),
    (0.0, np.pi / 2, 0.0, 0.0),
    (0.0, 0.0, 0.15, 0.0),
)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    dh: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_DH))
    q_min: np.ndarray = field(default_factory=lambda: np.radians([-170, -100, -150, -180, -135, -180]))
    q_max: np.ndarray = field(default_factory=lambda: np.radians([170, 100, 150, 180, 135, 180]))
    qd_max: np.ndarray = field(default_factory=lambda: np.full(6, 0.5))

    def __post_init__(self):
        for name in ("dh", "q_min", "q_max", "qd_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.dh.shape != (6, 4):
            raise ValueError("a 6R chain needs exactly 6 DH rows")
        if np.any(self.qd_max <= 0):
            raise ValueError("joint velocity limits must be positive")
        if np.any(self.q_min >= self.q_max):
            raise ValueError("joint limits must satisfy q_min < q_max")

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.q_min) and np.all(q <= self.q_max))

    def clip(self, q) -> np.ndarray:
        return np.clip(q, self.q_min, self.q_max)


@dataclass(frozen=True, eq=False)
class JointState:
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(6))


def _as_q(q) -> np.ndarray:
    return q.q if isinstance(q, JointState) else np.asarray(q, dtype=float)


def joint_frames(chain: KinematicChain, q) -> list[np.ndarray]:
    """Homogeneous transforms of frames 0..6 in the base frame."""
    q = _as_q(q)
    T = np.eye(4)
    frames = [T]
    for (a, alpha, d, offset), qi in zip(chain.dh, q):
        T = T @ dh_matrix(a, alpha, d, qi + offset)
        frames.append(T)
    return frames


def forward_kinematics(chain: KinematicChain, q, check_limits: bool = True) -> RigidPose:
    q = _as_q(q)
    if check_limits and not chain.within_limits(q):
        raise JointLimit(f"joint configuration outside limits: {np.round(q, 6).tolist()}")
    return RigidPose.from_matrix(joint_frames(chain, q)[-1])


def geometric_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """6x6 Jacobian mapping joint rates to (v, w) of the flange, both in the base frame."""
    frames = joint_frames(chain, q)
    p_e = frames[-1][:3, 3]
    J = np.zeros((6, 6))
    for i in range(6):
        z = frames[i][:3, 2]
        p = frames[i][:3, 3]
        J[:3, i] = np.cross(z, p_e - p)
        J[3:, i] = z
    return J


def condition_number(J: np.ndarray) -> float:
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] <= 0:
        return float("inf")
    return float(s[0] / s[-1])


def damped_pinv(J: np.ndarray, damping: float = 1e-6) -> np.ndarray:
    """Damped least-squares inverse J^T (J J^T + k^2 I)^-1."""
    m = J.shape[0]
    return J.T @ np.linalg.solve(J @ J.T + damping**2 * np.eye(m), np.eye(m))


def pose_error(current: RigidPose, target: RigidPose) -> np.ndarray:
    """Twist-like error (dp, dtheta) in the base frame driving current toward target."""
    dp = target.t - current.t
    dr = rotation_to_axis_angle(target.R @ current.R.T)
    return np.concatenate([dp, dr])


def solve_ik(chain: KinematicChain, target: RigidPose, q0, tool: RigidPose | None = None,
             iters: int = 100, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Numerical pose IK (step-limited Newton); places the arm at start poses only.

    Returns the joint vector and the residual pose-error norm.
    """
    flange = target if tool is None else target @ inverse(tool)
    q = np.array(_as_q(q0), dtype=float)
    err = pose_error(forward_kinematics(chain, q, check_limits=False), flange)
    for _ in range(iters):
        if np.linalg.norm(err) < tol:
            break
        dq = damped_pinv(geometric_jacobian(chain, q), 1e-6) @ err
        step = np.linalg.norm(dq)
        if step > 0.3:
            dq *= 0.3 / step
        # backtracking: accept the first step that reduces the residual
        for _ in range(12):
            q_new = chain.clip(q + dq)
            err_new = pose_error(forward_kinematics(chain, q_new, check_limits=False), flange)
            if np.linalg.norm(err_new) < np.linalg.norm(err):
                break
            dq *= 0.5
        else:
            break
        q, err = q_new, err_new
    return q, float(np.linalg.norm(err))
