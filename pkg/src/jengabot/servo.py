"""Hybrid 2-1/2-D visual servoing of an eye-in-hand camera."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateMask, IllConditioned, InvalidConfig, NonPositiveDepth, SingularFeatures, \
    TargetNotVisible, TrackingLost
from .geometry import (SINGULARITY_CONDITION, CameraIntrinsics, JointState, KinematicChain, RigidPose,
                       condition_number, damped_pinv, forward_kinematics, geometric_jacobian, rot_x, rot_y,
                       rotation_to_axis_angle, skew, solve_ik, twist_exp, twist_transform)
from .perception.masks import render_masks
from .perception.tracking import (GroupModel, TrackerNoise, TrackState, build_group_model, start_tracking,
                                  track_step, tracker_reinitialize)
from .tower import Block, TowerPlacement, TowerState, face_pose

LOOP_RATE_HZ = 9.0
DEFAULT_LAMBDA = 0.5
TOLERANCE = 2e-5


@dataclass(frozen=True)
class FeatureVector:
    x: float
    y: float
    log_depth_ratio: float
    theta_u: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([[self.x, self.y, self.log_depth_ratio], self.theta_u])


def features_from_pose(rel_pose: RigidPose, Z_star: float) -> FeatureVector:
    """Features of the target frame origin seen from the camera (``rel_pose`` = cTt).

    The rotation feature is theta*u of c*Rc, with the desired camera aligned
    with the target frame (c*Rt = I), i.e. c*Rc = cRt^T.
    """
    X, Y, Z = rel_pose.t
    if Z <= 0 or Z_star <= 0:
        raise NonPositiveDepth(f"depth must be positive (Z={Z}, Z*={Z_star})")
    return FeatureVector(X / Z, Y / Z, float(np.log(Z / Z_star)), rotation_to_axis_angle(rel_pose.R.T))


def _sinc(x: float) -> float:
    return 1.0 if abs(x) < 1e-12 else np.sin(x) / x


def rotation_block(theta_u) -> np.ndarray:
    """L_w = I + theta/2 [u]x + (1 - sinc(theta)/sinc^2(theta/2)) [u]x^2.

    Sign of the middle term follows from theta*u being the log of c*Rc, which a
    camera body rotation multiplies from the right.
    """
    tu = np.asarray(theta_u, dtype=float)
    theta = float(np.linalg.norm(tu))
    if theta >= np.pi - 1e-9:
        raise SingularFeatures("rotation feature undefined at theta = pi")
    if theta < 1e-12:
        return np.eye(3)
    U = skew(tu / theta)
    return np.eye(3) + 0.5 * theta * U + (1.0 - _sinc(theta) / _sinc(theta / 2) ** 2) * U @ U


def interaction_matrix(s: FeatureVector, Z: float) -> np.ndarray:
    if Z <= 0:
        raise NonPositiveDepth(f"depth must be positive (Z={Z})")
    x, y = s.x, s.y
    L = np.zeros((6, 6))
    L[:3, :3] = np.array([[-1.0, 0.0, x], [0.0, -1.0, y], [0.0, 0.0, -1.0]]) / Z
    L[:3, 3:] = np.array([[x * y, -(1 + x * x), y], [1 + y * y, -x * y, -x], [-y, x, 0.0]])
    L[3:, 3:] = rotation_block(s.theta_u)
    return L


def control_law(L: np.ndarray, e_s, lam: float) -> np.ndarray:
    """Camera twist (v, w) in the camera frame: v = -lambda L^+ e."""
    return -lam * np.linalg.pinv(L) @ np.asarray(e_s, dtype=float)


# --- arm and camera setup --------------------------------------------------------

@dataclass(frozen=True)
class EyeInHand:
    """Camera and finger mounted on the end-effector."""

    extrinsics: RigidPose = field(default_factory=lambda: RigidPose(np.eye(3), [0.0, -0.035, 0.06]))
    fingertip: float = 0.15  # fingertip distance along the ee z axis (m)
    standoff: float = 0.01  # fingertip gap to the face at the servo goal (m)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    @property
    def goal_ee_to_face(self) -> RigidPose:
        return RigidPose(np.eye(3), [0.0, 0.0, self.fingertip + self.standoff])

    @property
    def goal_relative(self) -> RigidPose:
        """Desired target pose in the camera frame."""
        return self.extrinsics.inv() @ self.goal_ee_to_face

    @property
    def Z_star(self) -> float:
        return float(self.goal_relative.t[2])

    @property
    def s_star(self) -> np.ndarray:
        return features_from_pose(self.goal_relative, self.Z_star).vector


@dataclass(frozen=True)
class ServoConfig:
    lam: float = DEFAULT_LAMBDA
    tolerance: float = TOLERANCE
    loop_rate: float = LOOP_RATE_HZ
    max_duration: float = 120.0
    qd_max: tuple | None = None  # defaults to the chain's limits
    damping: float = 1e-6
    singular_condition: float = SINGULARITY_CONDITION

    def __post_init__(self):
        if self.lam <= 0 or self.tolerance <= 0 or self.loop_rate <= 0 or self.max_duration <= 0:
            raise InvalidConfig("servo gain, tolerance, loop rate and duration must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.loop_rate


class ServoEvent(str, Enum):
    SINGULARITY = "Singularity"
    CLAMPED = "Clamped"
    JOINT_LIMIT = "JointLimit"


def camera_pose_base(chain: KinematicChain, q, rig: EyeInHand) -> RigidPose:
    return forward_kinematics(chain, q, check_limits=False) @ rig.extrinsics


def camera_to_joint_rates(chain: KinematicChain, q, extrinsics: RigidPose, v_cam, damping: float = 1e-6):
    """q_dot for a camera body twist; returns (q_dot, J)."""
    J = geometric_jacobian(chain, q)
    v_ee = twist_transform(extrinsics) @ np.asarray(v_cam, float)
    R = forward_kinematics(chain, q, check_limits=False).R
    v_base = np.concatenate([R @ v_ee[:3], R @ v_ee[3:]])
    return damped_pinv(J, damping) @ v_base, J


def servo_step(arm: JointState, chain: KinematicChain, rig: EyeInHand, track: TrackState,
               config: ServoConfig):
    """One 9 Hz control tick from the tracker estimate.

    Returns (new JointState, e_s, events, q_dot actually applied).
    """
    if not track.tracking:
        raise TrackingLost(f"tracker lost (e_proj={track.e_proj:.1f} deg)")
    s = features_from_pose(track.pose, rig.Z_star)
    e = s.vector - rig.s_star
    q = np.asarray(arm.q, dtype=float)
    events = []
    if not np.any(e):
        return JointState(q.copy()), e, events, np.zeros(6)
    L = interaction_matrix(s, float(track.pose.t[2]))
    v = control_law(L, e, config.lam)
    qd, J = camera_to_joint_rates(chain, q, rig.extrinsics, v, config.damping)
    if condition_number(J) > config.singular_condition:
        events.append(ServoEvent.SINGULARITY)
    lim = np.asarray(config.qd_max if config.qd_max is not None else chain.qd_max, dtype=float)
    clipped = np.clip(qd, -lim, lim)
    if np.any(clipped != qd):
        events.append(ServoEvent.CLAMPED)
    q_new = q + clipped * config.dt
    if not chain.within_limits(q_new):
        events.append(ServoEvent.JOINT_LIMIT)
        q_new = chain.clip(q_new)
    return JointState(q_new), e, events, clipped


# --- ideal closed loop (free-flying camera, exact features) --------------------------

def simulate_ideal(rel0: RigidPose, Z_star: float, s_star, config: ServoConfig | None = None,
                   max_steps: int = 5000) -> np.ndarray:
    """Error norms of the exact closed loop with the camera integrated on SE(3)."""
    cfg = config or ServoConfig()
    rel = rel0
    norms = []
    for _ in range(max_steps):
        s = features_from_pose(rel, Z_star)
        e = s.vector - np.asarray(s_star)
        norms.append(float(np.linalg.norm(e)))
        if norms[-1] < cfg.tolerance:
            break
        v = control_law(interaction_matrix(s, float(rel.t[2])), e, cfg.lam)
        rel = twist_exp(v * cfg.dt).inv() @ rel
    return np.asarray(norms)


# --- full run ------------------------------------------------------------------

@dataclass
class ServoResult:
    converged: bool
    reason: str | None
    time_s: float
    err_x: float | None
    err_y: float | None
    trajectory: list = field(default_factory=list, repr=False)
    q_final: np.ndarray | None = field(default=None, repr=False)
    max_e_proj: float = 0.0

    @property
    def offset(self) -> float | None:
        return None if self.err_x is None else float(np.hypot(self.err_x, self.err_y))


NOMINAL_Q = np.array([0.0, 0.0, 0.3, 0.0, 0.6, 0.0])


def look_at_start(tower: TowerState, block: Block, placement: TowerPlacement, rng: np.random.Generator,
                  distance=(0.25, 0.30), tilt_deg: float = 8.0, lateral: float = 0.015) -> RigidPose:
    """Camera start pose (robot base frame): facing the block from ``distance`` with small offsets."""
    fp = placement.pose @ face_pose(tower, block.level, block.slot)
    d = rng.uniform(*distance)
    ax, ay = np.radians(rng.uniform(-tilt_deg, tilt_deg, 2))
    off = np.array([rng.uniform(-lateral, lateral), rng.uniform(-lateral, lateral), -d])
    # camera frame aligned with the face, backed off along the face normal, then tilted
    return fp @ RigidPose(np.eye(3), off) @ RigidPose(rot_x(ax) @ rot_y(ay), [0, 0, 0])


def start_configuration(chain: KinematicChain, rig: EyeInHand, camera_base: RigidPose,
                        q0=None) -> tuple[np.ndarray, float]:
    seeds = [NOMINAL_Q if q0 is None else np.asarray(q0, float),
             np.array([0.0, 0.3, 0.6, 0.0, 0.4, 0.0]), np.array([0.0, -0.3, 0.0, 0.0, 1.0, 0.0])]
    best = None
    for q_init in seeds:
        q, res = solve_ik(chain, camera_base, q_init, tool=rig.extrinsics)
        if best is None or res < best[1]:
            best = (q, res)
        if res < 1e-9:
            break
    return best


def contact_offset(chain: KinematicChain, q, rig: EyeInHand, tower: TowerState, block: Block,
                   placement: TowerPlacement) -> tuple[float, float]:
    """Where the finger axis meets the true face plane, in face coordinates (m)."""
    ee = forward_kinematics(chain, q, check_limits=False)
    fp = placement.pose @ face_pose(tower, block.level, block.slot)
    p, d, n = ee.t, ee.R[:, 2], fp.R[:, 2]
    denom = float(d @ n)
    if abs(denom) < 1e-9:
        return float("inf"), float("inf")
    hit = p + d * float((fp.t - p) @ n) / denom
    local = fp.R.T @ (hit - fp.t)
    return float(local[0]), float(local[1])


def run_servo(start: JointState, target_block: Block, tower: TowerState, rig: EyeInHand | None = None,
              config: ServoConfig | None = None, seed: int = 0, *, chain: KinematicChain | None = None,
              placement: TowerPlacement | None = None, tracker: TrackerNoise | None = None,
              group: GroupModel | None = None, init_from_masks: bool = True) -> ServoResult:
    """Track the target and servo the finger in front of it at 9 Hz."""
    rig = rig or EyeInHand()
    cfg = config or ServoConfig()
    chain = chain or KinematicChain()
    placement = placement or TowerPlacement()
    tracker = tracker or TrackerNoise()
    group = group or build_group_model(tower, target_block)
    K = rig.intrinsics
    to_tower = placement.pose.inv()
    q = np.asarray(start.q, dtype=float)
    cam_tower = to_tower @ camera_pose_base(chain, q, rig)
    try:
        if init_from_masks:
            init = tracker_reinitialize(group, render_masks(cam_tower, K, tower), K, tower, cam_tower,
                                        tracker.err_thr_deg)
            residual = init.residual
        else:
            residual = None
        track = start_tracking(group, cam_tower, tower, K, tracker, seed, residual)
    except (TargetNotVisible, DegenerateMask, IllConditioned) as exc:
        return ServoResult(False, "InitFailure:" + type(exc).__name__, 0.0, None, None, [], q)
    traj = []
    dt = cfg.dt
    n_max = int(np.ceil(cfg.max_duration * cfg.loop_rate))
    max_e = track.e_proj
    k = 0
    while True:
        t = k * dt
        if not track.tracking:
            return ServoResult(False, "TrackingLost", t, None, None, traj, q, max_e)
        s = features_from_pose(track.pose, rig.Z_star)
        e = s.vector - rig.s_star
        traj.append((t, *q, float(np.linalg.norm(e)), *e))
        if np.linalg.norm(e) < cfg.tolerance:
            ex, ey = contact_offset(chain, q, rig, tower, target_block, placement)
            return ServoResult(True, None, t, ex, ey, traj, q, max_e)
        if k >= n_max:
            return ServoResult(False, "Timeout", t, None, None, traj, q, max_e)
        try:
            arm, _, events, _ = servo_step(JointState(q), chain, rig, track, cfg)
        except SingularFeatures:
            return ServoResult(False, "Singularity", t, None, None, traj, q, max_e)
        if ServoEvent.SINGULARITY in events:
            return ServoResult(False, "Singularity", t, None, None, traj, q, max_e)
        q = arm.q
        k += 1
        cam_tower = to_tower @ camera_pose_base(chain, q, rig)
        track = track_step(track, group, cam_tower, tower, K, tracker, seed)
        if np.isfinite(track.e_proj):
            max_e = max(max_e, track.e_proj)


TRAJECTORY_HEADER = ["t", "q1", "q2", "q3", "q4", "q5", "q6", "norm_e", "e1", "e2", "e3", "e4", "e5", "e6"]


def write_trajectory_csv(path, result: ServoResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for row in result.trajectory:
            w.writerow([f"{v:.9g}" for v in row])
