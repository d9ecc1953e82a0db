"""Group-model tracker with a projection-error failure detector.

The tracker is simulated: its estimate is the true face pose composed with a
pose error made of a viewpoint-dependent bias and a motion-induced part that
wanders while the camera and tower move relative to each other. Both scale as
1/sqrt(n) in the number of visible model points. A static scene keeps a
static estimate. Whatever residual the last (re)initialization left decays.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from ..errors import DegenerateMask, TargetNotVisible
from ..geometry import (CameraIntrinsics, RigidPose, axis_angle_to_rotation, rotation_angle,
                        rotation_to_axis_angle)
from ..tower import Block, TowerState, block_center, block_corners, face_pose
from .corners import front_face_corners
from .masks import InstanceMask
from .pnp import face_model_points, planar_pnp

ERR_THR_DEG = 25.0


class TrackStatus(str, Enum):
    TRACKING = "Tracking"
    LOST = "Lost"


@dataclass(frozen=True)
class GroupMember:
    block_id: int
    level: int
    slot: int
    side_facing: bool


@dataclass
class GroupModel:
    target_id: int
    level: int
    slot: int
    members: list[GroupMember]
    points: np.ndarray  # (N, 3) model points in the target face frame
    owners: np.ndarray  # (N,) member block id per point

    @property
    def block_ids(self) -> list[int]:
        return [m.block_id for m in self.members]

    @property
    def n_points(self) -> int:
        return len(self.points)

    def single(self) -> "GroupModel":
        """The target-only model."""
        keep = self.owners == self.target_id
        return GroupModel(self.target_id, self.level, self.slot, self.members[:1],
                          self.points[keep], self.owners[keep])


@dataclass(frozen=True)
class TrackerNoise:
    """Per-axis errors are quoted for a one-point model and shrink as 1/sqrt(n)."""

    rot_sigma0_deg: float = 30.0  # motion-induced rotation error
    trans_sigma0: float = 0.0039  # motion-induced translation error (m)
    static_rot_sigma0_deg: float = 8.0  # viewpoint-dependent bias, rotation
    static_trans_sigma0: float = 0.0039  # viewpoint-dependent bias, translation (m)
    corr_length: float = 0.1  # path length scale of the motion-induced error
    static_freq: float = 1.0  # spatial frequency of the bias field (per unit of pose)
    trans_scale: float = 0.1  # m of relative translation counted as one unit of pose
    speed_ref: float = 0.05  # path units/s at which motion error is fully developed
    rate_hz: float = 9.0
    refine_gain: float = 0.5  # fraction of init residual removed per step
    err_thr_deg: float = ERR_THR_DEG

    @property
    def is_zero(self) -> bool:
        return (self.rot_sigma0_deg == 0.0 and self.trans_sigma0 == 0.0
                and self.static_rot_sigma0_deg == 0.0 and self.static_trans_sigma0 == 0.0)


@dataclass
class TrackState:
    pose: RigidPose  # estimated target face pose in the camera frame
    e_proj: float = 0.0
    status: TrackStatus = TrackStatus.TRACKING
    residual: RigidPose = field(default_factory=RigidPose.identity)
    steps: int = 0
    path: float = 0.0  # relative motion accumulated since (re)initialization
    last_rel: RigidPose | None = None

    @property
    def tracking(self) -> bool:
        return self.status is TrackStatus.TRACKING


# --- group model -------------------------------------------------------------

def _front_face_points(tower: TowerState, level: int, slot: int) -> np.ndarray:
    fp = face_pose(tower, level, slot)
    d = tower.config.dims
    return fp.apply(face_model_points((d.width, d.height)))


def build_group_model(tower: TowerState, target: Block) -> GroupModel:
    if not target.present:
        raise ValueError(f"block {target.id} is not present")
    members = [GroupMember(target.id, target.level, target.slot, False)]
    for s in (target.slot - 1, target.slot + 1):
        b = tower.block_at(target.level, s) if 0 <= s <= 2 else None
        if b is not None and b.present:
            members.append(GroupMember(b.id, b.level, b.slot, False))
    for lv in (target.level + 1, target.level - 1):
        if 1 <= lv <= tower.n_levels:
            for b in tower.present_blocks(lv):
                members.append(GroupMember(b.id, b.level, b.slot, True))
    to_face = face_pose(tower, target.level, target.slot).inv()
    pts, owners = [], []
    for m in members:
        # a side-facing block shows a long face and its edges: all 8 corners;
        # front-facing blocks only show their end face
        p = block_corners(tower, m.level, m.slot) if m.side_facing else _front_face_points(tower, m.level, m.slot)
        pts.append(to_face.apply(p))
        owners += [m.block_id] * len(p)
    return GroupModel(target.id, target.level, target.slot, members, np.vstack(pts), np.array(owners))


# --- simulated estimation error ------------------------------------------------

def path_length(a: RigidPose, b: RigidPose, trans_scale: float) -> float:
    return rotation_angle(a.R.T @ b.R) + float(np.linalg.norm(b.t - a.t)) / trans_scale


@dataclass(frozen=True)
class _PathField:
    freq: np.ndarray  # (M,)
    phase: np.ndarray  # (M,)
    amp: np.ndarray  # (M, 6)

    def value(self, s: float) -> np.ndarray:
        return np.sqrt(2.0 / len(self.freq)) * (np.sin(self.freq * s + self.phase) @ self.amp)


@lru_cache(maxsize=512)
def _path_field(corr_length: float, seed: int, n_terms: int = 32) -> _PathField:
    rng = np.random.default_rng(seed)
    # band-limited spectrum: no near-zero frequencies, so no arbitrarily long calm stretches
    freq = rng.uniform(0.5, 1.5, n_terms) / corr_length
    return _PathField(freq, rng.uniform(0, 2 * np.pi, n_terms),
                      rng.standard_normal((n_terms, 6)))


def unit_error(path: float, corr_length: float, seed: int) -> np.ndarray:
    """Smooth stationary unit-variance 6-vector along the motion path, zero at path 0."""
    f = _path_field(corr_length, seed)
    return f.value(path) - f.value(0.0) * np.exp(-path / corr_length)


@dataclass(frozen=True)
class _PoseField:
    w: np.ndarray  # (M, 6)
    phase: np.ndarray  # (M,)
    amp: np.ndarray  # (M, 6)

    def value(self, g: np.ndarray) -> np.ndarray:
        return np.sqrt(2.0 / len(self.phase)) * (np.sin(self.w @ g + self.phase) @ self.amp)


@lru_cache(maxsize=512)
def _pose_field(freq: float, seed: int, n_terms: int = 16) -> _PoseField:
    rng = np.random.default_rng([seed, 1])
    return _PoseField(rng.normal(0.0, freq, (n_terms, 6)), rng.uniform(0, 2 * np.pi, n_terms),
                      rng.standard_normal((n_terms, 6)))


def static_error(rel: RigidPose, noise: TrackerNoise, seed: int) -> np.ndarray:
    """Unit-variance bias as a smooth function of the viewpoint."""
    g = np.concatenate([rotation_to_axis_angle(rel.R), rel.t / noise.trans_scale])
    return _pose_field(noise.static_freq, seed).value(g)


def motion_gain(speed: float, speed_ref: float) -> float:
    # quadratic onset: the motion error dies out faster than the motion itself
    return min(1.0, (speed / speed_ref) ** 2) if speed_ref > 0 else 1.0


def visible_points(group: GroupModel, rel: RigidPose, K: CameraIntrinsics) -> int:
    pc = rel.apply(group.points)
    ok = pc[:, 2] > 1e-6
    u = K.fx * pc[ok, 0] / pc[ok, 2] + K.cx
    v = K.fy * pc[ok, 1] / pc[ok, 2] + K.cy
    return int(np.count_nonzero((u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)))


def _scaled(p: RigidPose, k: float) -> RigidPose:
    return RigidPose.from_rotvec(k * rotation_to_axis_angle(p.R), k * p.t)


def target_in_view(rel: RigidPose, K: CameraIntrinsics) -> bool:
    if rel.t[2] <= 0:
        return False
    u = K.fx * rel.t[0] / rel.t[2] + K.cx
    v = K.fy * rel.t[1] / rel.t[2] + K.cy
    return 0 <= u < K.width and 0 <= v < K.height


def true_relative_pose(camera_pose: RigidPose, tower: TowerState, group: GroupModel) -> RigidPose:
    return camera_pose.inv() @ face_pose(tower, group.level, group.slot)


def track_step(state: TrackState, group: GroupModel, camera_pose_true: RigidPose, tower: TowerState,
               K: CameraIntrinsics, noise_cfg: TrackerNoise, seed: int) -> TrackState:
    """One tracker update for a camera at ``camera_pose_true`` (tower frame).

    The estimate is off by a viewpoint-dependent bias plus a motion-induced
    error that wanders along the relative path and fades when motion stops,
    both scaled by 1/sqrt(visible model points). A model with more visible
    points therefore sees the same error, smaller.
    """
    if not state.tracking:
        return state
    rel = true_relative_pose(camera_pose_true, tower, group)
    steps = state.steps + 1
    if not target_in_view(rel, K):
        return replace(state, e_proj=float("inf"), status=TrackStatus.LOST, steps=steps, last_rel=rel)
    ds = 0.0 if state.last_rel is None else path_length(state.last_rel, rel, noise_cfg.trans_scale)
    path = state.path + ds
    n = visible_points(group, rel, K)
    if n == 0 or noise_cfg.is_zero:
        err = RigidPose.identity()
    else:
        gain = motion_gain(ds * noise_cfg.rate_hz, noise_cfg.speed_ref)
        dyn = gain * unit_error(path, noise_cfg.corr_length, seed)
        stat = static_error(rel, noise_cfg, seed)
        rot = np.radians(noise_cfg.rot_sigma0_deg) * dyn[:3] + np.radians(noise_cfg.static_rot_sigma0_deg) * stat[:3]
        trans = noise_cfg.trans_sigma0 * dyn[3:] + noise_cfg.static_trans_sigma0 * stat[3:]
        k = 1.0 / np.sqrt(n)
        err = RigidPose.from_rotvec(k * rot, k * trans)
    total = err @ state.residual
    e_proj = float(np.degrees(rotation_angle(total.R)))
    status = TrackStatus.LOST if e_proj > noise_cfg.err_thr_deg else TrackStatus.TRACKING
    return TrackState(rel @ total, e_proj, status, _scaled(state.residual, 1.0 - noise_cfg.refine_gain),
                      steps, path, rel)


def start_tracking(group: GroupModel, camera_pose_true: RigidPose, tower: TowerState, K: CameraIntrinsics,
                   noise_cfg: TrackerNoise, seed: int, residual: RigidPose | None = None) -> TrackState:
    rel = true_relative_pose(camera_pose_true, tower, group)
    init = TrackState(rel, 0.0, TrackStatus.TRACKING, residual or RigidPose.identity())
    return track_step(init, group, camera_pose_true, tower, K, noise_cfg, seed)


def inject_jump(state: TrackState, theta_u_deg) -> TrackState:
    """Sudden unmodelled motion: the estimate is left behind by the given rotation."""
    jump = RigidPose.from_rotvec(np.radians(np.asarray(theta_u_deg, float)))
    return replace(state, residual=jump @ state.residual)


# --- re-initialization from masks -----------------------------------------------

def tracker_reinitialize(group: GroupModel, masks: list[InstanceMask], K: CameraIntrinsics,
                         tower: TowerState | None = None, camera_pose_true: RigidPose | None = None,
                         err_thr_deg: float = ERR_THR_DEG) -> TrackState:
    """Fresh pose from mask corners and planar PnP.

    Corners of visible same-level neighbours lie in the target's face plane and
    join the solve. With ``tower`` and ``camera_pose_true`` given, e_proj is
    measured against the truth.
    """
    by_id = {m.block_id: m for m in masks}
    if group.target_id not in by_id:
        raise TargetNotVisible(f"no mask for block {group.target_id}")
    uv, model = [], []
    coplanar = [m for m in group.members if not m.side_facing]
    for m in coplanar:
        if m.block_id not in by_id:
            continue
        try:
            c = front_face_corners(by_id[m.block_id])
        except DegenerateMask:
            if m.block_id == group.target_id:
                raise
            continue
        keep = group.owners == m.block_id
        uv.append(c)
        model.append(group.points[keep])
    model = np.vstack(model)
    model[:, 2] = 0.0  # end faces of one layer share the target plane
    est = planar_pnp(np.vstack(uv), None, K, model_points=model)
    if tower is None or camera_pose_true is None:
        return TrackState(est)
    rel = true_relative_pose(camera_pose_true, tower, group)
    residual = rel.inv() @ est
    e_proj = float(np.degrees(rotation_angle(residual.R)))
    status = TrackStatus.LOST if e_proj > err_thr_deg else TrackStatus.TRACKING
    return TrackState(est, e_proj, status, residual)
