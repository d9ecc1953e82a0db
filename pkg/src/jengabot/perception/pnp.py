"""Pose of a planar rectangle from its four imaged corners."""
from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from ..errors import IllConditioned
from ..geometry import CameraIntrinsics, RigidPose


def face_model_points(face_dims) -> np.ndarray:
    """Corners TL, TR, BR, BL of a w x h face in its own frame (x right, y down, z=0)."""
    w, h = face_dims
    return np.array([[-w / 2, -h / 2, 0.0], [w / 2, -h / 2, 0.0], [w / 2, h / 2, 0.0], [-w / 2, h / 2, 0.0]])


def project_points(pose: RigidPose, K: CameraIntrinsics, pts: np.ndarray) -> np.ndarray:
    pc = pose.apply(pts)
    return np.column_stack([K.fx * pc[:, 0] / pc[:, 2] + K.cx, K.fy * pc[:, 1] / pc[:, 2] + K.cy])


def homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """H with dst ~ H src, from >= 4 correspondences, Hartley-normalized."""
    def normalizer(p):
        c = p.mean(axis=0)
        s = np.sqrt(2) / max(np.mean(np.linalg.norm(p - c, axis=1)), 1e-12)
        return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])

    Ts, Td = normalizer(src), normalizer(dst)
    a = (Ts @ np.column_stack([src, np.ones(len(src))]).T).T
    b = (Td @ np.column_stack([dst, np.ones(len(dst))]).T).T
    rows = []
    for (x, y, _), (u, v, _) in zip(a, b):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, s, vt = np.linalg.svd(np.asarray(rows))
    if s[-2] < 1e-9 * s[0]:
        raise IllConditioned("homography system is rank deficient")
    H = np.linalg.inv(Td) @ vt[-1].reshape(3, 3) @ Ts
    return H / H[2, 2] if abs(H[2, 2]) > 1e-12 else H


def planar_pnp(corners, face_dims, K: CameraIntrinsics, refine: bool = True,
               model_points=None) -> RigidPose:
    """Face pose in the camera frame. ``corners`` are TL, TR, BR, BL pixels.

    Extra coplanar correspondences (z = 0 in the face frame) can be passed via
    ``model_points``, in which case ``corners`` holds one pixel per model point.
    """
    model = face_model_points(face_dims) if model_points is None else np.asarray(model_points, float)
    uv = np.asarray(corners, dtype=float).reshape(len(model), 2)
    if not np.all(np.isfinite(uv)):
        raise IllConditioned("non-finite corners")
    if np.any(np.abs(model[:, 2]) > 1e-12):
        raise IllConditioned("model points must lie in the z = 0 plane")
    sv = np.linalg.svd(uv - uv.mean(axis=0), compute_uv=False)
    if sv[0] <= 0 or sv[1] < 1e-3 * sv[0]:
        raise IllConditioned("corners are (nearly) collinear")
    Kinv = np.linalg.inv(K.K)
    H = homography_dlt(model[:, :2], uv)
    M = Kinv @ H
    lam = 2.0 / (np.linalg.norm(M[:, 0]) + np.linalg.norm(M[:, 1]))
    M = M * lam
    if M[2, 2] < 0:
        M = -M
    r1, r2, t = M[:, 0], M[:, 1], M[:, 2]
    U, _, Vt = np.linalg.svd(np.column_stack([r1, r2, np.cross(r1, r2)]))
    R = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
    if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)) or t[2] <= 0:
        raise IllConditioned("homography decomposition failed")
    pose = RigidPose(R, t)
    if not refine:
        return pose

    def resid(p):
        return (project_points(RigidPose(Rotation.from_rotvec(p[:3]).as_matrix(), p[3:]), K, model) - uv).ravel()

    x0 = np.concatenate([Rotation.from_matrix(R).as_rotvec(), t])
    sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not np.all(np.isfinite(sol.x)) or sol.x[5] <= 0:
        raise IllConditioned("pose refinement diverged")
    return RigidPose(Rotation.from_rotvec(sol.x[:3]).as_matrix(), sol.x[3:])
