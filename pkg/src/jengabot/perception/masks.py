"""Oracle instance masks rendered from the tower model, plus controlled corruption."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, RigidPose
from ..tower import TowerState, block_corners

# cuboid faces as corner indices of tower.block_corners (ordered around the face)
_FACES = (
    (0, 1, 3, 2),  # -axis end
    (4, 6, 7, 5),  # +axis end
    (0, 4, 5, 1),  # -across side
    (2, 3, 7, 6),  # +across side
    (0, 2, 6, 4),  # bottom
    (1, 5, 7, 3),  # top
)
_NEAR = 0.01


@dataclass(eq=False)
class InstanceMask:
    block_id: int
    mask: np.ndarray  # bool, (height, width)
    confidence: float = 1.0
    image_id: int = 0

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class MaskNoise:
    jitter_px: float = 0.0
    dropout: float = 0.0
    boundary_flip: float = 0.3
    conf_sigma: float = 0.05

    @property
    def is_zero(self) -> bool:
        return self.jitter_px == 0.0 and self.dropout == 0.0


def _quad_inside(us: np.ndarray, vs: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """Pixel-center test against a convex polygon (any winding)."""
    inside_pos = np.ones(us.shape, dtype=bool)
    inside_neg = np.ones(us.shape, dtype=bool)
    n = len(quad)
    for k in range(n):
        x0, y0 = quad[k]
        x1, y1 = quad[(k + 1) % n]
        cross = (x1 - x0) * (vs - y0) - (y1 - y0) * (us - x0)
        inside_pos &= cross >= 0
        inside_neg &= cross <= 0
    return inside_pos | inside_neg


def render_masks(camera_pose: RigidPose, K: CameraIntrinsics, tower: TowerState,
                 image_id: int = 0) -> list[InstanceMask]:
    """Pixel-perfect instance masks of every visible block.

    ``camera_pose`` is the camera frame expressed in the tower frame. A block's
    mask is the visible part of its vertical face turned most toward the camera.
    Occlusion is resolved per pixel by depth along the viewing ray.
    """
    H, W = K.height, K.width
    zbuf = np.full((H, W), np.inf)
    labels = np.full((H, W), -1, dtype=int)
    cam_from_tower = camera_pose.inv()
    # pixel centers sit on integer coordinates; the tiny offset gives half-open edges
    for b in (b for lv in range(1, tower.n_levels + 1) for b in tower.present_blocks(lv)):
        corners = cam_from_tower.apply(block_corners(tower, b.level, b.slot))
        if np.any(corners[:, 2] <= _NEAR):
            continue
        center = corners.mean(axis=0)
        faces = []
        for face in _FACES:
            P = corners[list(face)]
            c = P.mean(axis=0)
            n = np.cross(P[1] - P[0], P[2] - P[0])
            n /= np.linalg.norm(n)
            if np.dot(n, c - center) < 0:
                n = -n  # outward
            faces.append((P, c, n, -np.dot(n, c) / np.linalg.norm(c)))
        # the block's instance is its most camera-facing vertical face; the
        # remaining faces still occlude but carry no label
        main = int(np.argmax([f[3] for f in faces[:4]]))
        for k, (P, c, n, facing) in enumerate(faces):
            if facing <= 0:
                continue  # back face
            label = b.id if k == main else -2
            uv = np.column_stack([K.fx * P[:, 0] / P[:, 2] + K.cx, K.fy * P[:, 1] / P[:, 2] + K.cy])
            j0 = max(int(np.floor(uv[:, 0].min())), 0)
            j1 = min(int(np.ceil(uv[:, 0].max())), W - 1)
            i0 = max(int(np.floor(uv[:, 1].min())), 0)
            i1 = min(int(np.ceil(uv[:, 1].max())), H - 1)
            if j0 > j1 or i0 > i1:
                continue
            jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
            us = jj + 1e-7
            vs = ii + 1e-7
            inside = _quad_inside(us, vs, uv)
            if not inside.any():
                continue
            rx = (us - K.cx) / K.fx
            ry = (vs - K.cy) / K.fy
            depth = np.dot(n, c) / (n[0] * rx + n[1] * ry + n[2])
            zsub = zbuf[i0:i1 + 1, j0:j1 + 1]
            closer = inside & (depth < zsub) & (depth > 0)
            zsub[closer] = depth[closer]
            labels[i0:i1 + 1, j0:j1 + 1][closer] = label
    masks = []
    for bid in np.unique(labels):
        if bid < 0:
            continue
        masks.append(InstanceMask(int(bid), labels == bid, 1.0, image_id))
    return masks


def mask_iou(a: InstanceMask, b: InstanceMask) -> float:
    if a.mask.shape != b.mask.shape:
        raise ValueError("masks must share image dimensions")
    union = np.logical_or(a.mask, b.mask).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a.mask, b.mask).sum() / union)


def _shift(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(mask)
    H, W = mask.shape
    src = mask[max(0, -dy):H - max(0, dy), max(0, -dx):W - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


def _boundary(mask: np.ndarray) -> np.ndarray:
    p = np.pad(mask, 1)
    interior = p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    grown = p[1:-1, 1:-1] | p[:-2, 1:-1] | p[2:, 1:-1] | p[1:-1, :-2] | p[1:-1, 2:]
    return grown & ~interior


def corrupt_masks(masks: list[InstanceMask], noise: MaskNoise, seed: int) -> list[InstanceMask]:
    """Imitate a segmentation network: shifted, ragged masks, missed instances, soft scores."""
    if noise.is_zero:
        return [InstanceMask(m.block_id, m.mask.copy(), m.confidence, m.image_id) for m in masks]
    rng = np.random.default_rng(seed)
    out = []
    for m in masks:
        # one draw block per mask regardless of outcome keeps streams aligned
        drop = rng.random() < noise.dropout
        dx, dy = np.rint(rng.normal(0.0, noise.jitter_px, size=2)).astype(int)
        flip_seed = int(rng.integers(2**31))
        conf_noise = rng.normal(0.0, noise.conf_sigma)
        if drop:
            continue
        new = _shift(m.mask, int(dx), int(dy))
        if noise.jitter_px > 0 and noise.boundary_flip > 0:
            band = _boundary(new)
            flips = np.random.default_rng(flip_seed).random(new.shape) < noise.boundary_flip
            new = new ^ (band & flips)
        if not new.any():
            continue
        iou = mask_iou(InstanceMask(0, new), m)
        conf = float(np.clip(0.5 + 0.5 * iou + conf_noise, 0.0, 1.0))
        out.append(InstanceMask(m.block_id, new, conf, m.image_id))
    return out
