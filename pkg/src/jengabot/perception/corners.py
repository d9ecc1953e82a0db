"""Front-face corner extraction from a binary mask."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateMask

MIN_AREA = 50
MAX_RESIDUAL_PX = 1.0


def _boundary_points(mask: np.ndarray) -> np.ndarray:
    """Sub-pixel boundary samples: midpoints between inside and outside pixel centers."""
    p = np.pad(mask.astype(bool), 1)
    pts = []
    # horizontal transitions
    h = p[:, 1:] != p[:, :-1]
    ii, jj = np.nonzero(h)
    pts.append(np.column_stack([jj - 0.5, ii - 1.0]))
    v = p[1:, :] != p[:-1, :]
    ii, jj = np.nonzero(v)
    pts.append(np.column_stack([jj - 1.0, ii - 0.5]))
    return np.vstack(pts)


def _coarse_quad(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    p1 = pts[np.argmax(((pts - c) ** 2).sum(axis=1))]
    p2 = pts[np.argmax(((pts - p1) ** 2).sum(axis=1))]
    d = p2 - p1
    side = d[0] * (pts[:, 1] - p1[1]) - d[1] * (pts[:, 0] - p1[0])
    p3 = pts[np.argmax(side)]
    p4 = pts[np.argmin(side)]
    return np.array([p1, p3, p2, p4])


def _seg_dist(pts, a, b):
    ab = b - a
    t = np.clip(((pts - a) @ ab) / max(ab @ ab, 1e-12), 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def _fit_line(pts):
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c)
    n = vt[1]
    return n, float(n @ c)


def _intersect(l1, l2):
    A = np.array([l1[0], l2[0]])
    return np.linalg.solve(A, [l1[1], l2[1]])


def order_corners(quad: np.ndarray) -> np.ndarray:
    """TL, TR, BR, BL in image coordinates (v grows downward)."""
    c = quad.mean(axis=0)
    ang = np.arctan2(quad[:, 1] - c[1], quad[:, 0] - c[0])
    q = quad[np.argsort(ang)]  # clockwise on screen
    start = np.argmin(q.sum(axis=1))
    return np.roll(q, -start, axis=0)


def front_face_corners(mask) -> np.ndarray:
    """Fit a quadrilateral to the mask outline; returns a (4, 2) array TL, TR, BR, BL."""
    m = getattr(mask, "mask", mask)
    area = int(np.count_nonzero(m))
    if area < MIN_AREA:
        raise DegenerateMask(f"mask area {area} px below minimum {MIN_AREA}")
    pts = _boundary_points(m)
    quad = _coarse_quad(pts)
    for _ in range(2):
        d = np.column_stack([_seg_dist(pts, quad[k], quad[(k + 1) % 4]) for k in range(4)])
        owner = np.argmin(d, axis=1)
        near_corner = np.min(np.linalg.norm(pts[:, None, :] - quad[None], axis=2), axis=1) < 2.0
        lines = []
        for k in range(4):
            sel = pts[(owner == k) & ~near_corner]
            if len(sel) < 2:
                raise DegenerateMask("edge without enough boundary support")
            lines.append(_fit_line(sel))
        try:
            quad = np.array([_intersect(lines[k - 1], lines[k]) for k in range(4)])
        except np.linalg.LinAlgError:
            raise DegenerateMask("parallel edges in quadrilateral fit") from None
    d = np.column_stack([_seg_dist(pts, quad[k], quad[(k + 1) % 4]) for k in range(4)])
    resid = float(np.sqrt(np.mean(np.min(d, axis=1) ** 2)))
    if not np.isfinite(resid) or resid > MAX_RESIDUAL_PX:
        raise DegenerateMask(f"quadrilateral fit residual {resid:.2f} px")
    return order_corners(quad)
