"""Line-delimited mask set format.

    # masks width=640 height=480
    <image_id> <block_id> <confidence> <rle>

``rle`` is the row-major run-length encoding of the bitmap as comma-separated
run lengths, alternating background/foreground and starting with background
(so a mask whose first pixel is set begins with ``0``).
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .masks import InstanceMask

_HEADER = re.compile(r"#\s*masks\s+width=(\d+)\s+height=(\d+)\s*$")


def rle_encode(mask: np.ndarray) -> str:
    flat = np.asarray(mask, bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return ",".join(str(r) for r in runs)


def rle_decode(rle: str, height: int, width: int) -> np.ndarray:
    runs = [int(x) for x in rle.split(",")] if rle else []
    if any(r < 0 for r in runs):
        raise ValueError("negative run length")
    if sum(runs) != height * width:
        raise ValueError(f"run lengths sum to {sum(runs)}, expected {height * width}")
    vals = np.arange(len(runs)) % 2 == 1
    return np.repeat(vals, runs).reshape(height, width)


def format_masks(masks: list[InstanceMask]) -> str:
    if not masks:
        return "# masks width=0 height=0\n"
    h, w = masks[0].mask.shape
    lines = [f"# masks width={w} height={h}"]
    for m in masks:
        lines.append(f"{m.image_id} {m.block_id} {m.confidence:.6f} {rle_encode(m.mask)}")
    return "\n".join(lines) + "\n"


def parse_masks(text: str) -> list[InstanceMask]:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty mask file", 1)
    hm = _HEADER.match(lines[0].strip())
    if not hm:
        raise ParseError("missing '# masks width=W height=H' header", 1)
    w, h = int(hm.group(1)), int(hm.group(2))
    out = []
    for n, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", n)
        try:
            image_id, block_id, conf = int(parts[0]), int(parts[1]), float(parts[2])
            bitmap = rle_decode(parts[3], h, w)
        except ValueError as e:
            raise ParseError(str(e), n) from None
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"confidence {conf} outside [0, 1]", n)
        out.append(InstanceMask(block_id, bitmap, conf, image_id))
    return out


def write_masks(path, masks: list[InstanceMask]) -> None:
    Path(path).write_text(format_masks(masks))


def read_masks(path) -> list[InstanceMask]:
    return parse_masks(Path(path).read_text())
