"""Jenga tower state: block geometry, load paths, push reaction forces and collapse rules."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AlreadyExtracted, CollapsedTower, InvalidConfig, NotExtracted
from .geometry import RigidPose, rot_z

GRAVITY = 9.81
SAMPLE_RATE_HZ = 20.0
SAMPLE_DT = 1.0 / SAMPLE_RATE_HZ


class BlockStatus(str, Enum):
    PRESENT = "present"
    TESTED = "tested"
    EXTRACTED = "extracted"


class Stability(str, Enum):
    STABLE = "stable"
    COLLAPSED = "collapsed"


@dataclass(frozen=True)
class BlockDims:
    length: float = 0.075
    width: float = 0.025
    height: float = 0.015

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise InvalidConfig("block dimensions must be positive")
        if abs(self.length - 3 * self.width) > 1e-9:
            raise InvalidConfig("block length must equal three widths")


@dataclass
class TowerConfig:
    levels: int = 18
    length: float = 0.075
    width: float = 0.025
    height: float = 0.015
    mass: float = 0.018
    mu_min: float = 0.2
    mu_max: float = 0.45
    tolerance_bound: float = 2e-4
    contact_eps: float = 1e-4
    residual_load: float = 0.05
    residual_sigma: float = 0.01
    load_saturation: float = 1.1
    noise_sigma: float = 0.005
    quantum: float = 0.002
    full_scale: float = 5.0
    rise_time: float = 0.4
    base_orientation: int = 0
    critical_force_min: float = 0.48
    critical_force_max: float = 0.60
    damage_extraction: float = 0.03
    damage_placement: float = 0.01
    damage_push: float = 0.025

    def __post_init__(self):
        if self.levels < 3:
            raise InvalidConfig("a tower needs at least 3 levels")
        if self.base_orientation not in (0, 90):
            raise InvalidConfig("base_orientation must be 0 or 90")
        if not 0 < self.mu_min <= self.mu_max:
            raise InvalidConfig("friction range must satisfy 0 < mu_min <= mu_max")
        if self.tolerance_bound < 0 or self.noise_sigma < 0 or self.residual_load < 0:
            raise InvalidConfig("tolerance, noise and residual load must be non-negative")
        BlockDims(self.length, self.width, self.height)

    @property
    def dims(self) -> BlockDims:
        return BlockDims(self.length, self.width, self.height)

    @property
    def block_weight(self) -> float:
        return self.mass * GRAVITY


@dataclass
class Block:
    id: int
    level: int
    slot: int
    height_tolerance: float
    mu_top: float
    mu_bottom: float
    residual: float
    status: BlockStatus = BlockStatus.PRESENT
    origin_id: int | None = None  # set for pieces re-placed on top

    @property
    def present(self) -> bool:
        return self.status != BlockStatus.EXTRACTED


@dataclass
class ForceTrace:
    t: np.ndarray
    f: np.ndarray
    contact_start: int | None = None

    def __len__(self) -> int:
        return len(self.f)

    @property
    def peak(self) -> float:
        return float(self.f.max()) if len(self.f) else 0.0


@dataclass
class TowerState:
    config: TowerConfig
    seed: int
    blocks: dict[int, Block]
    level_slots: list[list[int | None]]  # index 0 is level 1
    critical_force_base: float
    damage: float = 0.0
    collapsed: bool = False
    collapse_cause: str | None = None
    overload: bool = False
    pending_top: list[int] = field(default_factory=list)
    extracted_count: dict[int, int] = field(default_factory=dict)

    @property
    def n_levels(self) -> int:
        return len(self.level_slots)

    @property
    def top_complete_level(self) -> int:
        for level in range(self.n_levels, 0, -1):
            if all(b is not None for b in self.level_slots[level - 1]):
                return level
        return 0

    @property
    def critical_force(self) -> float:
        """Largest push force the tower tolerates before toppling (N)."""
        return self.critical_force_base * max(0.0, 1.0 - self.damage)

    def orientation(self, level: int) -> int:
        return (self.config.base_orientation + 90 * ((level - 1) % 2)) % 180

    def block_at(self, level: int, slot: int) -> Block | None:
        bid = self.level_slots[level - 1][slot]
        return None if bid is None else self.blocks[bid]

    def level_blocks(self, level: int) -> list[Block]:
        return [self.blocks[b] for b in self.level_slots[level - 1] if b is not None]

    def present_blocks(self, level: int) -> list[Block]:
        return [b for b in self.level_blocks(level) if b.present]

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for bid in sorted(self.blocks):
            b = self.blocks[bid]
            h.update(f"{bid}:{b.level}:{b.slot}:{b.status.value}:{b.height_tolerance!r}:{b.mu_top!r}:"
                     f"{b.mu_bottom!r}:{b.residual!r};".encode())
        h.update(repr((self.level_slots, self.critical_force_base, round(self.damage, 12), self.collapsed,
                       self.overload, self.pending_top)).encode())
        return h.hexdigest()

    def _check_alive(self):
        if self.collapsed:
            raise CollapsedTower(self.collapse_cause or "tower collapsed")


def _sample_block(rng: np.random.Generator, cfg: TowerConfig, bid: int, level: int, slot: int) -> Block:
    # fixed draw order keeps towers identical across platforms for a given seed
    tol = rng.uniform(-cfg.tolerance_bound, cfg.tolerance_bound)
    mu_top = rng.uniform(cfg.mu_min, cfg.mu_max)
    mu_bottom = rng.uniform(cfg.mu_min, cfg.mu_max)
    residual = max(0.0, cfg.residual_load + cfg.residual_sigma * rng.standard_normal())
    return Block(bid, level, slot, float(tol), float(mu_top), float(mu_bottom), float(residual))


def new_tower(config: TowerConfig | None = None, seed: int = 0) -> TowerState:
    cfg = config or TowerConfig()
    rng = np.random.default_rng(seed)
    blocks: dict[int, Block] = {}
    level_slots: list[list[int | None]] = []
    for level in range(1, cfg.levels + 1):
        row = []
        for slot in range(3):
            bid = len(blocks)
            blocks[bid] = _sample_block(rng, cfg, bid, level, slot)
            row.append(bid)
        level_slots.append(row)
    crit = rng.uniform(cfg.critical_force_min, cfg.critical_force_max)
    return TowerState(cfg, seed, blocks, level_slots, float(crit))


def weight_above(tower: TowerState, level: int) -> float:
    w = tower.config.block_weight
    return w * sum(len(tower.present_blocks(lv)) for lv in range(level + 1, tower.n_levels + 1))


def bearing_slots(tower: TowerState, level: int) -> list[int]:
    """Slots whose block is within the contact epsilon of the layer's tallest block."""
    present = [b for b in tower.present_blocks(level)]
    if not present:
        return []
    h_max = max(b.height_tolerance for b in present)
    return [b.slot for b in present if b.height_tolerance >= h_max - tower.config.contact_eps]


def load_distribution(tower: TowerState, level: int) -> np.ndarray:
    """Normal load (N) each slot of a layer carries from the blocks above it.

    The tallest present blocks (within the contact epsilon) share the load
    evenly; shorter present blocks carry their residual load; absent slots 0.
    """
    tower._check_alive()
    if not 1 <= level <= tower.n_levels:
        raise ValueError(f"level {level} outside 1..{tower.n_levels}")
    loads = np.zeros(3)
    present = tower.present_blocks(level)
    total = weight_above(tower, level)
    if not present or total <= 0.0:
        return loads
    bearing = bearing_slots(tower, level)
    cap = total / len(present)
    residual_sum = 0.0
    for b in present:
        if b.slot not in bearing:
            loads[b.slot] = min(b.residual, cap)
            residual_sum += loads[b.slot]
    share = (total - residual_sum) / len(bearing)
    for s in bearing:
        loads[s] = share
    return loads


def is_load_bearing(tower: TowerState, block: Block) -> bool:
    return weight_above(tower, block.level) > 0 and block.slot in bearing_slots(tower, block.level)


def _saturate(n: float, n_sat: float) -> float:
    return n_sat * (1.0 - np.exp(-n / n_sat))


def plateau_force(tower: TowerState, block: Block) -> float:
    """Noise-free static friction (N) resisting a push of this block."""
    cfg = tower.config
    n_top = load_distribution(tower, block.level)[block.slot]
    n_bottom = n_top + cfg.block_weight
    return (block.mu_top * _saturate(n_top, cfg.load_saturation)
            + block.mu_bottom * _saturate(n_bottom, cfg.load_saturation))


def reaction_force_profile(tower: TowerState, block: Block, push_speed: float, duration: float,
                           seed: int, approach_gap: float = 0.0, travel: float | None = None) -> ForceTrace:
    """Force sensor samples (20 Hz) for a straight push of ``block``.

    The finger closes ``approach_gap`` before touching the face; the block
    slides once the finger has pushed it (it leaves the tower after
    ``travel``, default one block length).
    """
    tower._check_alive()
    if not block.present:
        raise AlreadyExtracted(f"block {block.id} already extracted")
    cfg = tower.config
    n = int(np.floor(duration * SAMPLE_RATE_HZ + 1e-9))
    t = np.arange(n) * SAMPLE_DT
    if n == 0:
        return ForceTrace(t, np.zeros(0), None)
    rng = np.random.default_rng(seed)
    travel = cfg.length if travel is None else travel
    plateau = plateau_force(tower, block)
    t_contact = approach_gap / push_speed
    t_out = t_contact + travel / push_speed
    ramp = np.clip((t - t_contact) / cfg.rise_time, 0.0, 1.0) if cfg.rise_time > 0 else (t >= t_contact) * 1.0
    clean = plateau * ramp * (t >= t_contact) * (t < t_out)
    f = clean + cfg.noise_sigma * rng.standard_normal(n)
    f = np.clip(f, 0.0, cfg.full_scale)
    if cfg.quantum > 0:
        f = np.round(f / cfg.quantum) * cfg.quantum
    idx = np.nonzero(t >= t_contact)[0]
    return ForceTrace(t, f, int(idx[0]) if len(idx) else None)


def stability_check(tower: TowerState) -> Stability:
    """Support rule: every non-top layer keeps its center or both sides."""
    if tower.collapsed or tower.overload:
        return Stability.COLLAPSED
    top = max((lv for lv in range(1, tower.n_levels + 1) if tower.present_blocks(lv)), default=0)
    for level in range(1, top):
        left, center, right = (tower.block_at(level, s) for s in range(3))
        has = [b is not None and b.present for b in (left, center, right)]
        if not (has[1] or (has[0] and has[2])):
            return Stability.COLLAPSED
    return Stability.STABLE


def _collapse(tower: TowerState, cause: str):
    tower.collapsed = True
    tower.collapse_cause = cause


def register_push(tower: TowerState, peak: float, extracted: bool) -> None:
    """Account for the disturbance of a push; topples the tower if ``peak`` exceeds its critical force."""
    tower._check_alive()
    if peak >= tower.critical_force:
        tower.overload = True
        _collapse(tower, "overload_push")
        return
    if not extracted:
        tower.damage += tower.config.damage_push


def apply_extraction(tower: TowerState, block: Block) -> TowerState:
    tower._check_alive()
    if block.status == BlockStatus.EXTRACTED:
        raise AlreadyExtracted(f"block {block.id} already extracted")
    block.status = BlockStatus.EXTRACTED
    tower.extracted_count[block.level] = tower.extracted_count.get(block.level, 0) + 1
    tower.pending_top.append(block.id)
    tower.damage += tower.config.damage_extraction
    if stability_check(tower) == Stability.COLLAPSED:
        _collapse(tower, "unsupported_layer")
    return tower


def mark_tested(tower: TowerState, block: Block) -> None:
    if block.status == BlockStatus.PRESENT:
        block.status = BlockStatus.TESTED


def place_extracted_on_top(tower: TowerState, block: Block) -> Block:
    """Put an extracted piece on the top layer; returns the new block record."""
    tower._check_alive()
    if block.status != BlockStatus.EXTRACTED or block.id not in tower.pending_top:
        raise NotExtracted(f"block {block.id} is not an unplaced extracted block")
    top = tower.level_slots[-1]
    if all(b is not None for b in top):
        tower.level_slots.append([None, None, None])
        top = tower.level_slots[-1]
    slot = top.index(None)
    level = tower.n_levels
    bid = max(tower.blocks) + 1
    new = Block(bid, level, slot, block.height_tolerance, block.mu_top, block.mu_bottom,
                block.residual, BlockStatus.PRESENT, origin_id=block.id)
    tower.blocks[bid] = new
    top[slot] = bid
    tower.pending_top.remove(block.id)
    tower.damage += tower.config.damage_placement
    return new


# --- placement in the robot base frame -------------------------------------

@dataclass(frozen=True)
class TowerPlacement:
    """Pose of the tower base (center of the bottom face) in the robot base frame."""

    x: float = 0.45
    y: float = 0.0
    z: float = 0.15
    yaw: float = np.pi / 4

    @property
    def pose(self) -> RigidPose:
        return RigidPose(rot_z(self.yaw), [self.x, self.y, self.z])

    def rotated(self, extra_yaw: float) -> "TowerPlacement":
        return TowerPlacement(self.x, self.y, self.z, self.yaw + extra_yaw)

    def at_height(self, z: float) -> "TowerPlacement":
        return TowerPlacement(self.x, self.y, z, self.yaw)


def block_axes(orientation: int) -> tuple[np.ndarray, np.ndarray]:
    """(long axis, across axis) of a layer in the tower frame."""
    if orientation == 0:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    return np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])


def block_center(tower: TowerState, level: int, slot: int) -> np.ndarray:
    d = tower.config.dims
    _, across = block_axes(tower.orientation(level))
    return across * (slot - 1) * d.width + np.array([0.0, 0.0, (level - 0.5) * d.height])


def push_direction(orientation: int) -> np.ndarray:
    # robot sits on the -x side of a tower yawed by 45 deg: it pushes +x on 0-deg
    # layers and -y on 90-deg layers
    return np.array([1.0, 0.0, 0.0]) if orientation == 0 else np.array([0.0, -1.0, 0.0])


def face_pose(tower: TowerState, level: int, slot: int) -> RigidPose:
    """Frame on the pushed face: origin at face center, z into the block, y down."""
    z = push_direction(tower.orientation(level))
    y = np.array([0.0, 0.0, -1.0])
    x = np.cross(y, z)
    center = block_center(tower, level, slot) - 0.5 * tower.config.length * z
    return RigidPose(np.column_stack([x, y, z]), center)


def block_corners(tower: TowerState, level: int, slot: int) -> np.ndarray:
    """8 cuboid corners (tower frame)."""
    d = tower.config.dims
    axis, across = block_axes(tower.orientation(level))
    c = block_center(tower, level, slot)
    up = np.array([0.0, 0.0, 1.0])
    out = []
    for sa in (-1, 1):
        for sb in (-1, 1):
            for sc in (-1, 1):
                out.append(c + sa * axis * d.length / 2 + sb * across * d.width / 2 + sc * up * d.height / 2)
    return np.array(out)
