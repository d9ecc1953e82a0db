"""Sub-space block-selection policy with a memory buffer."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CollapsedTower, IncompleteLevel, InvalidConfig, InvalidWorkspace, UnknownBlock
from .force import OutcomeKind, Phase, PushOutcome, ThresholdSchedule
from .tower import Block, BlockStatus, TowerState


@dataclass(frozen=True)
class PolicyConfig:
    workspace_low: int = 3  # lowest reachable level
    workspace_high: int = 16  # highest reachable level
    split: int | None = None  # first level of the upper sub-space; default halves the range
    start: str = "random"  # random | low | high
    thr_aggressive: float = 0.32
    thr_conservative: float = 0.18
    allow_retry: bool = False
    top_exclusion: int = 2  # top levels never selectable

    def __post_init__(self):
        if self.start not in ("random", "low", "high"):
            raise InvalidConfig("policy start must be random, low or high")
        if self.top_exclusion < 0:
            raise InvalidConfig("top_exclusion must be non-negative")


@dataclass
class BlockRecord:
    status: BlockStatus = BlockStatus.PRESENT
    threshold: float | None = None
    attempts: int = 0


@dataclass
class MemoryBuffer:
    records: dict[int, BlockRecord] = field(default_factory=dict)

    def get(self, block_id: int) -> BlockRecord:
        return self.records.setdefault(block_id, BlockRecord())

    def snapshot(self) -> dict:
        return {k: (v.status.value, v.threshold, v.attempts) for k, v in sorted(self.records.items())}


@dataclass(frozen=True)
class Candidate:
    block_id: int
    level: int
    slot: int


class Decision(str, Enum):
    SWITCH = "SwitchSubspace"
    GAME_OVER = "GameOver"


@dataclass
class PolicyState:
    subspaces: list[list[int]]  # in visiting order
    names: list[str]
    current: int
    schedule: ThresholdSchedule
    memory: MemoryBuffer = field(default_factory=MemoryBuffer)
    level_extractions: dict[int, int] = field(default_factory=dict)
    registered: list[int] = field(default_factory=list)
    started_high: bool = False
    retry_used: set = field(default_factory=set)
    last_candidate: int | None = None
    config: PolicyConfig = field(default_factory=PolicyConfig)
    thresholds_seen: list[float] = field(default_factory=list)

    @property
    def current_levels(self) -> list[int]:
        return self.subspaces[self.current] if self.current < len(self.subspaces) else []

    @property
    def testable_levels(self) -> list[int]:
        return sorted(lv for s in self.subspaces for lv in s)

    def copy(self) -> "PolicyState":
        return copy.deepcopy(self)


def init_policy(config: PolicyConfig | None = None, n_levels: int = 18, seed: int = 0) -> PolicyState:
    cfg = config or PolicyConfig()
    lo, hi = cfg.workspace_low, min(cfg.workspace_high, n_levels - cfg.top_exclusion)
    if lo < 1 or hi < lo:
        raise InvalidWorkspace(f"empty reachable level range [{cfg.workspace_low}, {cfg.workspace_high}]")
    split = cfg.split if cfg.split is not None else lo + (hi - lo + 1) // 2
    low, high = list(range(lo, split)), list(range(split, hi + 1))
    if len(low) < 2 or len(high) < 2:
        raise InvalidWorkspace("each sub-space needs at least 2 levels")
    start = cfg.start
    if start == "random":
        start = "low" if np.random.default_rng(seed).random() < 0.5 else "high"
    if start == "low":
        subspaces, names = [low, high], ["low", "high"]
    else:
        # extra levels formed during the game make up a third sub-space
        subspaces, names = [high, low, []], ["high", "low", "extra"]
    return PolicyState(subspaces, names, 0, ThresholdSchedule(cfg.thr_aggressive, cfg.thr_conservative),
                       started_high=start == "high", config=cfg)


def current_threshold(policy: PolicyState) -> float:
    return policy.schedule.active


def _selectable(policy: PolicyState, tower: TowerState, level: int) -> list[Block]:
    if policy.level_extractions.get(level, 0) > 0 or tower.extracted_count.get(level, 0) > 0:
        return []
    if level > tower.top_complete_level - policy.config.top_exclusion:
        return []
    return [b for b in tower.present_blocks(level) if policy.memory.get(b.id).status == BlockStatus.PRESENT]


def _retry_pool(policy: PolicyState, tower: TowerState) -> list[Block]:
    """Tested blocks probed under a higher threshold, each retried at most once."""
    out = []
    for lv in policy.testable_levels:
        if policy.level_extractions.get(lv, 0) > 0 or lv > tower.top_complete_level - policy.config.top_exclusion:
            continue
        for b in tower.present_blocks(lv):
            rec = policy.memory.get(b.id)
            if (rec.status == BlockStatus.TESTED and b.id not in policy.retry_used
                    and rec.threshold is not None and rec.threshold > current_threshold(policy)):
                out.append(b)
    return out


def candidates(policy: PolicyState, tower: TowerState, levels=None) -> list[Block]:
    levels = policy.current_levels if levels is None else levels
    return [b for lv in sorted(levels) for b in _selectable(policy, tower, lv)]


def select_block(policy: PolicyState, tower: TowerState, seed: int):
    """Candidate, Decision.SWITCH, or Decision.GAME_OVER."""
    if tower.collapsed:
        raise CollapsedTower(tower.collapse_cause or "tower collapsed")
    pool = candidates(policy, tower)
    if pool:
        b = pool[int(np.random.default_rng(seed).integers(len(pool)))]
        policy.last_candidate = b.id
        policy.thresholds_seen.append(current_threshold(policy))
        return Candidate(b.id, b.level, b.slot)
    for nxt in range(policy.current + 1, len(policy.subspaces)):
        if candidates(policy, tower, policy.subspaces[nxt]):
            return Decision.SWITCH
    if policy.config.allow_retry:
        # the game would end here: one more try for blocks probed under a higher threshold
        pool = _retry_pool(policy, tower)
        if pool:
            b = pool[int(np.random.default_rng(seed).integers(len(pool)))]
            policy.last_candidate = b.id
            policy.thresholds_seen.append(current_threshold(policy))
            return Candidate(b.id, b.level, b.slot)
    return Decision.GAME_OVER


def switch_subspace(policy: PolicyState, tower: TowerState) -> PolicyState:
    for nxt in range(policy.current + 1, len(policy.subspaces)):
        if candidates(policy, tower, policy.subspaces[nxt]):
            policy.current = nxt
            policy.schedule.advance()
            return policy
    raise InvalidWorkspace("no further sub-space with candidates")


def record_outcome(policy: PolicyState, block: Block, outcome: PushOutcome | None) -> PolicyState:
    """Update the memory buffer; ``None`` or a slip (minor failure) leaves it untouched."""
    if block.id != policy.last_candidate:
        raise UnknownBlock(f"block {block.id} was not the last candidate")
    if outcome is None or outcome.kind is OutcomeKind.SLIPPED:
        return policy
    rec = policy.memory.get(block.id)
    if rec.status == BlockStatus.TESTED:
        policy.retry_used.add(block.id)
    rec.attempts += 1
    rec.threshold = outcome.threshold
    if outcome.kind is OutcomeKind.EXTRACTED:
        rec.status = BlockStatus.EXTRACTED
        policy.level_extractions[block.level] = policy.level_extractions.get(block.level, 0) + 1
    else:
        rec.status = BlockStatus.TESTED
    return policy


def register_new_level(policy: PolicyState, tower: TowerState) -> PolicyState:
    """Make the level that just became testable (two below a complete top) selectable."""
    level = tower.top_complete_level - policy.config.top_exclusion
    if level in policy.testable_levels or level < 1:
        raise IncompleteLevel(f"no newly completed level (top complete level {tower.top_complete_level})")
    if policy.started_high:
        policy.subspaces[2].append(level)
    else:
        policy.subspaces[1].append(level)
    policy.registered.append(level)
    return policy


def min_attempt_budget(n_levels: int, new_levels: int = 0) -> int:
    return 3 * (n_levels + new_levels)


def min_extraction_budget(n_levels: int, new_levels: int = 0) -> int:
    return n_levels + new_levels


def phase_of(policy: PolicyState) -> Phase:
    return policy.schedule.phase
