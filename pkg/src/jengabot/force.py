"""Push primitive and force-threshold removability classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CollapsedTower, InvalidConfig, NoContact
from .tower import (SAMPLE_DT, Block, ForceTrace, TowerState, apply_extraction, reaction_force_profile,
                    register_push)

THR_AGGRESSIVE = 0.32
THR_CONSERVATIVE = 0.18


class Phase(str, Enum):
    FIRST = "FirstSubspace"
    SECOND = "SecondSubspace"


class PushClass(str, Enum):
    REMOVABLE = "Removable"
    STUCK = "Stuck"


class OutcomeKind(str, Enum):
    EXTRACTED = "Extracted"
    STUCK = "Stuck"
    ABORTED = "Aborted"
    SLIPPED = "Slipped"  # finger slid off a badly aligned face; no force evidence


@dataclass
class ThresholdSchedule:
    thr_aggressive: float = THR_AGGRESSIVE
    thr_conservative: float = THR_CONSERVATIVE
    phase: Phase = Phase.FIRST

    def __post_init__(self):
        if not 0 < self.thr_conservative < self.thr_aggressive <= 5.0:
            raise InvalidConfig("need 0 < thr_conservative < thr_aggressive <= 5 N")

    @property
    def active(self) -> float:
        return self.thr_aggressive if self.phase is Phase.FIRST else self.thr_conservative

    def advance(self) -> None:
        self.phase = Phase.SECOND


@dataclass(frozen=True)
class PushConfig:
    speed: float = 0.005  # m/s
    clearance: float = 0.010  # extra travel past one block length
    approach_gap: float = 0.010  # fingertip to face after servoing
    window: float = 0.5  # s after contact used for classification
    contact_floor: float = 0.02  # N, about 4 sigma of sensor noise
    slip_offset: float = 0.007  # m, alignment beyond this may slip
    slip_probability: float = 0.5

    def __post_init__(self):
        if self.speed <= 0 or self.window <= 0 or self.clearance < 0 or self.approach_gap < 0:
            raise InvalidConfig("push speed/window must be positive, distances non-negative")
        if not 0 <= self.slip_probability <= 1:
            raise InvalidConfig("slip_probability must lie in [0, 1]")


@dataclass
class PushOutcome:
    kind: OutcomeKind
    peak: float
    distance: float  # m pushed into the block
    threshold: float
    trace: ForceTrace = field(repr=False, default=None)
    abort_index: int | None = None

    @property
    def extracted(self) -> bool:
        return self.kind is OutcomeKind.EXTRACTED


def contact_index(trace: ForceTrace, floor: float = 0.02) -> int:
    if trace.contact_start is not None and trace.contact_start < len(trace):
        return trace.contact_start
    above = np.nonzero(trace.f > floor)[0]
    if len(above) == 0:
        raise NoContact("force never rose above the noise floor")
    return int(above[0])


def classify_push(trace: ForceTrace, thr: float, window: float | None = 0.5, floor: float = 0.02) -> PushClass:
    """Stuck iff a sample reaches ``thr`` within ``window`` s of contact (whole trace if None)."""
    if len(trace) == 0 or not np.any(trace.f > floor):
        raise NoContact("force never rose above the noise floor")
    k = contact_index(trace, floor)
    f = trace.f[k:]
    if window is not None:
        f = f[(trace.t[k:] - trace.t[k]) <= window + 1e-9]
    return PushClass.STUCK if np.any(f >= thr) else PushClass.REMOVABLE


def first_over(f: np.ndarray, thr: float) -> int | None:
    idx = np.nonzero(f >= thr)[0]
    return int(idx[0]) if len(idx) else None


def push_primitive(alignment, tower: TowerState, block: Block, thr: float,
                   config: PushConfig | None = None, seed: int = 0) -> PushOutcome:
    """Open-loop straight push with a 20 Hz force watchdog.

    ``alignment`` is the (err_x, err_y) contact offset left by servoing (m),
    or None for a perfectly aligned finger. Raises CollapsedTower (with the
    outcome attached as ``.outcome``) when the push topples the tower.
    """
    cfg = config or PushConfig()
    rng = np.random.default_rng(seed)
    slip_draw = rng.random()
    force_seed = int(rng.integers(2**63))
    travel = tower.config.length + cfg.clearance
    if alignment is not None and np.hypot(*alignment) > cfg.slip_offset and slip_draw < cfg.slip_probability:
        return PushOutcome(OutcomeKind.SLIPPED, 0.0, 0.0, thr, ForceTrace(np.zeros(0), np.zeros(0)))
    duration = (cfg.approach_gap + travel) / cfg.speed
    full = reaction_force_profile(tower, block, cfg.speed, duration, force_seed,
                                  approach_gap=cfg.approach_gap, travel=tower.config.length)
    t_contact = cfg.approach_gap / cfg.speed
    i = first_over(full.f, thr)
    if i is None:
        outcome = PushOutcome(OutcomeKind.EXTRACTED, full.peak, travel, thr, full, None)
    else:
        # decision on the offending sample itself: nothing after it is recorded
        rec = ForceTrace(full.t[: i + 1], full.f[: i + 1], full.contact_start)
        dt_contact = full.t[i] - t_contact
        kind = OutcomeKind.ABORTED if dt_contact <= cfg.window + 1e-9 else OutcomeKind.STUCK
        outcome = PushOutcome(kind, rec.peak, max(0.0, dt_contact) * cfg.speed, thr, rec, i)
    register_push(tower, outcome.peak, outcome.extracted)
    if not tower.collapsed and outcome.extracted:
        apply_extraction(tower, block)
    if tower.collapsed:
        err = CollapsedTower(f"tower fell ({tower.collapse_cause}) pushing block {block.id}")
        err.outcome = outcome
        raise err
    return outcome


def abort_latency(outcome: PushOutcome) -> int | None:
    """Samples recorded after the first over-threshold reading (0 by construction)."""
    if outcome.abort_index is None:
        return None
    return len(outcome.trace) - 1 - outcome.abort_index


def push_duration(outcome: PushOutcome, config: PushConfig | None = None) -> float:
    """Wall time of the push including the retract along the same axis."""
    cfg = config or PushConfig()
    out = cfg.approach_gap + outcome.distance
    return 2.0 * out / cfg.speed if outcome.kind is not OutcomeKind.SLIPPED else SAMPLE_DT
