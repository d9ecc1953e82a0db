"""Full game loop: select, servo, push, classify, update, with simulated operator help."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import RunConfig
from .errors import CollapsedTower
from .force import OutcomeKind, push_primitive
from .geometry import JointState
from .perception.tracking import build_group_model
from .policy import (Candidate, Decision, current_threshold, init_policy, record_outcome, register_new_level,
                     select_block, switch_subspace)
from .servo import look_at_start, run_servo, start_configuration
from .tower import TowerState, is_load_bearing, mark_tested, new_tower, place_extracted_on_top

EXTRACTED_OK = "ExtractedOK"
STUCK_CORRECT = "StuckCorrect"
ERROR = "Error"

# errors that leave the policy untouched (the operator aborts and the loop goes on)
MINOR = ("Singularity", "TrackingLost", "InitFailure", "Timeout", "Slipped")


@dataclass
class AttemptRecord:
    index: int
    block_id: int
    level: int
    slot: int
    subspace: str
    threshold: float
    outcome: str
    error_kind: str | None = None
    push_kind: str | None = None
    peak: float | None = None
    push_distance: float | None = None
    servo_time: float | None = None
    err_x: float | None = None
    err_y: float | None = None

    @property
    def success(self) -> bool:
        return self.outcome != ERROR


@dataclass
class GameLog:
    seed: int
    config_hash: str
    attempts: list[AttemptRecord] = field(default_factory=list)
    operator: list[dict] = field(default_factory=list)  # repositions, placements, aborts
    collapse_cause: str | None = None
    end_reason: str | None = None
    start_subspace: str | None = None
    new_levels: list[int] = field(default_factory=list)

    def append(self, rec: AttemptRecord) -> None:
        if self.end_reason is not None:
            raise RuntimeError("game log is closed")
        self.attempts.append(rec)

    @property
    def totals(self) -> dict:
        t = {EXTRACTED_OK: 0, STUCK_CORRECT: 0, ERROR: 0}
        kinds: dict[str, int] = {}
        for a in self.attempts:
            t[a.outcome] += 1
            if a.error_kind:
                kinds[a.error_kind] = kinds.get(a.error_kind, 0) + 1
        n = len(self.attempts)
        return {"attempts": n, "extracted": t[EXTRACTED_OK], "stuck_correct": t[STUCK_CORRECT],
                "errors": t[ERROR], "error_kinds": dict(sorted(kinds.items())),
                "success_fraction": (t[EXTRACTED_OK] + t[STUCK_CORRECT]) / n if n else 0.0,
                "collapsed": self.collapse_cause is not None,
                "correct_before_end": t[EXTRACTED_OK] + t[STUCK_CORRECT]}

    def to_jsonl(self) -> str:
        head = {"type": "game", "seed": self.seed, "config_hash": self.config_hash,
                "start_subspace": self.start_subspace}
        lines = [json.dumps(head, sort_keys=True)]
        for a in self.attempts:
            lines.append(json.dumps({"type": "attempt", "seed": self.seed, **_rounded(asdict(a))}, sort_keys=True))
        for op in self.operator:
            lines.append(json.dumps({"type": "operator", "seed": self.seed, **op}, sort_keys=True))
        tail = {"type": "summary", "seed": self.seed, "config_hash": self.config_hash,
                "end_reason": self.end_reason, "collapse_cause": self.collapse_cause,
                "new_levels": self.new_levels, **_rounded(self.totals)}
        lines.append(json.dumps(tail, sort_keys=True))
        return "\n".join(lines) + "\n"


def _rounded(d: dict) -> dict:
    return {k: (round(v, 9) if isinstance(v, float) else v) for k, v in d.items()}


class _Servo:
    """Either the full closed loop (arm, tracker, servo) or a sampled stand-in."""

    def __init__(self, config: RunConfig):
        self.cfg = config
        self.mode = config.game.servo_mode
        if self.mode == "full":
            self.chain = config.arm.chain()
            self.rig = config.arm.rig(config.camera)
            self.placement = config.arm.placement()

    def approach(self, tower: TowerState, block, seed: int) -> tuple[str | None, float, tuple | None]:
        """(failure kind or None, servo time s, (err_x, err_y))."""
        g = self.cfg.game
        rng = np.random.default_rng(seed)
        u = rng.random()
        if u < g.p_singularity:
            return "Singularity", float(rng.uniform(1, 20)), None
        if u < g.p_singularity + g.p_tracking_loss:
            return "TrackingLost", float(rng.uniform(1, 30)), None
        if u < g.p_singularity + g.p_tracking_loss + g.p_bad_pnp:
            return "InitFailure", 0.0, None
        if self.mode == "surrogate":
            t = max(3.0, g.servo_time_mean + g.servo_time_std * rng.standard_normal())
            ex, ey = g.align_sigma * rng.standard_normal(2)
            return None, float(t), (float(ex), float(ey))
        cam = look_at_start(tower, block, self.placement, rng)
        q, resid = start_configuration(self.chain, self.rig, cam)
        if resid > 1e-6:
            return "Singularity", 0.0, None
        res = run_servo(JointState(q), block, tower, self.rig, self.cfg.servo, int(rng.integers(2**31)),
                        chain=self.chain, placement=self.placement, tracker=self.cfg.tracking,
                        group=build_group_model(tower, block))
        if not res.converged:
            kind = res.reason.split(":")[0]
            return kind, res.time_s, None
        return None, res.time_s, (res.err_x, res.err_y)


def run_game(config: RunConfig | None = None, seed: int = 0, check_minor: bool = True) -> GameLog:
    config = config or RunConfig()
    rng = np.random.default_rng([seed, 7])
    tower = new_tower(config.tower, seed)
    policy = init_policy(config.policy, tower.n_levels, seed)
    servo = _Servo(config)
    log = GameLog(seed, config.hash(), start_subspace=policy.names[0])
    consecutive_minor = 0
    while True:
        if len(log.attempts) >= config.game.max_attempts:
            log.end_reason = "AttemptCap"
            break
        if consecutive_minor >= config.game.max_consecutive_minor:
            log.end_reason = "Stalled"
            break
        sel_seed, servo_seed, push_seed = (int(x) for x in rng.integers(2**63, size=3))
        choice = select_block(policy, tower, sel_seed)
        if choice is Decision.GAME_OVER:
            log.end_reason = "GameOver"
            break
        if choice is Decision.SWITCH:
            switch_subspace(policy, tower)
            log.operator.append({"action": "reposition", "subspace": policy.names[policy.current],
                                 "before_attempt": len(log.attempts)})
            continue
        assert isinstance(choice, Candidate)
        block = tower.blocks[choice.block_id]
        thr = current_threshold(policy)
        rec = AttemptRecord(len(log.attempts), block.id, block.level, block.slot,
                            policy.names[policy.current], thr, ERROR)
        before = (tower.state_hash(), policy.memory.snapshot()) if check_minor else None

        failure, t_servo, align = servo.approach(tower, block, servo_seed)
        rec.servo_time = t_servo
        if failure is None:
            rec.err_x, rec.err_y = align
            loaded = is_load_bearing(tower, block)
            try:
                out = push_primitive(align, tower, block, thr, config.force, push_seed)
            except CollapsedTower as exc:
                out = exc.outcome
                rec.push_kind, rec.peak, rec.push_distance = out.kind.value, out.peak, out.distance
                rec.error_kind = "Collapse"
                log.append(rec)
                log.collapse_cause = tower.collapse_cause
                log.end_reason = "Collapse"
                break
            rec.push_kind, rec.peak, rec.push_distance = out.kind.value, out.peak, out.distance
            if out.kind is OutcomeKind.SLIPPED:
                failure = "Slipped"
            else:
                record_outcome(policy, block, out)
                if out.extracted:
                    rec.outcome = EXTRACTED_OK
                    _place_on_top(tower, policy, block, log)
                else:
                    mark_tested(tower, block)
                    if loaded:
                        rec.outcome = STUCK_CORRECT
                    else:
                        rec.error_kind = "Misclassified"
        if failure is not None:
            rec.error_kind = failure
            record_outcome(policy, block, None)
            log.operator.append({"action": "abort", "attempt": rec.index, "kind": failure})
            if before is not None and before != (tower.state_hash(), policy.memory.snapshot()):
                raise AssertionError("minor failure changed tower or policy state")
            consecutive_minor += 1
        else:
            consecutive_minor = 0
        log.append(rec)
    return log


def _place_on_top(tower: TowerState, policy, block, log: GameLog) -> None:
    top_before = tower.top_complete_level
    new = place_extracted_on_top(tower, block)
    log.operator.append({"action": "place_on_top", "block_id": block.id, "new_id": new.id,
                         "level": new.level})
    if tower.top_complete_level > top_before:
        level = tower.top_complete_level - policy.config.top_exclusion
        if level > policy.config.workspace_high:
            return  # out of reach
        register_new_level(policy, tower)
        log.new_levels.append(level)
