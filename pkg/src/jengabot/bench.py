"""Monte Carlo games and the four component benchmarks, with CSV/JSONL writers."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .game import run_game
from .geometry import JointState, RigidPose, rot_z
from .perception.masks import corrupt_masks, render_masks
from .perception.maskio import read_masks
from .perception.metrics import ap_at_iou
from .perception.tracking import TrackerNoise, build_group_model, start_tracking, track_step
from .servo import look_at_start, run_servo, start_configuration
from .tower import face_pose, is_load_bearing, new_tower, plateau_force, reaction_force_profile

TRACKING_LEVELS = (5, 6, 8, 9, 10, 11)
TRACKING_OMEGAS = (2.5, 8.3)  # deg/s
IOU_THRESHOLDS = (0.5, 0.8, 0.9)


# --- output helpers ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.9g}"
    return "" if v is None else str(v)


def write_csv(path, header, rows, seed: int, config_hash: str) -> None:
    """CSV with a leading ``# seed=... config_hash=...`` provenance line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={seed} config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_jsonl(path, records, seed: int, config_hash: str) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"seed": seed, "config_hash": config_hash, **r}, sort_keys=True) + "\n")


# --- Monte Carlo games -----------------------------------------------------------

RUN_FIELDS = ["seed", "attempts", "extracted", "stuck_correct", "errors", "correct_before_end",
              "collapsed", "success_fraction", "end_reason"]
AGG_FIELDS = ["extracted", "stuck_correct", "errors", "correct_before_end"]


@dataclass
class MonteCarloSummary:
    config_hash: str
    base_seed: int
    rows: list[dict]
    logs: list = field(default_factory=list, repr=False)

    @property
    def aggregate(self) -> dict:
        out = {"n_runs": len(self.rows)}
        for k in AGG_FIELDS:
            v = np.array([r[k] for r in self.rows], float)
            out[k] = {"mean": float(v.mean()), "std": float(v.std()), "max": float(v.max())}
        att = sum(r["attempts"] for r in self.rows)
        ok = sum(r["extracted"] + r["stuck_correct"] for r in self.rows)
        out["attempts"] = att
        out["success_fraction"] = ok / att if att else 0.0
        out["collapse_rate"] = float(np.mean([r["collapsed"] for r in self.rows]))
        for k in ("extracted", "stuck_correct", "errors"):
            out[k + "_fraction"] = sum(r[k] for r in self.rows) / att if att else 0.0
        return out

    def table_rows(self):
        return [[r[k] for k in RUN_FIELDS] for r in self.rows]


def _game_row(args) -> tuple[dict, object]:
    config, seed = args
    log = run_game(config, seed)
    t = log.totals
    row = {"seed": seed, **{k: t[k] for k in RUN_FIELDS if k in t}, "end_reason": log.end_reason}
    return row, log


def monte_carlo(config: RunConfig | None = None, n_runs: int = 18, base_seed: int = 0,
                workers: int = 1, keep_logs: bool = False) -> MonteCarloSummary:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    config = config or RunConfig()
    jobs = [(config, base_seed + i) for i in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_game_row, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        results = [_game_row(j) for j in jobs]
    results.sort(key=lambda r: r[0]["seed"])
    return MonteCarloSummary(config.hash(), base_seed, [r[0] for r in results],
                             [r[1] for r in results] if keep_logs else [])


# --- force profiles -------------------------------------------------------------

@dataclass
class ForceProfile:
    block_id: int
    level: int
    slot: int
    loaded: bool
    plateau: float
    t: np.ndarray
    f: np.ndarray


def bench_force_profiles(config: RunConfig | None = None, n_blocks: int = 15, seed: int = 0) -> list[ForceProfile]:
    """Unaborted pushes of ``n_blocks`` blocks spread over the testable levels."""
    config = config or RunConfig()
    rng = np.random.default_rng(seed)
    tower = new_tower(config.tower, seed)
    pc = config.force
    levels = range(config.policy.workspace_low, min(config.policy.workspace_high, tower.n_levels - 2) + 1)
    pool = [b for lv in levels for b in tower.level_blocks(lv)]
    loaded = [b for b in pool if is_load_bearing(tower, b)]
    free = [b for b in pool if not is_load_bearing(tower, b)]
    # alternate loaded/free so both classes show up
    picks = []
    for i in range(n_blocks):
        src = loaded if (i % 2 == 0 and loaded) or not free else free
        picks.append(src.pop(int(rng.integers(len(src)))))
    duration = (pc.approach_gap + tower.config.length + pc.clearance) / pc.speed
    out = []
    for b in picks:
        tr = reaction_force_profile(tower, b, pc.speed, duration, int(rng.integers(2**63)),
                                    approach_gap=pc.approach_gap)
        out.append(ForceProfile(b.id, b.level, b.slot, is_load_bearing(tower, b), plateau_force(tower, b),
                                tr.t, tr.f))
    return out


FORCE_HEADER = ["trace", "block_id", "level", "slot", "loaded", "plateau", "t", "f", "thr_aggressive",
                "thr_conservative"]


def force_rows(profiles: list[ForceProfile], config: RunConfig):
    p = config.policy
    for i, pr in enumerate(profiles):
        for t, f in zip(pr.t, pr.f):
            yield [i, pr.block_id, pr.level, pr.slot, int(pr.loaded), pr.plateau, float(t), float(f),
                   p.thr_aggressive, p.thr_conservative]


# --- tracking robustness ---------------------------------------------------------

def _yaw_wave(t: float, omega_deg: float, arc_deg: float) -> float:
    """Triangle wave sweeping the tower yaw over +-arc/2 at constant rate."""
    a = np.radians(arc_deg) / 2
    period = 4 * a / np.radians(omega_deg)
    ph = (t / period) % 1.0
    return a * (4 * ph - 1) if ph < 0.5 else a * (3 - 4 * ph)


def tracked_fraction(tower, level: int, omega_deg: float, group: bool, noise: TrackerNoise, K, seed: int,
                     duration: float = 60.0, arc_deg: float = 45.0, distance: float = 0.3) -> tuple[float, float]:
    """(fraction of ``duration`` tracked before the first failure, max e_proj)."""
    fp = face_pose(tower, level, 1)
    cam0 = fp @ RigidPose(np.eye(3), [0.0, 0.0, -distance])
    model = build_group_model(tower, tower.block_at(level, 1))
    if not group:
        model = model.single()
    n = int(round(duration * noise.rate_hz))
    state, tracked, e_max = None, 0, 0.0
    for k in range(n):
        cam = RigidPose(rot_z(_yaw_wave(k / noise.rate_hz, omega_deg, arc_deg)), [0.0, 0.0, 0.0]) @ cam0
        if state is None:
            state = start_tracking(model, cam, tower, K, noise, seed)
        else:
            state = track_step(state, model, cam, tower, K, noise, seed)
        if not state.tracking:
            break
        tracked += 1
        e_max = max(e_max, state.e_proj)
    return tracked / n, e_max


TRACKING_HEADER = ["level", "omega_deg_s", "model", "tracked_pct", "max_e_proj_deg"]


def bench_tracking(config: RunConfig | None = None, seed: int = 0, levels=TRACKING_LEVELS,
                   omegas=TRACKING_OMEGAS, duration: float = 60.0, arc_deg: float = 45.0) -> list[list]:
    config = config or RunConfig()
    tower = new_tower(config.tower, seed)
    rows = []
    for lv in levels:
        for om in omegas:
            s = seed * 100 + lv  # same error realization for both models
            for group in (False, True):
                frac, e_max = tracked_fraction(tower, lv, om, group, config.tracking, config.camera, s,
                                               duration, arc_deg)
                rows.append([lv, om, "group" if group else "single", 100.0 * frac, e_max])
    return rows


# --- servo convergence and accuracy --------------------------------------------

SERVO_HEADER = ["level", "trial", "converged", "reason", "time_s", "err_x_mm", "err_y_mm", "max_e_proj_deg"]


def bench_servo(config: RunConfig | None = None, trials_per_level: int = 21, seed: int = 0, levels=None,
                noiseless: bool = False) -> list[list]:
    """One row per servo run; ``noiseless`` zeroes tracker noise and start-pose spread."""
    config = config or RunConfig()
    chain, rig, placement = config.arm.chain(), config.arm.rig(config.camera), config.arm.placement()
    tracker = TrackerNoise(0.0, 0.0, 0.0, 0.0) if noiseless else config.tracking
    if levels is None:
        levels = range(config.policy.workspace_low, config.policy.workspace_high + 1)
    rows = []
    for lv in levels:
        for k in range(trials_per_level):
            run_seed = seed * 100000 + lv * 1000 + k
            rng = np.random.default_rng(run_seed)
            tower = new_tower(config.tower, run_seed)
            block = tower.block_at(lv, 1 if noiseless else int(rng.integers(3)))
            if noiseless:
                cam = look_at_start(tower, block, placement, rng, distance=(0.28, 0.28), tilt_deg=0.0, lateral=0.0)
            else:
                cam = look_at_start(tower, block, placement, rng)
            q, resid = start_configuration(chain, rig, cam)
            if resid > 1e-6:
                rows.append([lv, k, 0, "Unreachable", 0.0, None, None, None])
                continue
            r = run_servo(JointState(q), block, tower, rig, config.servo, run_seed, chain=chain,
                          placement=placement, tracker=tracker, init_from_masks=not noiseless)
            rows.append([lv, k, int(r.converged), r.reason or "", r.time_s,
                         None if r.err_x is None else 1e3 * r.err_x,
                         None if r.err_y is None else 1e3 * r.err_y, r.max_e_proj])
    return rows


def servo_summary(rows: list[list]) -> dict:
    per_level = {}
    for lv in sorted({r[0] for r in rows}):
        t = np.array([r[4] for r in rows if r[0] == lv and r[2]])
        n = sum(1 for r in rows if r[0] == lv)
        per_level[lv] = {"n": n, "converged": len(t), "time_mean": float(t.mean()) if len(t) else None,
                         "time_std": float(t.std()) if len(t) else None}
    ok = [r for r in rows if r[2]]
    ex = np.array([r[5] for r in ok])
    ey = np.array([r[6] for r in ok])
    acc = {"n": len(ok)}
    if ok:
        acc.update(err_x_mean_mm=float(ex.mean()), err_y_mean_mm=float(ey.mean()),
                   err_x_std_mm=float(ex.std()), err_y_std_mm=float(ey.std()),
                   max_offset_mm=float(np.hypot(ex, ey).max()))
    return {"per_level": per_level, "accuracy": acc}


# --- segmentation AP -----------------------------------------------------------------

def synthetic_segmentation_set(config: RunConfig | None = None, n_images: int = 20, seed: int = 0):
    """(ground truth, corrupted predictions) over rendered views of random towers."""
    config = config or RunConfig()
    rng = np.random.default_rng(seed)
    gt, pred = [], []
    for i in range(n_images):
        tower = new_tower(config.tower, int(rng.integers(2**31)))
        level = int(rng.integers(4, tower.n_levels - 3))
        dist = rng.uniform(0.3, 0.45)
        yaw = np.radians(rng.uniform(-20, 20))
        cam = RigidPose(rot_z(yaw), [0, 0, 0]) @ face_pose(tower, level, 1) @ RigidPose(np.eye(3), [0, 0, -dist])
        masks = render_masks(cam, config.camera, tower, image_id=i)
        gt.extend(masks)
        pred.extend(corrupt_masks(masks, config.segmentation, int(rng.integers(2**31))))
    return gt, pred


def segmentation_table(pred, gt, thresholds=IOU_THRESHOLDS) -> dict:
    """AP (percent) per IoU threshold plus their mean."""
    out = {f"AP{int(round(100 * t))}": 100.0 * ap_at_iou(pred, gt, t) for t in thresholds}
    out["mean"] = float(np.mean(list(out.values()))) if out else 0.0
    return out


def bench_segmentation_eval(pred_file, gt_file, thresholds=IOU_THRESHOLDS) -> dict:
    return segmentation_table(read_masks(pred_file), read_masks(gt_file), thresholds)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p

