"""Command-line entry point: ``jengabot <subcommand> [--config PATH] [--seed N] [--out DIR] [--json]``."""
from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .config import load_config
from .errors import InvalidConfig, ParseError
from .game import run_game
from .perception.maskio import write_masks

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, sort_keys=True) if args.json else text)


def cmd_game(args, cfg) -> None:
    log = run_game(cfg, args.seed)
    out = bench.ensure_dir(args.out) / f"game_seed{args.seed}.jsonl"
    out.write_text(log.to_jsonl())
    t = log.totals
    _emit(args, {"seed": args.seed, "config_hash": log.config_hash, "file": str(out), "end_reason": log.end_reason,
                 **t},
          f"game seed={args.seed}: {t['attempts']} attempts, {t['extracted']} extracted, "
          f"{t['stuck_correct']} stuck-correct, {t['errors']} errors, success {100 * t['success_fraction']:.1f}% "
          f"({log.end_reason}) -> {out}")


def cmd_monte_carlo(args, cfg) -> None:
    n = args.runs or cfg.run.n_runs
    mc = bench.monte_carlo(cfg, n, args.seed, workers=args.workers or cfg.run.workers)
    d = bench.ensure_dir(args.out)
    bench.write_csv(d / "monte_carlo_runs.csv", bench.RUN_FIELDS, mc.table_rows(), args.seed, mc.config_hash)
    agg = mc.aggregate
    summary = {"seed": args.seed, "config_hash": mc.config_hash, **agg}
    (d / "monte_carlo_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    lines = [f"{'':22s}{'mean':>8s}{'std':>8s}{'max':>8s}"]
    for k in bench.AGG_FIELDS:
        lines.append(f"{k:22s}{agg[k]['mean']:8.2f}{agg[k]['std']:8.2f}{agg[k]['max']:8.0f}")
    lines.append(f"success fraction {100 * agg['success_fraction']:.1f}% over {agg['attempts']} attempts, "
                 f"collapse rate {100 * agg['collapse_rate']:.0f}%")
    _emit(args, summary, "\n".join(lines))


def cmd_force_profile(args, cfg) -> None:
    profiles = bench.bench_force_profiles(cfg, args.blocks or cfg.run.n_blocks, args.seed)
    d = bench.ensure_dir(args.out)
    h = cfg.hash()
    bench.write_csv(d / "force_profiles.csv", bench.FORCE_HEADER, bench.force_rows(profiles, cfg), args.seed, h)
    rows = [{"block_id": p.block_id, "level": p.level, "slot": p.slot, "loaded": p.loaded,
             "plateau": p.plateau, "peak": float(p.f.max())} for p in profiles]
    text = "\n".join(f"block {r['block_id']:3d} level {r['level']:2d} slot {r['slot']} "
                     f"{'loaded' if r['loaded'] else 'free  '} plateau {r['plateau']:.3f} N peak {r['peak']:.3f} N"
                     for r in rows)
    _emit(args, {"seed": args.seed, "config_hash": h, "traces": rows}, text)


def cmd_tracking(args, cfg) -> None:
    rows = bench.bench_tracking(cfg, args.seed)
    h = cfg.hash()
    bench.write_csv(bench.ensure_dir(args.out) / "tracking.csv", bench.TRACKING_HEADER, rows, args.seed, h)
    text = ["level  omega   single   group"]
    for i in range(0, len(rows), 2):
        s, g = rows[i], rows[i + 1]
        text.append(f"{s[0]:5d} {s[1]:6.1f} {s[3]:7.1f}% {g[3]:6.1f}%")
    _emit(args, {"seed": args.seed, "config_hash": h,
                 "rows": [dict(zip(bench.TRACKING_HEADER, r)) for r in rows]}, "\n".join(text))


def cmd_servo(args, cfg) -> None:
    levels = [int(x) for x in args.levels.split(",")] if args.levels else None
    rows = bench.bench_servo(cfg, args.trials or cfg.run.trials_per_level, args.seed, levels, args.noiseless)
    d = bench.ensure_dir(args.out)
    h = cfg.hash()
    bench.write_csv(d / "servo_runs.csv", bench.SERVO_HEADER, rows, args.seed, h)
    summary = {"seed": args.seed, "config_hash": h, **bench.servo_summary(rows)}
    (d / "servo_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = ["level  conv   time mean   std"]
    for lv, s in summary["per_level"].items():
        tm = "-" if s["time_mean"] is None else f"{s['time_mean']:8.1f} s {s['time_std']:5.1f}"
        text.append(f"{lv:5d} {s['converged']:3d}/{s['n']:<3d} {tm}")
    a = summary["accuracy"]
    if a["n"]:
        text.append(f"err_x {a['err_x_mean_mm']:+.3f} +- {a['err_x_std_mm']:.3f} mm, "
                    f"err_y {a['err_y_mean_mm']:+.3f} +- {a['err_y_std_mm']:.3f} mm, max offset {a['max_offset_mm']:.2f} mm")
    _emit(args, summary, "\n".join(text))


def cmd_seg_eval(args, cfg) -> None:
    d = bench.ensure_dir(args.out)
    if bool(args.pred) != bool(args.gt):
        raise InvalidConfig("--pred and --gt must be given together")
    if args.pred:
        table = bench.bench_segmentation_eval(args.pred, args.gt)
    else:
        gt, pred = bench.synthetic_segmentation_set(cfg, args.images, args.seed)
        write_masks(d / "gt.masks", gt)
        write_masks(d / "pred.masks", pred)
        table = bench.segmentation_table(pred, gt)
    h = cfg.hash()
    keys = list(table)
    bench.write_csv(d / "seg_ap.csv", keys, [[table[k] for k in keys]], args.seed, h)
    _emit(args, {"seed": args.seed, "config_hash": h, **table},
          "  ".join(f"{k} {v:6.2f}" for k, v in table.items()))


COMMANDS = {"game": cmd_game, "monte-carlo": cmd_monte_carlo, "force-profile": cmd_force_profile,
            "tracking-bench": cmd_tracking, "servo-bench": cmd_servo, "seg-eval": cmd_seg_eval}


def build_parser() -> argparse.ArgumentParser:
    def shared(defaults):
        # subcommands get SUPPRESS so options given before the command survive
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", default=d(None), help="INI config file")
        g.add_argument("--seed", type=int, default=d(0))
        g.add_argument("--out", default=d("out"), help="output directory")
        g.add_argument("--json", action="store_true", default=d(False), help="print a JSON summary")
        return g

    common = shared(False)
    p = argparse.ArgumentParser(prog="jengabot", parents=[shared(True)])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("game", parents=[common], help="play one game")
    mc = sub.add_parser("monte-carlo", parents=[common], help="repeat games with consecutive seeds")
    mc.add_argument("--runs", type=int)
    mc.add_argument("--workers", type=int)
    fp = sub.add_parser("force-profile", parents=[common], help="force traces of unaborted pushes")
    fp.add_argument("--blocks", type=int)
    sub.add_parser("tracking-bench", parents=[common], help="single vs group model tracking")
    sv = sub.add_parser("servo-bench", parents=[common], help="servo convergence time and accuracy")
    sv.add_argument("--trials", type=int)
    sv.add_argument("--levels", help="comma-separated levels")
    sv.add_argument("--noiseless", action="store_true")
    se = sub.add_parser("seg-eval", parents=[common], help="mask AP at IoU 0.5/0.8/0.9")
    se.add_argument("--pred")
    se.add_argument("--gt")
    se.add_argument("--images", type=int, default=20, help="synthetic images when no files are given")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except InvalidConfig as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        COMMANDS[args.command](args, cfg)
    except InvalidConfig as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
