import json
from dataclasses import replace

import numpy as np
import pytest

from jengabot import bench
from jengabot.cli import main
from jengabot.config import RunConfig, format_config, load_config, parse_config
from jengabot.errors import InvalidConfig
from jengabot.game import EXTRACTED_OK, MINOR, STUCK_CORRECT, run_game
from jengabot.perception.maskio import write_masks
from jengabot.perception.tracking import TrackerNoise

# --- config ------------------------------------------------------------------------


def test_config_parse_and_defaults():
    cfg = parse_config("[force]\nspeed = 0.004\n[policy]\nstart = low\nallow_retry = yes\n")
    assert cfg.force.speed == 0.004 and cfg.policy.start == "low" and cfg.policy.allow_retry
    assert cfg.tower == RunConfig().tower


@pytest.mark.parametrize("text", ["[nope]\na = 1\n", "[tower]\nlevelz = 3\n", "[tower]\nlevels = many\n",
                                  "[policy]\nstart = middle\n", "[tower]\nlevels = 2\n", "not an ini"])
def test_config_rejects_bad_input(text):
    with pytest.raises(InvalidConfig):
        parse_config(text)


def test_config_roundtrip_and_hash():
    cfg = parse_config("[game]\np_bad_pnp = 0.05\n[servo]\nqd_max = 0.3\n")
    assert parse_config(format_config(cfg)) == cfg
    assert cfg.hash() == parse_config(format_config(cfg)).hash()
    assert cfg.hash() != RunConfig().hash()
    assert load_config(None) == RunConfig()


# --- game ---------------------------------------------------------------------------


def test_game_is_byte_identical_for_a_seed():
    assert run_game(seed=11).to_jsonl() == run_game(seed=11).to_jsonl()
    assert run_game(seed=11).to_jsonl() != run_game(seed=12).to_jsonl()


def test_game_accounting_and_rules():
    for seed in range(30):
        log = run_game(seed=seed)
        t = log.totals
        assert t["extracted"] + t["stuck_correct"] + t["errors"] == t["attempts"] == len(log.attempts)
        levels = [a.level for a in log.attempts if a.outcome == EXTRACTED_OK]
        assert len(levels) == len(set(levels))
        thr = [a.threshold for a in log.attempts]
        assert all(a >= b for a, b in zip(thr, thr[1:]))
        assert set(thr) <= {0.32, 0.18}
        probed = set()
        for a in log.attempts:
            if a.error_kind in MINOR:
                continue
            assert a.block_id not in probed
            probed.add(a.block_id)
        if log.collapse_cause:
            assert log.attempts[-1].error_kind == "Collapse" and log.end_reason == "Collapse"
        assert all(a.error_kind is None for a in log.attempts if a.outcome in (EXTRACTED_OK, STUCK_CORRECT))


def test_minor_failures_do_not_touch_state():
    # run_game compares tower and policy hashes around every minor failure
    cfg = RunConfig()
    cfg = replace(cfg, game=replace(cfg.game, p_singularity=0.2, p_tracking_loss=0.2, p_bad_pnp=0.2))
    for seed in range(10):
        log = run_game(cfg, seed)
        assert any(a.error_kind in MINOR for a in log.attempts)
        aborts = [o for o in log.operator if o["action"] == "abort"]
        assert len(aborts) == sum(a.error_kind in MINOR for a in log.attempts)


def test_full_servo_mode_game():
    cfg = RunConfig()
    cfg = replace(cfg, game=replace(cfg.game, servo_mode="full", max_attempts=4))
    log = run_game(cfg, 2)
    assert 1 <= len(log.attempts) <= 4
    assert all(a.servo_time is not None for a in log.attempts)
    assert log.to_jsonl() == run_game(cfg, 2).to_jsonl()


def test_operator_reposition_and_placements():
    log = run_game(seed=3)
    kinds = {o["action"] for o in log.operator}
    assert "place_on_top" in kinds
    placed = sum(o["action"] == "place_on_top" for o in log.operator)
    assert placed == log.totals["extracted"]


# --- benches ------------------------------------------------------------------------


def test_monte_carlo_aggregate_is_arithmetic_mean():
    mc = bench.monte_carlo(n_runs=6, base_seed=100)
    agg = mc.aggregate
    assert agg["n_runs"] == 6
    for k in bench.AGG_FIELDS:
        assert np.isclose(agg[k]["mean"], np.mean([r[k] for r in mc.rows]))
    assert sum(r["attempts"] for r in mc.rows) == agg["attempts"]
    with pytest.raises(ValueError):
        bench.monte_carlo(n_runs=0)


def test_monte_carlo_parallel_matches_serial():
    a = bench.monte_carlo(n_runs=4, base_seed=7)
    b = bench.monte_carlo(n_runs=4, base_seed=7, workers=2)
    assert a.rows == b.rows


def test_monte_carlo_disjoint_seeds_within_binomial_noise():
    a = bench.monte_carlo(n_runs=100, base_seed=0).aggregate
    b = bench.monte_carlo(n_runs=100, base_seed=10_000).aggregate
    p = (a["success_fraction"] + b["success_fraction"]) / 2
    se = np.sqrt(p * (1 - p) * (1 / a["attempts"] + 1 / b["attempts"]))
    assert abs(a["success_fraction"] - b["success_fraction"]) < 4 * se


def test_force_profiles():
    cfg = RunConfig()
    prof = bench.bench_force_profiles(cfg, 15, seed=0)
    assert len(prof) == 15
    for p in prof:
        assert np.all((p.f >= 0) & (p.f <= 5))
        # separation against the aggressive threshold agrees with the tower's load oracle
        assert (np.median(p.f[60:120]) > 0.2) == p.loaded  # mid-push, past the ramp
    rows = list(bench.force_rows(prof, cfg))
    assert len(rows) == sum(len(p.f) for p in prof)


def test_tracking_bench_zero_noise_is_perfect():
    cfg = replace(RunConfig(), tracking=TrackerNoise(0.0, 0.0, 0.0, 0.0))
    rows = bench.bench_tracking(cfg, levels=(5, 9), duration=10.0)
    assert len(rows) == 8 and all(r[3] == 100.0 for r in rows)


def test_servo_bench_noiseless_has_no_spread():
    rows = bench.bench_servo(trials_per_level=3, levels=[7], noiseless=True)
    times = [r[4] for r in rows]
    assert all(r[2] for r in rows) and np.std(times) == 0.0
    assert all(abs(r[5]) < 0.01 and abs(r[6]) < 0.01 for r in rows)
    s = bench.servo_summary(rows)
    assert s["per_level"][7]["converged"] == 3


def test_segmentation_eval_files(tmp_path):
    gt, pred = bench.synthetic_segmentation_set(n_images=2, seed=1)
    write_masks(tmp_path / "gt.masks", gt)
    write_masks(tmp_path / "pred.masks", pred)
    write_masks(tmp_path / "empty.masks", [])
    same = bench.bench_segmentation_eval(tmp_path / "gt.masks", tmp_path / "gt.masks")
    assert same == {"AP50": 100.0, "AP80": 100.0, "AP90": 100.0, "mean": 100.0}
    empty = bench.bench_segmentation_eval(tmp_path / "empty.masks", tmp_path / "gt.masks")
    assert all(v == 0.0 for v in empty.values())
    noisy = bench.bench_segmentation_eval(tmp_path / "pred.masks", tmp_path / "gt.masks")
    assert noisy["AP50"] >= noisy["AP80"] >= noisy["AP90"]


# --- CLI ----------------------------------------------------------------------------------


def test_cli_outputs_embed_seed_and_hash(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["monte-carlo", "--runs", "3", "--seed", "5", "--out", str(out), "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    first = (out / "monte_carlo_runs.csv").read_text()
    assert first.startswith(f"# seed=5 config_hash={summary['config_hash']}")
    assert main(["monte-carlo", "--runs", "3", "--seed", "5", "--out", str(out)]) == 0
    assert (out / "monte_carlo_runs.csv").read_text() == first


def test_cli_game_jsonl(tmp_path):
    assert main(["game", "--seed", "4", "--out", str(tmp_path)]) == 0
    lines = [json.loads(x) for x in (tmp_path / "game_seed4.jsonl").read_text().splitlines()]
    assert lines[0]["type"] == "game" and lines[-1]["type"] == "summary"
    assert all(rec["seed"] == 4 for rec in lines)


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[tower]\nunknown = 1\n")
    assert main(["game", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["game", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2
    assert main(["seg-eval", "--pred", str(tmp_path / "x"), "--gt", str(tmp_path / "y"),
                 "--out", str(tmp_path)]) == 2
    (tmp_path / "broken.masks").write_text("# masks width=2 height=2\n0 1 0.5 1,1\n")
    assert main(["seg-eval", "--pred", str(tmp_path / "broken.masks"), "--gt", str(tmp_path / "broken.masks"),
                 "--out", str(tmp_path)]) == 2


def test_cli_global_options_before_or_after_command(tmp_path):
    assert main(["--seed", "6", "--out", str(tmp_path), "game"]) == 0
    assert main(["game", "--seed", "7", "--out", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"game_seed6.jsonl", "game_seed7.jsonl"}
