"""Command-line interface tests, run in-process through cli.main."""

from __future__ import annotations

import filecmp
import json
from pathlib import Path

import pytest

from lc_arena.cli import main

TINY_DDQN = json.dumps({
    "train_episodes": 2,
    "batch_size": 16,
    "replay_capacity": 64,
    "hidden_sizes": [8],
    "target_sync": 20,
})


def run_ok(argv: list[str], capsys) -> str:
    rc = main(argv)
    captured = capsys.readouterr()
    assert rc == 0, captured.err
    return captured.out


def run_err(argv: list[str], capsys) -> str:
    rc = main(argv)
    captured = capsys.readouterr()
    assert rc == 2
    lines = [l for l in captured.err.splitlines() if l]
    assert len(lines) == 1
    assert lines[0].startswith("error: ")
    return lines[0]


def assert_identical_trees(left: Path, right: Path) -> None:
    lfiles = sorted(p.relative_to(left) for p in left.rglob("*") if p.is_file())
    rfiles = sorted(p.relative_to(right) for p in right.rglob("*") if p.is_file())
    assert lfiles == rfiles and lfiles
    for rel in lfiles:
        assert filecmp.cmp(left / rel, right / rel, shallow=False), rel


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Full workflow: generate, train, evaluate, compare, ablate."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    rc = main(["generate", "--out", str(data), "--datasets", "4",
               "--algorithms", "3", "--seed", "5"])
    assert rc == 0
    manifest = str(data / "manifest.json")

    ddqn_dir = root / "ddqn"
    rc = main(["train", "--manifest", manifest, "--agent", "ddqn",
               "--agent-params", TINY_DDQN, "--seed", "0", "--out", str(ddqn_dir)])
    assert rc == 0
    rc = main(["evaluate", "--manifest", manifest, "--agent", "ddqn",
               "--agent-params", TINY_DDQN, "--checkpoint", str(ddqn_dir / "checkpoint.json"),
               "--seeds", "1,2", "--seed", "0", "--out", str(ddqn_dir / "eval")])
    assert rc == 0

    rank_dir = root / "avg_rank"
    rc = main(["train", "--manifest", manifest, "--agent", "avg_rank",
               "--seed", "0", "--out", str(rank_dir)])
    assert rc == 0
    rc = main(["evaluate", "--manifest", manifest, "--agent", "avg_rank",
               "--checkpoint", str(rank_dir / "checkpoint.json"),
               "--seeds", "1,2", "--seed", "0", "--out", str(rank_dir / "eval")])
    assert rc == 0

    cmp_dir = root / "cmp"
    rc = main(["report", str(ddqn_dir / "eval" / "report.json"),
               str(rank_dir / "eval" / "report.json"), "--out", str(cmp_dir)])
    assert rc == 0

    ablate_dir = root / "ablate"
    rc = main(["ablate", "--manifest", manifest, "--kind", "no_meta_train",
               "--agent-params", TINY_DDQN, "--seeds", "1", "--seed", "0",
               "--out", str(ablate_dir)])
    assert rc == 0
    return {"root": root, "data": data, "manifest": manifest,
            "ddqn": ddqn_dir, "rank": rank_dir, "cmp": cmp_dir, "ablate": ablate_dir}


# -- generate --------------------------------------------------------------


def test_generate_writes_manifest_and_prints_path(tmp_path, capsys):
    out = tmp_path / "md"
    stdout = run_ok(["generate", "--out", str(out), "--datasets", "2",
                     "--algorithms", "3", "--seed", "7"], capsys)
    assert stdout.strip() == str(out / "manifest.json")
    assert (out / "manifest.json").exists()
    assert list((out / "curves").glob("*.csv"))


def test_generate_same_seed_byte_identical(tmp_path, capsys):
    args = ["generate", "--datasets", "2", "--algorithms", "3", "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    run_ok(args + ["--out", str(a)], capsys)
    run_ok(args + ["--out", str(b)], capsys)
    assert_identical_trees(a, b)


def test_generate_requires_counts(tmp_path, capsys):
    line = run_err(["generate", "--out", str(tmp_path / "x")], capsys)
    assert "--datasets" in line


def test_seed_env_fallback_matches_flag(tmp_path, capsys, monkeypatch):
    flagged = tmp_path / "flagged"
    run_ok(["generate", "--out", str(flagged), "--datasets", "2",
            "--algorithms", "2", "--seed", "11"], capsys)
    via_env = tmp_path / "env"
    monkeypatch.setenv("LC_ARENA_SEED", "11")
    run_ok(["generate", "--out", str(via_env), "--datasets", "2",
            "--algorithms", "2"], capsys)
    assert_identical_trees(flagged, via_env)


def test_seed_precedence_flag_config_env(tmp_path, capsys, monkeypatch):
    def gen(out: Path, extra: list[str]) -> None:
        run_ok(["generate", "--out", str(out), "--datasets", "2",
                "--algorithms", "2"] + extra, capsys)

    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"seed": 3}))
    monkeypatch.setenv("LC_ARENA_SEED", "11")

    gen(tmp_path / "ref7", ["--seed", "7"])
    monkeypatch.setenv("LC_ARENA_SEED", "11")
    gen(tmp_path / "flag_wins", ["--seed", "7", "--config", str(config)])
    assert_identical_trees(tmp_path / "ref7", tmp_path / "flag_wins")

    gen(tmp_path / "config_wins", ["--config", str(config)])
    monkeypatch.delenv("LC_ARENA_SEED")
    gen(tmp_path / "ref3", ["--seed", "3"])
    assert_identical_trees(tmp_path / "ref3", tmp_path / "config_wins")


def test_bad_env_seed_reports_error(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LC_ARENA_SEED", "eleven")
    line = run_err(["generate", "--out", str(tmp_path / "x"), "--datasets", "2",
                    "--algorithms", "2"], capsys)
    assert "LC_ARENA_SEED" in line


# -- config files -----------------------------------------------------------


def test_generate_fully_from_config(tmp_path, capsys):
    out = tmp_path / "md"
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "schema": 1, "out": str(out), "datasets": 2, "algorithms": 2,
        "seed": 4, "scenario": "non_crossing", "anchors": 6,
    }))
    run_ok(["generate", "--config", str(config)], capsys)
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["datasets"]) == 2


def test_config_unsupported_schema(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"schema": 99}))
    line = run_err(["generate", "--config", str(config), "--out", str(tmp_path / "x"),
                    "--datasets", "2", "--algorithms", "2"], capsys)
    assert "schema" in line


def test_config_malformed_json(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text("{not json")
    line = run_err(["generate", "--config", str(config), "--out", str(tmp_path / "x"),
                    "--datasets", "2", "--algorithms", "2"], capsys)
    assert "malformed" in line


def test_config_missing_file(tmp_path, capsys):
    line = run_err(["generate", "--config", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "x"),
                    "--datasets", "2", "--algorithms", "2"], capsys)
    assert "not found" in line


# -- evaluate errors ----------------------------------------------------------


def test_unknown_agent_single_error_line(pipeline, capsys, tmp_path):
    line = run_err(["evaluate", "--manifest", pipeline["manifest"], "--agent", "bandit",
                    "--out", str(tmp_path / "x")], capsys)
    assert "unknown agent" in line and "bandit" in line


def test_untrained_avg_rank_names_missing_state(pipeline, capsys, tmp_path):
    line = run_err(["evaluate", "--manifest", pipeline["manifest"], "--agent", "avg_rank",
                    "--out", str(tmp_path / "x")], capsys)
    assert "average ranking" in line


def test_untrained_ddqn_names_missing_checkpoint(pipeline, capsys, tmp_path):
    line = run_err(["evaluate", "--manifest", pipeline["manifest"], "--agent", "ddqn",
                    "--out", str(tmp_path / "x")], capsys)
    assert "value-network checkpoint" in line


def test_bad_seeds_list(pipeline, capsys, tmp_path):
    line = run_err(["evaluate", "--manifest", pipeline["manifest"], "--agent", "bos",
                    "--seeds", "1,x", "--out", str(tmp_path / "x")], capsys)
    assert "--seeds" in line


def test_bad_agent_params_json(pipeline, capsys, tmp_path):
    line = run_err(["train", "--manifest", pipeline["manifest"], "--agent", "ddqn",
                    "--agent-params", "{bad", "--out", str(tmp_path / "x")], capsys)
    assert "agent-params" in line


def test_checkpoint_on_stateless_agent(pipeline, capsys, tmp_path):
    line = run_err(["evaluate", "--manifest", pipeline["manifest"], "--agent", "bos",
                    "--checkpoint", "whatever.json", "--out", str(tmp_path / "x")], capsys)
    assert "does not use checkpoints" in line


# -- pipeline artifacts ----------------------------------------------------------


def test_train_outputs(pipeline):
    for agent_dir in (pipeline["ddqn"], pipeline["rank"]):
        assert (agent_dir / "checkpoint.json").exists()
        summary = json.loads((agent_dir / "meta_train.json").read_text())
        assert summary["meta_trained"] is True
    ddqn_summary = json.loads((pipeline["ddqn"] / "meta_train.json").read_text())
    assert ddqn_summary["episodes"] == 2


def test_evaluate_outputs(pipeline):
    for agent, agent_dir in (("ddqn", pipeline["ddqn"]), ("avg_rank", pipeline["rank"])):
        eval_dir = agent_dir / "eval"
        assert (eval_dir / "report.csv").exists()
        report = json.loads((eval_dir / "report.json").read_text())
        assert report["agent"] == agent
        assert report["seeds"] == [1, 2]
        trajs = list((eval_dir / "trajectories").glob("*.jsonl"))
        assert len(trajs) == len(report["dataset_ids"]) * 2
        plots = {p.name for p in (eval_dir / "plots").glob("*.csv")}
        assert plots == {"alc_bars.csv", "fixed_time_bars.csv", f"anytime_{agent}.csv"}


def test_report_comparison_outputs(pipeline):
    cmp_dir = pipeline["cmp"]
    comparison = json.loads((cmp_dir / "comparison.json").read_text())
    assert comparison["agents"] == ["ddqn", "avg_rank"]
    assert "ddqn_vs_avg_rank" in comparison["win_counts"]
    assert (cmp_dir / "comparison.csv").exists()


def test_report_rejects_mismatched_inputs(pipeline, capsys, tmp_path):
    other = tmp_path / "other"
    run_ok(["generate", "--out", str(other), "--datasets", "6",
            "--algorithms", "3", "--seed", "5"], capsys)
    run_ok(["evaluate", "--manifest", str(other / "manifest.json"), "--agent", "bos",
            "--seeds", "1", "--out", str(tmp_path / "eval")], capsys)
    line = run_err(["report", str(pipeline["ddqn"] / "eval" / "report.json"),
                    str(tmp_path / "eval" / "report.json"), "--out", str(tmp_path / "cmp")],
                   capsys)
    assert "different dataset sets" in line


def test_ablate_outputs(pipeline):
    ablate_dir = pipeline["ablate"]
    summary = json.loads((ablate_dir / "ablation.json").read_text())
    assert summary["kind"] == "no_meta_train"
    assert summary["full_agent"] == "ddqn"
    assert summary["ablated_agent"] == "ddqn_no_meta_train"
    assert set(summary["per_seed_margin"]) == {"1"}
    report = json.loads((ablate_dir / "report.json").read_text())
    assert [r["agent"] for r in report["reports"]] == ["ddqn", "ddqn_no_meta_train"]
    assert list((ablate_dir / "trajectories" / "full").glob("*.jsonl"))
    assert list((ablate_dir / "trajectories" / "ablated").glob("*.jsonl"))


def test_ablate_unknown_kind(pipeline, capsys, tmp_path):
    line = run_err(["ablate", "--manifest", pipeline["manifest"], "--kind", "half",
                    "--out", str(tmp_path / "x")], capsys)
    assert "unknown ablation kind" in line


def test_inspect_trajectory_plain_and_with_manifest(pipeline, capsys):
    traj = sorted((pipeline["ddqn"] / "eval" / "trajectories").glob("*.jsonl"))[0]
    plain = json.loads(run_ok(["inspect-trajectory", str(traj)], capsys))
    assert set(plain) == {"n_steps", "transitions", "switch_count", "occupancy"}
    assert plain["n_steps"] >= 1
    with_families = json.loads(
        run_ok(["inspect-trajectory", str(traj), "--manifest", pipeline["manifest"]], capsys)
    )
    assert "family_occupancy" in with_families
    assert sum(with_families["family_occupancy"].values()) == with_families["n_steps"]


# -- reproducibility --------------------------------------------------------------


def test_evaluate_rerun_byte_identical(pipeline, capsys, tmp_path):
    args = ["evaluate", "--manifest", pipeline["manifest"], "--agent", "bos",
            "--seeds", "1,2", "--seed", "0"]
    a, b = tmp_path / "a", tmp_path / "b"
    run_ok(args + ["--out", str(a)], capsys)
    run_ok(args + ["--out", str(b)], capsys)
    assert_identical_trees(a, b)


def test_evaluate_checkpointed_rerun_byte_identical(pipeline, capsys, tmp_path):
    args = ["evaluate", "--manifest", pipeline["manifest"], "--agent", "ddqn",
            "--agent-params", TINY_DDQN,
            "--checkpoint", str(pipeline["ddqn"] / "checkpoint.json"),
            "--seeds", "1,2", "--seed", "0"]
    a, b = tmp_path / "a", tmp_path / "b"
    run_ok(args + ["--out", str(a)], capsys)
    run_ok(args + ["--out", str(b)], capsys)
    assert_identical_trees(a, b)
