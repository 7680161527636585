"""Meta-train/meta-test orchestration, scoring, ablations, and reports.

Episodes are independent jobs: each one clones the agent, reseeds it from
(seed, dataset, run), and replays a fresh environment, so results do not
depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .agents import Agent, DdqnAgent, DdqnConfig
from .curvestore import MetaDataset
from .env import ReplayEnv, RewardConfig

REPORT_SCHEMA = 1
ABLATION_KINDS = ("no_meta_train", "last_point_only")
PHASES = ("all", "feedback", "final")


@dataclass
class EpisodeTrajectory:
    """Everything one episode produced, scoring side included."""

    agent: str
    dataset_id: int
    seed: int
    run: int
    steps: list[dict[str, Any]]
    alc: float
    fixed_time: float
    best_trace: tuple[tuple[float, float], ...]

    @property
    def n_steps(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation knobs shared by meta-test runs and ablations."""

    seeds: tuple[int, ...] = (1, 2, 3)
    sigma: float | None = None
    phase: str = "all"
    reveal_mode: str = "full"
    workers: int = 1
    max_steps: int = 100_000

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class RunReport:
    """Per-episode scores plus aggregates for one agent."""

    agent: str
    dataset_ids: tuple[int, ...]
    seeds: tuple[int, ...]
    entries: list[dict[str, Any]]
    aggregates: dict[str, Any]
    trajectories: list[EpisodeTrajectory] = field(default_factory=list, repr=False)


def meta_test_ids(md: MetaDataset, phase: str = "all") -> tuple[int, ...]:
    """Meta-test datasets, optionally narrowed to the feedback or final half."""
    ids = tuple(md.meta_test)
    if phase == "all":
        return ids
    half = (len(ids) + 1) // 2
    if phase == "feedback":
        return ids[:half]
    if phase == "final":
        return ids[half:]
    raise ValueError(f"unknown phase {phase!r}")


def meta_train_view(md: MetaDataset) -> MetaDataset:
    """Reindexed copy holding only the meta-train datasets.

    Agents meta-train against this view, so they can never read meta-test
    curves by accident.
    """
    if not md.meta_train:
        raise ValueError("meta_train split is empty")
    keep = list(md.meta_train)
    mapping = {old: new for new, old in enumerate(keep)}
    datasets = [replace(md.datasets[old], id=mapping[old]) for old in keep]
    curves = {
        (mapping[d], a, s): curve
        for (d, a, s), curve in md.curves.items()
        if d in mapping
    }
    return MetaDataset(
        datasets=datasets,
        algorithms=md.algorithms,
        curves=curves,
        meta_train=tuple(range(len(keep))),
        meta_test=(),
        score_min=md.score_min,
        score_max=md.score_max,
        baseline_score=md.baseline_score,
        curve_kind=md.curve_kind,
    )


def run_episode(
    agent: Agent,
    md: MetaDataset,
    dataset_id: int,
    seed: int,
    run: int = 0,
    sigma: float | None = None,
    reveal_mode: str = "full",
    max_steps: int = 100_000,
) -> EpisodeTrajectory:
    """One full episode with a cloned, reseeded copy of the agent."""
    total = md.dataset(dataset_id).total_budget
    cfg = RewardConfig(
        sigma=total / 10.0 if sigma is None else sigma,
        baseline_score=md.baseline_score,
    )
    env = ReplayEnv(md, dataset_id, cfg, reveal_mode=reveal_mode)
    worker = agent.clone()
    worker.reseed(np.random.SeedSequence([seed, dataset_id, run]))
    obs = env.reset()
    worker.reset(obs)
    while not env.done:
        if len(env.rewards) >= max_steps:
            raise RuntimeError(f"episode exceeded {max_steps} steps")
        obs = env.step(worker.act(obs)).observation
    return EpisodeTrajectory(
        agent=agent.name,
        dataset_id=dataset_id,
        seed=seed,
        run=run,
        steps=env.step_log,
        alc=env.alc,
        fixed_time=env.fixed_time_score,
        best_trace=env.best_test_trace,
    )


def _aggregate_metric(entries: list[dict[str, Any]], seeds: Sequence[int], key: str) -> dict:
    """Worst-of-seeds protocol: report the weakest seed's mean over datasets
    and the score spread across datasets under that seed."""
    per_seed_mean: dict[int, float] = {}
    per_seed_values: dict[int, list[float]] = {}
    for s in seeds:
        values = [e[key] for e in entries if e["seed"] == s]
        per_seed_values[s] = values
        per_seed_mean[s] = float(np.mean(values)) if values else math.nan
    worst_seed = min(seeds, key=lambda s: (per_seed_mean[s], s))
    worst_values = per_seed_values[worst_seed]
    return {
        "per_seed_mean": {str(s): per_seed_mean[s] for s in seeds},
        "worst_seed": worst_seed,
        "worst_seed_mean": per_seed_mean[worst_seed],
        "worst_seed_std": float(np.std(worst_values)) if worst_values else math.nan,
        "mean_over_seeds": float(np.mean([per_seed_mean[s] for s in seeds])),
    }


def aggregate_entries(entries: list[dict[str, Any]], seeds: Sequence[int]) -> dict[str, Any]:
    return {
        "n_episodes": len(entries),
        "alc": _aggregate_metric(entries, seeds, "alc"),
        "fixed_time": _aggregate_metric(entries, seeds, "fixed_time"),
    }


def run_meta_test(
    agent: Agent,
    md: MetaDataset,
    cfg: EvalConfig | None = None,
    seeds: Sequence[int] | None = None,
    allow_untrained: bool = False,
) -> RunReport:
    """One episode per (meta-test dataset, seed); internal runs averaged.

    Agents that declare several internal runs (random search) are scored by
    the mean over those runs per (dataset, seed).
    """
    cfg = cfg if cfg is not None else EvalConfig()
    seeds = tuple(seeds) if seeds is not None else cfg.seeds
    if agent.requires_meta_train and not agent.is_meta_trained and not allow_untrained:
        raise RuntimeError(f"agent {agent.name!r} requires meta-training before evaluation")
    ids = meta_test_ids(md, cfg.phase)
    jobs = [
        (did, seed, run)
        for seed in seeds
        for did in ids
        for run in range(agent.internal_runs)
    ]

    def job(args: tuple[int, int, int]) -> EpisodeTrajectory:
        did, seed, run = args
        return run_episode(
            agent, md, did, seed, run=run,
            sigma=cfg.sigma, reveal_mode=cfg.reveal_mode, max_steps=cfg.max_steps,
        )

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            trajectories = list(pool.map(job, jobs))
    else:
        trajectories = [job(j) for j in jobs]

    entries = []
    for seed in seeds:
        for did in ids:
            runs = [t for t in trajectories if t.seed == seed and t.dataset_id == did]
            entries.append(
                {
                    "agent": agent.name,
                    "dataset": did,
                    "seed": seed,
                    "alc": float(np.mean([t.alc for t in runs])),
                    "fixed_time": float(np.mean([t.fixed_time for t in runs])),
                }
            )
    return RunReport(
        agent=agent.name,
        dataset_ids=ids,
        seeds=seeds,
        entries=entries,
        aggregates=aggregate_entries(entries, seeds),
        trajectories=trajectories,
    )


def run_meta_train(
    agent: Agent,
    md: MetaDataset,
    checkpoint_path: str | Path | None = None,
) -> dict[str, Any]:
    """Meta-train on the restricted view; checkpoint trained state if the
    agent supports it."""
    summary = agent.meta_train(meta_train_view(md))
    if not summary.get("meta_trained"):
        summary["note"] = "no meta-training"
    if checkpoint_path is not None and summary.get("meta_trained") and hasattr(agent, "save"):
        agent.save(checkpoint_path)
        summary["checkpoint"] = str(checkpoint_path)
    return summary


def run_ablation(
    kind: str,
    md: MetaDataset,
    cfg: EvalConfig | None = None,
    ddqn_cfg: DdqnConfig | None = None,
    agent_seed: int = 0,
) -> dict[str, Any]:
    """Paired full-vs-ablated DDQN evaluation with shared seeds.

    no_meta_train skips the meta-training phase: each episode starts from a
    freshly initialized value net. last_point_only replays both training and
    evaluation in environments that reveal only final anchor values.
    """
    if kind not in ABLATION_KINDS:
        raise ValueError(f"unknown ablation kind {kind!r}; choose from {ABLATION_KINDS}")
    cfg = cfg if cfg is not None else EvalConfig()
    base = ddqn_cfg if ddqn_cfg is not None else DdqnConfig()

    full_agent = DdqnAgent(cfg=replace(base, reveal_mode="full"), seed=agent_seed)
    full_agent.meta_train(meta_train_view(md))
    full = run_meta_test(full_agent, md, cfg)

    if kind == "no_meta_train":
        ablated_agent = DdqnAgent(cfg=replace(base, reveal_mode="full"), seed=agent_seed)
        ablated = run_meta_test(ablated_agent, md, cfg, allow_untrained=True)
    else:
        ablated_agent = DdqnAgent(cfg=replace(base, reveal_mode="last_point_only"), seed=agent_seed)
        ablated_agent.meta_train(meta_train_view(md))
        ablated = run_meta_test(
            ablated_agent, md, replace(cfg, reveal_mode="last_point_only")
        )
    ablated.agent = f"ddqn_{kind}"
    for e in ablated.entries:
        e["agent"] = ablated.agent
    return {"kind": kind, "full": full, "ablated": ablated}


def ablation_summary(pair: dict[str, Any]) -> dict[str, Any]:
    """Per-seed and mean ALC margins of the full agent over the ablated one."""
    full: RunReport = pair["full"]
    ablated: RunReport = pair["ablated"]
    margins: dict[str, float] = {}
    full_means = []
    ablated_means = []
    for s in full.seeds:
        f = full.aggregates["alc"]["per_seed_mean"][str(s)]
        a = ablated.aggregates["alc"]["per_seed_mean"][str(s)]
        margins[str(s)] = f - a
        full_means.append(f)
        ablated_means.append(a)
    return {
        "schema": REPORT_SCHEMA,
        "kind": pair["kind"],
        "full_agent": full.agent,
        "ablated_agent": ablated.agent,
        "per_seed_margin": margins,
        "full_mean": float(np.mean(full_means)),
        "ablated_mean": float(np.mean(ablated_means)),
        "mean_margin": float(np.mean(full_means) - np.mean(ablated_means)),
    }


def analyze_trajectory(
    traj: EpisodeTrajectory | Iterable[dict[str, Any]],
    algorithms: Sequence[Any] | None = None,
) -> dict[str, Any]:
    """Transitions between trained algorithms, occupancy, and switch count."""
    steps = traj.steps if isinstance(traj, EpisodeTrajectory) else list(traj)
    transitions = [
        (s1["t"], s0["algo"], s1["algo"])
        for s0, s1 in zip(steps, steps[1:])
        if s0["algo"] != s1["algo"]
    ]
    occupancy = Counter(s["algo"] for s in steps)
    out: dict[str, Any] = {
        "n_steps": len(steps),
        "transitions": transitions,
        "switch_count": len(transitions),
        "occupancy": {str(a): c for a, c in sorted(occupancy.items())},
    }
    if algorithms is not None:
        fam = Counter()
        for a, c in occupancy.items():
            fam[algorithms[a].family] += c
        out["family_occupancy"] = dict(sorted(fam.items()))
    return out


def compare_reports(reports: Sequence[RunReport]) -> dict[str, Any]:
    """Any-time and fixed-time aggregates side by side, plus per-dataset
    win counts between every agent pair (by mean-over-seeds ALC)."""
    if not reports:
        raise ValueError("no reports to compare")
    base_ids = set(reports[0].dataset_ids)
    for r in reports[1:]:
        if set(r.dataset_ids) != base_ids:
            raise ValueError("reports cover different dataset sets")

    rows = []
    per_dataset_alc: dict[str, dict[int, float]] = {}
    for r in reports:
        rows.append(
            {
                "agent": r.agent,
                "alc_worst_seed_mean": r.aggregates["alc"]["worst_seed_mean"],
                "alc_worst_seed_std": r.aggregates["alc"]["worst_seed_std"],
                "fixed_time_worst_seed_mean": r.aggregates["fixed_time"]["worst_seed_mean"],
                "fixed_time_worst_seed_std": r.aggregates["fixed_time"]["worst_seed_std"],
            }
        )
        means: dict[int, float] = {}
        for did in r.dataset_ids:
            values = [e["alc"] for e in r.entries if e["dataset"] == did]
            means[did] = float(np.mean(values))
        per_dataset_alc[r.agent] = means

    win_counts = {}
    names = [r.agent for r in reports]
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            wins = sum(
                1 for did in sorted(base_ids) if per_dataset_alc[a][did] > per_dataset_alc[b][did]
            )
            win_counts[f"{a}_vs_{b}"] = {"wins": wins, "total": len(base_ids)}
    return {"schema": REPORT_SCHEMA, "agents": names, "rows": rows, "win_counts": win_counts}


# -- file output -----------------------------------------------------------
# All writers are timestamp-free and key-sorted so identical runs produce
# byte-identical files.


def _fmt(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_report_csv(reports: RunReport | Sequence[RunReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(reports, RunReport):
        reports = [reports]
    rows = [e for r in reports for e in r.entries]
    rows.sort(key=lambda e: (e["agent"], e["dataset"], e["seed"]))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "dataset", "seed", "alc", "fixed_time"])
        for e in rows:
            writer.writerow(
                [e["agent"], e["dataset"], e["seed"], _fmt(e["alc"]), _fmt(e["fixed_time"])]
            )
    return path


def report_to_dict(report: RunReport) -> dict[str, Any]:
    return {
        "schema": REPORT_SCHEMA,
        "agent": report.agent,
        "dataset_ids": list(report.dataset_ids),
        "seeds": list(report.seeds),
        "entries": report.entries,
        "aggregates": report.aggregates,
    }


def write_report_json(
    reports: RunReport | Sequence[RunReport], path: str | Path
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(reports, RunReport):
        payload: Any = report_to_dict(reports)
    else:
        payload = {
            "schema": REPORT_SCHEMA,
            "reports": [report_to_dict(r) for r in reports],
        }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_report_json(path: str | Path) -> list[RunReport]:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema {payload.get('schema')!r}")
    dicts = payload["reports"] if "reports" in payload else [payload]
    return [
        RunReport(
            agent=d["agent"],
            dataset_ids=tuple(d["dataset_ids"]),
            seeds=tuple(d["seeds"]),
            entries=list(d["entries"]),
            aggregates=d["aggregates"],
        )
        for d in dicts
    ]


def trajectory_filename(traj: EpisodeTrajectory) -> str:
    return f"{traj.agent}_d{traj.dataset_id:03d}_s{traj.seed}_r{traj.run}.jsonl"


def write_trajectory(traj: EpisodeTrajectory, path: str | Path) -> Path:
    """One JSON record per step, in step order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(step, sort_keys=True) for step in traj.steps]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def write_trajectories(report: RunReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    return [write_trajectory(t, out_dir / trajectory_filename(t)) for t in report.trajectories]


def read_trajectory(path: str | Path) -> list[dict[str, Any]]:
    steps = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                steps.append(json.loads(line))
    return steps


def _anytime_series(
    trajectories: Sequence[EpisodeTrajectory], n_points: int = 101
) -> list[tuple[float, float]]:
    """Mean predicted-best test score over a shared normalized-time grid."""
    grid = np.linspace(0.0, 1.0, n_points)
    rows = []
    for traj in trajectories:
        ts = np.array([t for t, _ in traj.best_trace])
        vs = np.array([v for _, v in traj.best_trace])
        idx = np.searchsorted(ts, grid, side="right") - 1
        rows.append(vs[idx])
    mean = np.mean(rows, axis=0)
    return [(float(x), float(y)) for x, y in zip(grid, mean)]


def write_plots(reports: Sequence[RunReport], out_dir: str | Path) -> list[Path]:
    """plots/*.csv x,y series; rendering is someone else's job."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in ("alc", "fixed_time"):
        path = out_dir / f"{metric}_bars.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for r in sorted(reports, key=lambda r: r.agent):
                writer.writerow([r.agent, _fmt(r.aggregates[metric]["worst_seed_mean"])])
        written.append(path)
    for r in sorted(reports, key=lambda r: r.agent):
        if not r.trajectories:
            continue
        path = out_dir / f"anytime_{r.agent}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for x, y in _anytime_series(r.trajectories):
                writer.writerow([_fmt(x), _fmt(y)])
        written.append(path)
    return written


def write_comparison(comparison: dict[str, Any], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "comparison.json"
    json_path.write_text(json.dumps(comparison, indent=2, sort_keys=True) + "\n")
    csv_path = out_dir / "comparison.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = [
            "agent",
            "alc_worst_seed_mean",
            "alc_worst_seed_std",
            "fixed_time_worst_seed_mean",
            "fixed_time_worst_seed_std",
        ]
        writer.writerow(header)
        for row in comparison["rows"]:
            writer.writerow([_fmt(row[h]) if h != "agent" else row[h] for h in header])
    return [csv_path, json_path]
