"""Command-line entry point: generate, train, evaluate, ablate, report,
inspect-trajectory.

Every subcommand accepts --config pointing at a JSON file (documented in the
README); explicit flags override config values. The seed falls back to the
LC_ARENA_SEED environment variable, then 0. All outputs are timestamp-free,
so identical inputs and seeds reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any

from .agents import AGENT_CLASSES, make_agent
from .curvestore import load_metadataset, save_metadataset
from .harness import (
    ABLATION_KINDS,
    EvalConfig,
    ablation_summary,
    analyze_trajectory,
    compare_reports,
    read_report_json,
    read_trajectory,
    run_ablation,
    run_meta_test,
    run_meta_train,
    write_comparison,
    write_plots,
    write_report_csv,
    write_report_json,
    write_trajectories,
)
from .synthgen import GenSpec, generate

CONFIG_SCHEMA = 1


class CliError(Exception):
    """User-facing error; rendered as a single `error: ...` line."""


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config must be a JSON object")
    if data.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise CliError(f"unsupported config schema {data.get('schema')!r}")
    return data


def _opt(ns: argparse.Namespace, config: dict[str, Any], key: str, default: Any = None) -> Any:
    """Flag beats config beats default; a flag left at None means unset."""
    value = getattr(ns, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _require(value: Any, what: str) -> Any:
    if value is None:
        raise CliError(f"missing required option {what}")
    return value


def _resolve_seed(ns: argparse.Namespace, config: dict[str, Any]) -> int:
    if getattr(ns, "seed", None) is not None:
        return int(ns.seed)
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get("LC_ARENA_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"LC_ARENA_SEED must be an integer, got {env!r}") from None
    return 0


def _resolve_seeds(ns: argparse.Namespace, config: dict[str, Any]) -> tuple[int, ...]:
    raw = getattr(ns, "seeds", None)
    if raw is not None:
        try:
            return tuple(int(s) for s in str(raw).split(","))
        except ValueError:
            raise CliError(f"--seeds must be comma-separated integers, got {raw!r}") from None
    if "seeds" in config:
        return tuple(int(s) for s in config["seeds"])
    return (1, 2, 3)


def _agent_params(ns: argparse.Namespace, config: dict[str, Any]) -> dict[str, Any]:
    params = dict(config.get("agent_params", {}))
    raw = getattr(ns, "agent_params", None)
    if raw is not None:
        try:
            override = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CliError(f"--agent-params must be a JSON object: {exc}") from None
        if not isinstance(override, dict):
            raise CliError("--agent-params must be a JSON object")
        params.update(override)
    return params


def _build_agent(ns: argparse.Namespace, config: dict[str, Any]):
    name = _opt(ns, config, "agent", "ddqn")
    if name not in AGENT_CLASSES:
        raise CliError(f"unknown agent {name!r}; choose from {', '.join(sorted(AGENT_CLASSES))}")
    try:
        return make_agent(name, seed=_resolve_seed(ns, config), params=_agent_params(ns, config))
    except TypeError as exc:
        raise CliError(f"bad agent_params for {name!r}: {exc}") from None


def _eval_config(ns: argparse.Namespace, config: dict[str, Any]) -> EvalConfig:
    phase = "all"
    if getattr(ns, "final", False) or config.get("final"):
        phase = "final"
    elif getattr(ns, "feedback", False) or config.get("feedback"):
        phase = "feedback"
    sigma = _opt(ns, config, "sigma")
    return EvalConfig(
        seeds=_resolve_seeds(ns, config),
        sigma=None if sigma is None else float(sigma),
        phase=phase,
        workers=int(_opt(ns, config, "workers", 1)),
    )


def _write_eval_outputs(reports, out: Path) -> None:
    write_report_csv(reports, out / "report.csv")
    write_report_json(reports, out / "report.json")
    items = reports if isinstance(reports, list) else [reports]
    for report in items:
        write_trajectories(report, out / "trajectories")
    write_plots(items, out / "plots")


# -- subcommands -------------------------------------------------------------


def cmd_generate(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    out = Path(_require(_opt(ns, config, "out"), "--out"))
    spec = GenSpec(
        n_datasets=int(_require(_opt(ns, config, "datasets"), "--datasets")),
        n_algorithms=int(_require(_opt(ns, config, "algorithms"), "--algorithms")),
        curve_kind=_opt(ns, config, "curve_kind", "time_indexed"),
        n_anchors=int(_opt(ns, config, "anchors", 12)),
        total_budget=float(_opt(ns, config, "budget", 100.0)),
        seed=_resolve_seed(ns, config),
        scenario=_opt(ns, config, "scenario", "generic"),
        noise_sd=float(_opt(ns, config, "noise_sd", 0.015)),
        meta_train_fraction=float(_opt(ns, config, "meta_train_fraction", 0.5)),
    )
    manifest = save_metadataset(generate(spec), out)
    print(manifest)
    return 0


def cmd_train(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    md = load_metadataset(_require(_opt(ns, config, "manifest"), "--manifest"))
    out = Path(_require(_opt(ns, config, "out"), "--out"))
    out.mkdir(parents=True, exist_ok=True)
    agent = _build_agent(ns, config)
    summary = run_meta_train(agent, md, checkpoint_path=out / "checkpoint.json")
    summary_path = out / "meta_train.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(summary_path)
    return 0


def cmd_evaluate(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    md = load_metadataset(_require(_opt(ns, config, "manifest"), "--manifest"))
    out = Path(_require(_opt(ns, config, "out"), "--out"))
    agent = _build_agent(ns, config)
    checkpoint = _opt(ns, config, "checkpoint")
    if checkpoint is not None:
        if not hasattr(agent, "load"):
            raise CliError(f"agent {agent.name!r} does not use checkpoints")
        agent.load(checkpoint)
    if agent.requires_meta_train and not agent.is_meta_trained:
        missing = "average ranking" if agent.name == "avg_rank" else "value-network checkpoint"
        raise CliError(
            f"agent {agent.name!r} has no meta-trained state (missing {missing}); "
            "run the train command and pass --checkpoint"
        )
    report = run_meta_test(agent, md, _eval_config(ns, config))
    _write_eval_outputs(report, out)
    print(out / "report.json")
    return 0


def cmd_ablate(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    kind = _require(_opt(ns, config, "kind"), "--kind")
    if kind not in ABLATION_KINDS:
        raise CliError(f"unknown ablation kind {kind!r}; choose from {', '.join(ABLATION_KINDS)}")
    md = load_metadataset(_require(_opt(ns, config, "manifest"), "--manifest"))
    out = Path(_require(_opt(ns, config, "out"), "--out"))
    ddqn_cfg = make_agent("ddqn", seed=0, params=_agent_params(ns, config)).cfg
    pair = run_ablation(
        kind, md, _eval_config(ns, config), ddqn_cfg=ddqn_cfg,
        agent_seed=_resolve_seed(ns, config),
    )
    reports = [pair["full"], pair["ablated"]]
    write_report_csv(reports, out / "report.csv")
    write_report_json(reports, out / "report.json")
    write_trajectories(pair["full"], out / "trajectories" / "full")
    write_trajectories(pair["ablated"], out / "trajectories" / "ablated")
    write_plots(reports, out / "plots")
    summary_path = out / "ablation.json"
    summary_path.write_text(json.dumps(ablation_summary(pair), indent=2, sort_keys=True) + "\n")
    print(summary_path)
    return 0


def cmd_report(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    paths = list(ns.reports) or config.get("reports", [])
    if not paths:
        raise CliError("no report files given")
    reports = []
    for p in paths:
        reports.extend(read_report_json(p))
    out = Path(_require(_opt(ns, config, "out"), "--out"))
    for path in write_comparison(compare_reports(reports), out):
        print(path)
    return 0


def cmd_inspect_trajectory(ns: argparse.Namespace) -> int:
    steps = read_trajectory(ns.trajectory)
    algorithms = None
    if ns.manifest is not None:
        algorithms = load_metadataset(ns.manifest).algorithms
    print(json.dumps(analyze_trajectory(steps, algorithms), indent=2, sort_keys=True))
    return 0


# -- wiring ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lc-arena",
        description="Budget-limited algorithm selection on replayed learning curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="base seed (falls back to LC_ARENA_SEED, then 0)")
        p.add_argument("--out", help="output directory")

    g = sub.add_parser("generate", help="generate a synthetic meta-dataset")
    common(g)
    g.add_argument("--datasets", type=int, help="number of datasets")
    g.add_argument("--algorithms", type=int, help="number of algorithms")
    g.add_argument("--anchors", type=int, help="anchors per curve (default 12)")
    g.add_argument("--budget", type=float, help="total budget per dataset (default 100)")
    g.add_argument("--scenario", help="generic | non_crossing | frequent_crossing")
    g.add_argument("--curve-kind", dest="curve_kind", help="time_indexed | size_indexed")
    g.add_argument("--noise-sd", dest="noise_sd", type=float, help="anchor noise (default 0.015)")
    g.add_argument("--meta-train-fraction", dest="meta_train_fraction", type=float,
                   help="fraction of datasets in the meta-train split (default 0.5)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="meta-train an agent and write a checkpoint")
    common(t)
    t.add_argument("--manifest", help="meta-dataset manifest path")
    t.add_argument("--agent", help="ddqn | freeze_thaw | avg_rank | bos | rand_search")
    t.add_argument("--agent-params", dest="agent_params", help="JSON object of agent parameters")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="run meta-test episodes and write reports")
    common(e)
    e.add_argument("--manifest", help="meta-dataset manifest path")
    e.add_argument("--agent", help="agent name")
    e.add_argument("--agent-params", dest="agent_params", help="JSON object of agent parameters")
    e.add_argument("--checkpoint", help="trained state from the train command")
    e.add_argument("--seeds", help="comma-separated evaluation seeds (default 1,2,3)")
    e.add_argument("--sigma", type=float, help="reward time-warp scale (default T/10)")
    e.add_argument("--workers", type=int, help="parallel episode workers (default 1)")
    e.add_argument("--feedback", action="store_true",
                   help="use only the feedback half of the meta-test split")
    e.add_argument("--final", action="store_true",
                   help="use only the held-back final half of the meta-test split")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="paired full-vs-ablated DDQN evaluation")
    common(a)
    a.add_argument("--manifest", help="meta-dataset manifest path")
    a.add_argument("--kind", help="no_meta_train | last_point_only")
    a.add_argument("--agent-params", dest="agent_params", help="JSON object of DDQN parameters")
    a.add_argument("--seeds", help="comma-separated evaluation seeds (default 1,2,3)")
    a.add_argument("--sigma", type=float, help="reward time-warp scale (default T/10)")
    a.add_argument("--workers", type=int, help="parallel episode workers (default 1)")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="compare evaluation reports")
    common(r)
    r.add_argument("reports", nargs="*", help="report.json files to compare")
    r.set_defaults(func=cmd_report)

    i = sub.add_parser("inspect-trajectory", help="summarize one trajectory file")
    i.add_argument("trajectory", help="trajectory .jsonl file")
    i.add_argument("--manifest", help="manifest for per-family occupancy")
    i.set_defaults(func=cmd_inspect_trajectory)
    return parser


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        message = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"error: {message}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
