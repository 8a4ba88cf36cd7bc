"""Command-line front end: data generation, selection audits, plan search,
simulation runs, and cross-run reports with figures.

Environment overrides: FEDPACE_SEED and FEDPACE_OUT stand in for --seed
and --out when the flags are absent.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import io as fio
from .config import ConfigError, config_to_dict, load_config
from .engine import EngineError
from .experiment import build_data, build_simulation, make_plan_evaluator
from .model import save_model
from .planner import PlanSearchConfig, co_plan
from .reporting import DEFAULT_TARGETS, build_report, load_traces, render_figures, write_report_csv
from .selector import SelectorConfig, build_graph, select


def _env_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FEDPACE_SEED")
    return int(env) if env else None


def _env_out(args) -> str | None:
    if args.out is not None:
        return args.out
    return os.environ.get("FEDPACE_OUT") or None


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="experiment config (YAML)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_gen_data(args) -> int:
    cfg, _ = load_config(args.config, seed=_env_seed(args), output_dir=_env_out(args))
    dataset, shards = build_data(cfg)
    out = Path(cfg.output_dir)
    fio.write_dataset(out, dataset, shards)
    fio.write_json(out / "effective_config.json", config_to_dict(cfg))
    _say(args, f"wrote {fio.DATASET_FILE}, {fio.MANIFEST_FILE}, {fio.STATS_FILE} to {out}")
    return 0


def cmd_select(args) -> int:
    ids, X = fio.read_embeddings_csv(args.embeddings)
    cfg = SelectorConfig(k=args.k, rho=args.rho, budget_fraction=args.budget)
    graph = build_graph(X, cfg.k, ids=ids)
    selection = select(graph, cfg, ids)
    out = Path(_env_out(args) or "out")
    path = out / "selection.csv"
    fio.write_selection_audit(path, selection)
    _say(args, f"selected {len(selection.ids)} of {len(ids)} samples -> {path}")
    return 0


def cmd_plan(args) -> int:
    cfg, _ = load_config(args.config, seed=_env_seed(args), output_dir=_env_out(args))
    search = cfg.planner or PlanSearchConfig()
    evaluate = make_plan_evaluator(cfg, search.probe_rounds)
    result = co_plan(
        build_simulation(cfg).state.model, search, cfg.engine.cost_model, evaluate
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for ev in result.frontier:
        plan = ev.plan
        rows.append(
            [
                plan.describe(),
                plan.frozen_prefix(),
                sum(1 for m in plan.modes if m.value == "bias_only"),
                ev.accuracy,
                ev.cost.compute_time,
                ev.cost.comm_time,
                ev.cost.total_time,
                ev.cost.traffic_bytes,
                ev.cost.energy,
                int(ev.admissible),
                int(ev.chosen),
            ]
        )
    write_report_csv(
        out / "frontier.csv",
        [
            "plan",
            "frozen",
            "bias_only",
            "accuracy",
            "compute_time",
            "comm_time",
            "round_time",
            "traffic_bytes",
            "energy",
            "admissible",
            "chosen",
        ],
        rows,
    )
    fio.write_json(out / "effective_config.json", config_to_dict(cfg))
    chosen = next(ev for ev in result.frontier if ev.chosen)
    _say(args, f"chosen plan: {result.plan.describe()} (accuracy {chosen.accuracy:.4f}, "
               f"all-full {result.full_accuracy:.4f})")
    _say(args, f"round cost: compute {chosen.cost.compute_time:g}, comm {chosen.cost.comm_time:g}, "
               f"traffic {chosen.cost.traffic_bytes:g} bytes, energy {chosen.cost.energy:g}")
    _say(args, f"frontier -> {out / 'frontier.csv'}")
    return 0


def cmd_run(args) -> int:
    cfg, data_dir = load_config(args.config, seed=_env_seed(args), output_dir=_env_out(args))
    if data_dir:
        dataset, shards = fio.load_dataset(data_dir)
    else:
        dataset, shards = build_data(cfg)
    sim = build_simulation(cfg, dataset, shards)
    result = sim.run()
    out = Path(cfg.output_dir)
    fio.write_trace(out / "trace.csv", result.trace)
    fio.write_json(out / "summary.json", result.summary)
    fio.write_json(out / "effective_config.json", config_to_dict(cfg))
    save_model(result.model, out / "model.npz")
    _say(
        args,
        f"{cfg.name}: {result.summary['rounds']} rounds, "
        f"final acc {result.summary['final_test_acc']:.4f}, "
        f"sim time {result.summary['sim_time']:.1f} -> {out}",
    )
    return 0


def cmd_report(args) -> int:
    traces = load_traces(args.traces)
    targets = [float(t) for t in args.targets.split(",")] if args.targets else list(DEFAULT_TARGETS)
    header, rows = build_report(traces, targets)
    out = Path(_env_out(args) or "out")
    write_report_csv(out / "report.csv", header, rows)
    figures = render_figures(traces, out)
    _say(args, f"report over {len(traces)} trace(s) -> {out / 'report.csv'}")
    for fig in figures:
        _say(args, f"figure -> {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedpace",
        description="Desk-scale federated few-shot learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset and client partition")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("select", help="audit diversity selection over an embeddings file")
    p.add_argument("--embeddings", required=True, help="CSV of id,x0..xd rows")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--budget", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("plan", help="search a depth/capacity plan")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="run one simulation")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="compare run traces; writes table + figures")
    p.add_argument("traces", nargs="+", help="trace.csv paths (first is the speedup baseline)")
    p.add_argument("--targets", default=None, help="comma-separated accuracy targets")
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EngineError, FileNotFoundError, ValueError) as exc:
        print(f"fedpace {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
