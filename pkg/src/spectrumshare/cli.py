"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 allocation did not
converge, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .allocation import run_allocation
from .experiments import EXPERIMENTS, trace_rows, write_csv, write_trace_jsonl
from .scenario import PipelineError, ScenarioError, load_scenario, run_pipeline

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spectrumshare", description="Mediator-coordinated spectrum sharing simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("allocate", help="run share allocation for a scenario")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--trace", type=Path, help="write the per-round trace as CSV")
    p.add_argument("--jsonl", type=Path, help="write the per-round trace as JSON lines")

    p = sub.add_parser("select", help="allocate, then run channel selection")
    p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("pipeline", help="full allocation + selection + metrics run")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("experiment", help="reproduce one of the evaluation experiments")
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--collision-mode", choices=("any", "pairwise"), default="any")
    p.add_argument("--jsonl", action="store_true", help="also write traces as JSON lines (fig2/fig3)")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("mediator", help="mediator service")
    msub = p.add_subparsers(dest="mediator_command", required=True, parser_class=_Parser)
    s = msub.add_parser("serve", help="serve the line-delimited JSON protocol over TCP")
    s.add_argument("--listen", required=True, help="host:port")
    s.add_argument("--channels", type=int, default=20)
    return parser


def _report_dict(report, scenario) -> dict:
    return {
        "converged": report.converged,
        "rounds": report.rounds,
        "networks": list(scenario.network_ids),
        "raw_totals": list(report.raw_totals),
        "normalized_totals": list(report.normalized_totals),
        "sub_shares": {s.network_id: list(s.sub_shares) for s in report.final_states},
        "metadata": scenario.metadata(),
    }


def _cmd_allocate(args) -> int:
    sc = load_scenario(args.config)
    report, trace = run_allocation(sc.initial_states(), sc.params, sc.disturbances, reseed=sc.s0)
    meta = {"command": "allocate", **sc.metadata(), "converged": report.converged}
    if args.trace:
        columns, rows = trace_rows(trace)
        write_csv(args.trace, columns, rows, meta)
    if args.jsonl:
        write_trace_jsonl(args.jsonl, trace, meta)
    print(json.dumps(_report_dict(report, sc), indent=2, sort_keys=True))
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def _pipeline_summary(sc, result) -> dict:
    return {
        "budgets": dict(zip(sc.network_ids, result.budgets)),
        "channels": {nid: list(c) for nid, c in zip(result.assignment.network_ids, result.assignment.channels)},
        "occupancy": result.assignment.occupancy,
        "metrics": result.metrics,
    }


def _cmd_select(args) -> int:
    sc = load_scenario(args.config)
    result = run_pipeline(sc)
    print(json.dumps(_pipeline_summary(sc, result), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    sc = load_scenario(args.config)
    result = run_pipeline(sc)
    meta = {"command": "pipeline", **sc.metadata()}
    columns, rows = trace_rows(result.trace)
    write_csv(args.out / "allocation_trace.csv", columns, rows, meta)
    write_csv(
        args.out / "assignment.csv",
        ["network", "requirement", "normalized_share", "raw_share", "budget", "channels"],
        [[nid, req, norm, raw, m, ";".join(map(str, chans))]
         for nid, req, norm, raw, m, chans in zip(
             sc.network_ids, sc.requirements, result.report.normalized_totals,
             result.report.raw_totals, result.budgets, result.assignment.channels)],
        meta,
    )
    summary = {"metadata": meta, "report": _report_dict(result.report, sc), **_pipeline_summary(sc, result)}
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(_pipeline_summary(sc, result), sort_keys=True))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    from .experiments import run_experiment

    if args.runs is not None and args.runs < 1:
        raise _UsageError("--runs must be >= 1")
    paths = run_experiment(args.name, args.out, runs=args.runs, seed=args.seed, workers=args.workers,
                           jsonl=args.jsonl, collision_mode=args.collision_mode)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_mediator(args) -> int:
    from .service import parse_address, serve

    serve(parse_address(args.listen), args.channels)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {
        "allocate": _cmd_allocate,
        "select": _cmd_select,
        "pipeline": _cmd_pipeline,
        "experiment": _cmd_experiment,
        "mediator": _cmd_mediator,
    }[args.command]
    try:
        return handler(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED if exc.stage == "allocation" and exc.report is not None else EXIT_USAGE
    except (ScenarioError, _UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
