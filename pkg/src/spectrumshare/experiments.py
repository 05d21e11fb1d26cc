"""Experiment drivers that emit plot-ready CSV (and optional JSON lines).

Every CSV starts with ``#``-prefixed metadata lines holding the resolved
configuration, master seed and scenario hash; rerunning with the same inputs
reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from .allocation import AllocationTrace, run_allocation
from .foraging import PRESETS
from .metrics import replication_rng, selection_stats
from .model import CompetitionParams, NetworkAllocState, fairness_index
from .scenario import FixedBudgetScenario, RequirementSpreadScenario, Scenario, load_scenario

__all__ = [
    "EXPERIMENTS",
    "shipped_config",
    "write_csv",
    "trace_rows",
    "fig4_rows",
    "fig5_rows",
    "fig6_rows",
    "run_experiment",
]

EXPERIMENTS = ("fig2", "fig3", "fig4", "fig5", "fig6")

FIG4_NETWORKS = range(2, 11)
FIG4_MAX_REQUIREMENT = 5
FIG5_CHANNELS = 20
FIG5_NETWORKS = range(2, 21)
FIG6_NETWORKS = 5
FIG6_CHANNELS = 20
FIG6_MEAN = 4
FIG6_SPREADS = (0, 1, 2, 3)

DEFAULT_SEED = 2013
DEFAULT_RUNS = {"fig4": 20, "fig5": 1000, "fig6": 1000}


def shipped_config(name: str) -> Path:
    return Path(str(resources.files("spectrumshare") / "configs" / f"{name}.toml"))


def _fmt(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              metadata: dict) -> Path:
    buf = io.StringIO()
    for key in sorted(metadata):
        buf.write(f"# {key}: {json.dumps(metadata[key], sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def trace_rows(trace: AllocationTrace) -> tuple[list[str], list[list[Any]]]:
    """Wide per-round table: every sub-species, every network total, max delta, events."""
    labels = trace.all_labels()
    columns = ["round"] + [f"S_{nid}_{k}" for nid, k in labels] + \
        [f"S_{nid}" for nid in trace.network_ids] + ["max_delta", "events"]
    rows = []
    for row in trace.rows:
        live = {}
        for nid, ks, shares in zip(trace.network_ids, row.labels, row.sub_shares):
            for k, s in zip(ks, shares):
                live[(nid, k)] = s
        rows.append(
            [row.round]
            + [live.get(lab, "") for lab in labels]
            + list(row.totals)
            + [row.max_delta, ";".join(row.events)]
        )
    return columns, rows


def write_trace_jsonl(path: Path, trace: AllocationTrace, metadata: dict) -> Path:
    lines = [json.dumps({"metadata": metadata}, sort_keys=True)]
    for row in trace.rows:
        lines.append(json.dumps({
            "round": row.round,
            "sub_shares": {f"{nid}/{k}": s for nid, ks, ss in zip(trace.network_ids, row.labels, row.sub_shares)
                           for k, s in zip(ks, ss)},
            "totals": dict(zip(trace.network_ids, row.totals)),
            "max_delta": row.max_delta if row.max_delta != float("inf") else None,
            "events": list(row.events),
        }, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def fig4_rows(runs: int, seed: int) -> list[list[Any]]:
    """Weighted fairness of the equilibrium against an equal split.

    ``N = 4n`` channels; requirements uniform on ``1..5`` per run.
    """
    rows = []
    for n in FIG4_NETWORKS:
        n_channels = 4 * n
        params = CompetitionParams.for_channels(n_channels, n)
        for run in range(runs):
            rng = replication_rng(seed, n, run)
            reqs = [int(x) for x in rng.integers(1, FIG4_MAX_REQUIREMENT + 1, size=n)]
            states = [NetworkAllocState.seeded(f"net{i + 1}", r) for i, r in enumerate(reqs)]
            report, _ = run_allocation(states, params)
            if not report.converged:
                raise RuntimeError(f"fig4: no convergence for requirements {reqs}")
            share_f = fairness_index(report.normalized_totals, reqs)
            equal = [params.capacity / n] * n
            rows.append([n, run, ";".join(map(str, reqs)), report.rounds, share_f, fairness_index(equal, reqs)])
    return rows


def fig5_rows(runs: int, seed: int, workers: int = 1, mode: str = "any") -> list[list[Any]]:
    """One channel per network, ``n`` swept over ``2..20`` on 20 channels."""
    rows = []
    for n in FIG5_NETWORKS:
        for strategy in PRESETS:
            sc = FixedBudgetScenario((1,) * n, FIG5_CHANNELS, strategy)
            st = selection_stats(sc, runs, seed, mode, workers)
            rows.append([n, strategy, st["fitness"].mean, st["fitness"].std,
                         st["collision"].mean, st["collision"].std, runs])
    return rows


def fig6_rows(runs: int, seed: int, workers: int = 1, mode: str = "any") -> list[list[Any]]:
    """Five networks on 20 channels, requirements uniform on ``[4 - s, 4 + s]``."""
    rows = []
    for spread in FIG6_SPREADS:
        for strategy in PRESETS:
            sc = RequirementSpreadScenario(FIG6_NETWORKS, FIG6_CHANNELS, FIG6_MEAN, spread, strategy)
            st = selection_stats(sc, runs, seed, mode, workers)
            rows.append([spread, strategy, st["fitness"].mean, st["fitness"].std,
                         st["collision"].mean, st["collision"].std, runs])
    return rows


_SELECTION_COLUMNS = ["mean_phi", "phi_std", "collision_probability", "collision_std", "runs"]


def run_experiment(name: str, out_dir: str | Path, runs: int | None = None, seed: int | None = None,
                   workers: int = 1, jsonl: bool = False, collision_mode: str = "any",
                   scenario: Scenario | None = None) -> list[Path]:
    """Run one named experiment and write its output files into ``out_dir``."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}")
    out_dir = Path(out_dir)
    seed = DEFAULT_SEED if seed is None else seed
    written: list[Path] = []

    if name in ("fig2", "fig3"):
        sc = scenario or load_scenario(shipped_config(name))
        report, trace = run_allocation(sc.initial_states(), sc.params, sc.disturbances, reseed=sc.s0)
        meta = {"experiment": name, **sc.metadata(), "converged": report.converged, "rounds": report.rounds}
        columns, rows = trace_rows(trace)
        written.append(write_csv(out_dir / f"{name}.csv", columns, rows, meta))
        if jsonl:
            written.append(write_trace_jsonl(out_dir / f"{name}.jsonl", trace, meta))
        return written

    runs = DEFAULT_RUNS[name] if runs is None else runs
    meta = {"experiment": name, "master_seed": seed, "runs": runs, "collision_mode": collision_mode,
            "seed_rule": "SeedSequence(master_seed, spawn_key=run index)",
            "defaults": {"alpha": 0.9, "r": 1.95, "s0": 0.1, "tolerance": 1e-6, "step": 1.0,
                         "max_rounds": 10000, "share_mode": "normalized", "order": "round_robin"}}
    if name == "fig4":
        meta["networks"] = list(FIG4_NETWORKS)
        meta["channels"] = "4n"
        columns = ["n", "run", "requirements", "rounds", "share_fairness", "equal_split_fairness"]
        rows = fig4_rows(runs, seed)
    elif name == "fig5":
        meta.update(channels=FIG5_CHANNELS, networks=list(FIG5_NETWORKS), budget=1)
        columns = ["n", "strategy"] + _SELECTION_COLUMNS
        rows = fig5_rows(runs, seed, workers, collision_mode)
    else:
        meta.update(channels=FIG6_CHANNELS, networks=FIG6_NETWORKS, mean=FIG6_MEAN, spreads=list(FIG6_SPREADS))
        columns = ["sigma", "strategy"] + _SELECTION_COLUMNS
        rows = fig6_rows(runs, seed, workers, collision_mode)
    written.append(write_csv(out_dir / f"{name}.csv", columns, rows, meta))
    return written
