"""Scenario configuration and the end-to-end allocation/selection pipeline."""

from __future__ import annotations

import functools
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .allocation import (
    AllocationTrace,
    DisturbanceEvent,
    allocated_channel_count,
    clamp_channel_budgets,
    run_allocation,
)
from .foraging import (
    PRESETS,
    ChannelAssignment,
    StrategyAssignment,
    ess_deviation_check,
    run_selection,
    system_fitness,
)
from .mediator import Mediator
from .metrics import collision_occurred, measured_convergence_rounds, replication_rng
from .model import CompetitionParams, EquilibriumReport, NetworkAllocState, StabilityWarning, fairness_index

__all__ = [
    "ScenarioError",
    "PipelineError",
    "Scenario",
    "FixedBudgetScenario",
    "RequirementSpreadScenario",
    "PipelineResult",
    "scenario_from_dict",
    "load_scenario",
    "equilibrium_budgets",
    "run_pipeline",
]

DEFAULTS: dict[str, Any] = {
    "alpha": 0.9,
    "r": 1.95,
    "step": 1.0,
    "tolerance": 1e-6,
    "max_rounds": 10000,
    "s0": 0.1,
    "share_mode": "normalized",
    "strategy": "AllShare",
    "order": "round_robin",
    "runs": 1,
    "master_seed": None,
}

_TOP_KEYS = {"name", "channels", "networks", "params", "s0", "strategy", "share_mode",
             "disturbances", "master_seed", "runs", "order"}
_PARAM_KEYS = {"alpha", "r", "step", "tolerance", "max_rounds"}


class ScenarioError(ValueError):
    """Invalid scenario configuration; the message starts with the field name."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, report: EquilibriumReport | None = None):
        self.stage = stage
        self.report = report
        super().__init__(f"[{stage}] {message}")


@dataclass(frozen=True)
class Scenario:
    n_channels: int
    network_ids: tuple[str, ...]
    requirements: tuple[int, ...]
    params: CompetitionParams
    s0: float = 0.1
    strategy: str = "AllShare"
    disturbances: tuple[DisturbanceEvent, ...] = ()
    master_seed: int | None = None
    runs: int = 1
    share_mode: str = "normalized"
    order: str = "round_robin"
    name: str = "scenario"
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n(self) -> int:
        return len(self.network_ids)

    def initial_states(self) -> list[NetworkAllocState]:
        return [NetworkAllocState.seeded(nid, r, self.s0)
                for nid, r in zip(self.network_ids, self.requirements)]

    def strategy_assignment(self) -> StrategyAssignment:
        return StrategyAssignment.preset(self.strategy, self.n)

    def to_dict(self) -> dict:
        """Fully resolved scenario as plain data."""
        params = asdict(self.params)
        params.pop("capacity")
        return {
            "name": self.name,
            "channels": self.n_channels,
            "networks": [{"id": i, "requirement": r} for i, r in zip(self.network_ids, self.requirements)],
            "params": params,
            "s0": self.s0,
            "strategy": self.strategy,
            "share_mode": self.share_mode,
            "order": self.order,
            "disturbances": [
                {"kind": d.kind.value, "network": d.network_id, "sub_species": d.sub_species_index,
                 "start_round": d.start_round, "end_round": d.end_round}
                for d in self.disturbances
            ],
            "master_seed": self.master_seed,
            "runs": self.runs,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def metadata(self) -> dict:
        return {"scenario_hash": self.digest(), "defaults_applied": list(self.defaulted),
                "scenario": self.to_dict()}

    def replicate(self, rng: np.random.Generator) -> ChannelAssignment:
        """One selection run on this scenario's equilibrium budgets."""
        budgets = equilibrium_budgets(self.requirements, self.n_channels, self.params,
                                      self.s0, self.share_mode)
        return _select(budgets, self.strategy_assignment(), self.n_channels, rng, self.order)


@dataclass(frozen=True)
class FixedBudgetScenario:
    """Selection only, with budgets given directly."""

    budgets: tuple[int, ...]
    n_channels: int
    strategy: str = "AllShare"
    order: str = "round_robin"

    def replicate(self, rng: np.random.Generator) -> ChannelAssignment:
        assignment = StrategyAssignment.preset(self.strategy, len(self.budgets))
        return _select(self.budgets, assignment, self.n_channels, rng, self.order)


@dataclass(frozen=True)
class RequirementSpreadScenario:
    """Requirements drawn per run as integers uniform on ``[mean - spread, mean + spread]``."""

    n: int
    n_channels: int
    mean: int
    spread: int
    strategy: str = "AllShare"
    params: CompetitionParams | None = None
    s0: float = 0.1
    share_mode: str = "normalized"
    order: str = "round_robin"

    def __post_init__(self):
        if self.mean - self.spread < 1:
            raise ValueError("requirements must stay >= 1")

    def draw_requirements(self, rng: np.random.Generator) -> tuple[int, ...]:
        draws = rng.integers(self.mean - self.spread, self.mean + self.spread + 1, size=self.n)
        return tuple(int(x) for x in draws)

    def replicate(self, rng: np.random.Generator) -> ChannelAssignment:
        requirements = self.draw_requirements(rng)
        params = self.params or CompetitionParams.for_channels(self.n_channels, self.n)
        budgets = equilibrium_budgets(requirements, self.n_channels, params, self.s0, self.share_mode)
        assignment = StrategyAssignment.preset(self.strategy, self.n)
        return _select(budgets, assignment, self.n_channels, rng, self.order)


def _ids(n: int) -> tuple[str, ...]:
    return tuple(f"net{i + 1}" for i in range(n))


def _select(budgets, assignment, n_channels, rng, order) -> ChannelAssignment:
    ids = _ids(len(budgets))
    mediator = Mediator(n_channels)
    for nid in ids:
        mediator.register(nid)
    return run_selection(budgets, assignment, mediator, rng, ids, order=order)


@functools.lru_cache(maxsize=4096)
def _sorted_equilibrium_totals(requirements: tuple[int, ...], n_channels: int, params: CompetitionParams,
                               s0: float, share_mode: str) -> tuple[float, ...]:
    states = [NetworkAllocState.seeded(nid, r, s0) for nid, r in zip(_ids(len(requirements)), requirements)]
    report, _ = run_allocation(states, params, reseed=s0)
    if not report.converged:
        raise PipelineError("allocation", f"no convergence for requirements {requirements}", report)
    return report.totals(share_mode)


def equilibrium_budgets(requirements: Sequence[int], n_channels: int, params: CompetitionParams,
                        s0: float = 0.1, share_mode: str = "normalized") -> tuple[int, ...]:
    """Clamped channel budgets at the allocation equilibrium.

    The dynamics treat networks symmetrically (the foreign sum is exactly
    rounded, hence order-free), so totals are memoised per sorted
    requirement multiset and permuted back.  Clamping runs in network order.
    """
    order = sorted(range(len(requirements)), key=lambda i: requirements[i])
    canon = tuple(int(requirements[i]) for i in order)
    canon_totals = _sorted_equilibrium_totals(canon, n_channels, params, s0, share_mode)
    totals = [0.0] * len(order)
    for pos, i in enumerate(order):
        totals[i] = canon_totals[pos]
    counts = [allocated_channel_count(s) for s in totals]
    return tuple(clamp_channel_budgets(counts, n_channels, totals))


# -- loading ---------------------------------------------------------------

def _require(cond: bool, field_name: str, message: str):
    if not cond:
        raise ScenarioError(field_name, message)


def _int(value, field_name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), field_name, f"expected an integer, got {value!r}")
    return value


def _num(value, field_name: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), field_name,
             f"expected a number, got {value!r}")
    return float(value)


def scenario_from_dict(data: Mapping[str, Any], name: str = "scenario") -> Scenario:
    """Validate a parsed config mapping and apply defaults."""
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, sorted(unknown)[0] if unknown else "", "unknown key")
    defaulted = []

    def get(key, section=data, label=None):
        if key in section:
            return section[key]
        defaulted.append(label or key)
        return DEFAULTS[key]

    _require("channels" in data, "channels", "missing")
    n_channels = _int(data["channels"], "channels")
    _require("networks" in data, "networks", "missing")
    nets = data["networks"]
    _require(isinstance(nets, list) and nets, "networks", "expected a non-empty list")
    ids, reqs = [], []
    for idx, net in enumerate(nets):
        _require(isinstance(net, Mapping), f"networks[{idx}]", "expected a table")
        nid = net.get("id", f"net{idx + 1}")
        _require(isinstance(nid, str) and nid, f"networks[{idx}].id", "expected a non-empty string")
        _require("requirement" in net, f"networks[{idx}].requirement", "missing")
        req = _int(net["requirement"], f"networks[{idx}].requirement")
        _require(req >= 1, f"networks[{idx}].requirement", "must be >= 1")
        ids.append(nid)
        reqs.append(req)
    _require(len(set(ids)) == len(ids), "networks", "duplicate network ids")
    _require(n_channels >= len(ids), "channels", f"N < n ({n_channels} channels for {len(ids)} networks)")

    params_in = data.get("params", {})
    _require(isinstance(params_in, Mapping), "params", "expected a table")
    bad = set(params_in) - _PARAM_KEYS
    _require(not bad, f"params.{sorted(bad)[0]}" if bad else "params", "unknown key")
    pvals = {k: get(k, params_in, f"params.{k}") for k in ("alpha", "r", "step", "tolerance", "max_rounds")}
    for k in ("alpha", "r", "step", "tolerance"):
        pvals[k] = _num(pvals[k], f"params.{k}")
    pvals["max_rounds"] = _int(pvals["max_rounds"], "params.max_rounds")
    try:
        params = CompetitionParams.for_channels(n_channels, len(ids), **pvals)
    except ValueError as exc:
        raise ScenarioError("params", str(exc)) from None

    s0 = _num(get("s0"), "s0")
    _require(s0 > 0, "s0", "must be positive")
    strategy = get("strategy")
    _require(strategy in PRESETS, "strategy", f"expected one of {PRESETS}")
    share_mode = get("share_mode")
    _require(share_mode in ("normalized", "raw"), "share_mode", "expected 'normalized' or 'raw'")
    order = get("order")
    _require(order in ("round_robin", "sequential"), "order", "expected 'round_robin' or 'sequential'")
    runs = _int(get("runs"), "runs")
    _require(runs >= 1, "runs", "must be >= 1")
    seed = get("master_seed")
    if seed is not None:
        seed = _int(seed, "master_seed")
    _require(seed is not None or strategy == "AllShare", "master_seed",
             f"required for strategy {strategy}")

    events = []
    for idx, ev in enumerate(data.get("disturbances", [])):
        where = f"disturbances[{idx}]"
        _require(isinstance(ev, Mapping), where, "expected a table")
        try:
            event = DisturbanceEvent(
                kind=ev["kind"].lower(),
                network_id=ev["network"],
                sub_species_index=_int(ev["sub_species"], f"{where}.sub_species"),
                start_round=_int(ev["start_round"], f"{where}.start_round"),
                end_round=ev.get("end_round"),
            )
        except KeyError as exc:
            raise ScenarioError(f"{where}.{exc.args[0]}", "missing") from None
        except (ValueError, AttributeError) as exc:
            raise ScenarioError(where, str(exc)) from None
        _require(event.network_id in ids, f"{where}.network", f"unknown network {event.network_id!r}")
        k_max = reqs[ids.index(event.network_id)]
        _require(event.sub_species_index <= k_max, f"{where}.sub_species",
                 f"network {event.network_id!r} has only {k_max} sub-species")
        events.append(event)

    l = sum(reqs)
    if params.capacity > 0 and s0 * (1 + params.alpha * (l - 1)) / params.capacity > 1 + 1 / (params.r * params.step):
        warnings.warn(f"s0={s0} is large enough to drive every share to zero on the first round",
                      StabilityWarning, stacklevel=2)

    return Scenario(
        n_channels=n_channels,
        network_ids=tuple(ids),
        requirements=tuple(reqs),
        params=params,
        s0=s0,
        strategy=strategy,
        disturbances=tuple(events),
        master_seed=seed,
        runs=runs,
        share_mode=share_mode,
        order=order,
        name=str(data.get("name", name)),
        defaulted=tuple(defaulted),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(str(path), f"parse error: {exc}") from None
    return scenario_from_dict(data, name=path.stem)


# -- pipeline --------------------------------------------------------------

@dataclass
class PipelineResult:
    report: EquilibriumReport
    trace: AllocationTrace
    budgets: tuple[int, ...]
    assignment: ChannelAssignment
    metrics: dict[str, Any]


def run_pipeline(scenario: Scenario, rng: np.random.Generator | None = None,
                 mediator=None) -> PipelineResult:
    """Allocation, budgets, channel selection and metrics in one pass.

    Failures are raised as :class:`PipelineError` labelled with the stage.
    """
    if mediator is None:
        mediator = Mediator(scenario.n_channels)
        for nid in scenario.network_ids:
            mediator.register(nid)
    try:
        report, trace = run_allocation(scenario.initial_states(), scenario.params,
                                       scenario.disturbances, mediator, reseed=scenario.s0)
    except ValueError as exc:
        raise PipelineError("allocation", str(exc)) from exc
    if not report.converged:
        raise PipelineError("allocation", f"no convergence after {report.rounds} rounds", report)

    try:
        totals = report.totals(scenario.share_mode)
        counts = [allocated_channel_count(s) for s in totals]
        budgets = tuple(clamp_channel_budgets(counts, scenario.n_channels, totals))
    except ValueError as exc:
        raise PipelineError("budgets", str(exc)) from exc

    if rng is None:
        rng = replication_rng(scenario.master_seed or 0, 0)
    try:
        assignment = run_selection(budgets, scenario.strategy_assignment(), mediator, rng,
                                   scenario.network_ids, order=scenario.order,
                                   n_channels=scenario.n_channels)
    except ValueError as exc:
        raise PipelineError("selection", str(exc)) from exc

    capacity = scenario.params.capacity
    metrics = {
        "converged": report.converged,
        "rounds": report.rounds,
        "convergence_rounds": measured_convergence_rounds(trace, scenario.params.tolerance),
        "fairness": fairness_index(report.normalized_totals, scenario.requirements) if capacity > 0 else None,
        "system_fitness": system_fitness(assignment) if assignment.agent_count else None,
        "collision": collision_occurred(assignment),
        "ess": ess_deviation_check(assignment),
    }
    return PipelineResult(report, trace, budgets, assignment, metrics)

