"""Evaluation reductions over assignments, traces and replications.

Replication seeds: run ``i`` of an experiment with master seed ``S`` draws
from ``numpy.random.default_rng(SeedSequence(S, spawn_key=(i,)))``.  The
stream of run ``i`` therefore does not depend on how many runs there are or
on how they are split across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Protocol, Sequence

import numpy as np

from .allocation import AllocationTrace
from .foraging import ChannelAssignment, system_fitness

__all__ = [
    "COLLISION_MODES",
    "ExperimentStats",
    "Replicable",
    "replication_rng",
    "collision_occurred",
    "pairwise_collision_fraction",
    "collision_value",
    "selection_stats",
    "collision_probability",
    "measured_convergence_rounds",
]

COLLISION_MODES = ("any", "pairwise")


class Replicable(Protocol):
    def replicate(self, rng: np.random.Generator) -> ChannelAssignment: ...


@dataclass(frozen=True)
class ExperimentStats:
    """Mean and sample standard deviation of per-run values."""

    mean: float
    std: float
    count: int
    master_seed: int
    values: tuple[float, ...]

    @classmethod
    def from_values(cls, values: Sequence[float], master_seed: int) -> "ExperimentStats":
        arr = np.asarray(values, dtype=float)
        if arr.size < 1:
            raise ValueError("at least one replication is required")
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return cls(float(arr.mean()), std, int(arr.size), master_seed, tuple(arr.tolist()))

    @property
    def seeds(self) -> list[tuple[int, int]]:
        """``(master_seed, run_index)`` for each stored value."""
        return [(self.master_seed, i) for i in range(self.count)]

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.count)


def replication_rng(master_seed: int, *index: int) -> np.random.Generator:
    """Generator for the run identified by ``index`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(index)))


def collision_occurred(assignment: ChannelAssignment) -> bool:
    """True iff two different networks hold the same channel."""
    owner: dict[int, int] = {}
    for i, chans in enumerate(assignment.channels):
        for h in chans:
            if owner.setdefault(h, i) != i:
                return True
    return False


def pairwise_collision_fraction(assignment: ChannelAssignment) -> float:
    """Fraction of network pairs that share at least one channel."""
    sets = [set(c) for c in assignment.channels]
    pairs = list(combinations(range(len(sets)), 2))
    if not pairs:
        return 0.0
    return sum(bool(sets[i] & sets[j]) for i, j in pairs) / len(pairs)


def collision_value(assignment: ChannelAssignment, mode: str = "any") -> float:
    if mode == "any":
        return float(collision_occurred(assignment))
    if mode == "pairwise":
        return pairwise_collision_fraction(assignment)
    raise ValueError(f"unknown collision mode {mode!r}; expected one of {COLLISION_MODES}")


def _run_chunk(scenario, master_seed, start, stop, mode):
    coll, phi = [], []
    for i in range(start, stop):
        assignment = scenario.replicate(replication_rng(master_seed, i))
        coll.append(collision_value(assignment, mode))
        phi.append(system_fitness(assignment))
    return coll, phi


def selection_stats(scenario: Replicable, runs: int, seed: int, mode: str = "any",
                    workers: int = 1) -> dict[str, ExperimentStats]:
    """Collision and system-fitness statistics over ``runs`` replications.

    With ``workers > 1`` runs are split into contiguous chunks across
    processes and concatenated in run order, so results match ``workers=1``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if mode not in COLLISION_MODES:
        raise ValueError(f"unknown collision mode {mode!r}")
    if workers <= 1 or runs < 2 * workers:
        coll, phi = _run_chunk(scenario, seed, 0, runs, mode)
    else:
        bounds = np.linspace(0, runs, workers + 1).astype(int)
        coll, phi = [], []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, scenario, seed, int(a), int(b), mode)
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            for fut in futures:
                c, p = fut.result()
                coll.extend(c)
                phi.extend(p)
    return {
        "collision": ExperimentStats.from_values(coll, seed),
        "fitness": ExperimentStats.from_values(phi, seed),
    }


def collision_probability(scenario: Replicable, runs: int, seed: int, mode: str = "any",
                          workers: int = 1) -> float:
    """Fraction of replications with a cross-network collision.

    ``mode="pairwise"`` instead averages the fraction of colliding network
    pairs per replication.
    """
    return selection_stats(scenario, runs, seed, mode, workers)["collision"].mean


def measured_convergence_rounds(trace: AllocationTrace, tolerance: float) -> int:
    """First round from which every later round has ``max |delta| < tolerance``."""
    deltas = trace.max_deltas()
    if not deltas or not deltas[-1] < tolerance:
        raise ValueError("trace did not converge at this tolerance")
    first = len(deltas) - 1
    while first > 0 and deltas[first - 1] < tolerance:
        first -= 1
    return trace.rows[first].round
