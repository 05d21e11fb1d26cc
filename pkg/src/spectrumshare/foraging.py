"""Foraging-style channel selection.

Each network splits its channel budget into single-channel agents.  A
share-greedy agent asks the mediator for per-channel selectivity ``1 / y_h``
and takes the best channel it does not already hold.  A random agent picks
uniformly among the channels its own network does not hold yet; it has no
view of anybody else.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mediator import UNOCCUPIED

__all__ = [
    "Strategy",
    "StrategyAssignment",
    "ChannelAssignment",
    "BudgetError",
    "greedy_pick",
    "random_pick",
    "run_selection",
    "system_fitness",
    "ess_deviation_check",
]

PRESETS = ("AllShare", "AllRandom", "Hybrid1", "Hybrid2")


class BudgetError(ValueError):
    """Channel budgets cannot be met with the available channels."""


class Strategy(str, enum.Enum):
    SHARE_GREEDY = "ShareGreedy"
    UNIFORM_RANDOM = "UniformRandom"


@dataclass(frozen=True)
class StrategyAssignment:
    strategies: tuple[Strategy, ...]

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(Strategy(s) for s in self.strategies))

    def __len__(self):
        return len(self.strategies)

    @property
    def random_count(self) -> int:
        return sum(s is Strategy.UNIFORM_RANDOM for s in self.strategies)

    @classmethod
    def preset(cls, name: str, n: int, rng: np.random.Generator | None = None) -> "StrategyAssignment":
        """Named strategy mix for ``n`` networks.

        Hybrid1 makes one network random, Hybrid2 ``n // 2`` of them.  The
        random networks are the lowest-indexed ones unless ``rng`` is given,
        in which case they are drawn from it.
        """
        if name == "AllShare":
            k = 0
        elif name == "AllRandom":
            k = n
        elif name == "Hybrid1":
            k = 1
        elif name == "Hybrid2":
            k = n // 2
        else:
            raise ValueError(f"unknown strategy preset {name!r}; expected one of {PRESETS}")
        chosen = set(range(k)) if rng is None else set(rng.choice(n, size=k, replace=False).tolist())
        return cls(tuple(
            Strategy.UNIFORM_RANDOM if i in chosen else Strategy.SHARE_GREEDY for i in range(n)
        ))


@dataclass(frozen=True)
class ChannelAssignment:
    """Channels held by each network, in the order they were picked."""

    network_ids: tuple[str, ...]
    channels: tuple[tuple[int, ...], ...]
    n_channels: int

    def __post_init__(self):
        if len(self.network_ids) != len(self.channels):
            raise ValueError("one channel list per network is required")
        for nid, chans in zip(self.network_ids, self.channels):
            if len(set(chans)) != len(chans):
                raise ValueError(f"network {nid!r} holds a channel twice")
            if any(not 0 <= h < self.n_channels for h in chans):
                raise ValueError(f"network {nid!r} holds an out-of-range channel")

    @property
    def occupancy(self) -> list[int]:
        y = [0] * self.n_channels
        for chans in self.channels:
            for h in chans:
                y[h] += 1
        return y

    @property
    def agent_fitness(self) -> list[float]:
        """``1 / y_h`` for every selected (network, channel) slot."""
        y = self.occupancy
        return [1.0 / y[h] for chans in self.channels for h in chans]

    @property
    def agent_count(self) -> int:
        return sum(len(c) for c in self.channels)


def _rank(e):
    return (1, 0.0) if e is UNOCCUPIED else (0, e)


def greedy_pick(selectivities: Sequence, own_channels) -> int:
    """Best channel not yet held by the caller; lowest index wins ties."""
    best = None
    best_rank = None
    for h, e in enumerate(selectivities):
        if h in own_channels:
            continue
        rank = _rank(e)
        if best is None or rank > best_rank:
            best, best_rank = h, rank
    if best is None:
        raise BudgetError("budget exceeds channels: every channel is already held")
    return best


def random_pick(n_channels: int, own_channels, rng: np.random.Generator) -> int:
    """Uniform pick over the channels the caller does not hold."""
    free = [h for h in range(n_channels) if h not in own_channels]
    if not free:
        raise BudgetError("budget exceeds channels: every channel is already held")
    return free[int(rng.integers(len(free)))]


def run_selection(
    budgets: Sequence[int],
    assignment: StrategyAssignment,
    mediator,
    rng: np.random.Generator | None,
    network_ids: Sequence[str],
    order: str = "round_robin",
    n_channels: int | None = None,
) -> ChannelAssignment:
    """Let every network place its agents, one request at a time.

    ``order="round_robin"`` gives each network one agent per turn in the
    given network order; ``order="sequential"`` lets each network place all
    of its agents before the next one starts.  Every pick is reported to the
    mediator so later greedy agents see it.
    """
    n_channels = mediator.n_channels if n_channels is None else n_channels
    budgets = [int(m) for m in budgets]
    if not (len(budgets) == len(assignment) == len(network_ids)):
        raise ValueError("budgets, strategies and network ids must align")
    if any(m < 0 for m in budgets):
        raise BudgetError("budgets must be non-negative")
    if sum(budgets) > n_channels:
        raise BudgetError(f"budget exceeds channels: sum(M)={sum(budgets)} > N={n_channels}")
    if assignment.random_count and rng is None:
        raise ValueError("random strategies need a seeded generator")
    if order not in ("round_robin", "sequential"):
        raise ValueError(f"unknown order {order!r}")

    held: list[list[int]] = [[] for _ in budgets]
    held_sets: list[set[int]] = [set() for _ in budgets]

    def place(i):
        nid = network_ids[i]
        if assignment.strategies[i] is Strategy.SHARE_GREEDY:
            h = greedy_pick(mediator.selectivity_vector(nid), held_sets[i])
        else:
            h = random_pick(n_channels, held_sets[i], rng)
        mediator.record_selection(nid, h)
        held[i].append(h)
        held_sets[i].add(h)

    if order == "sequential":
        for i, m in enumerate(budgets):
            for _ in range(m):
                place(i)
    else:
        for turn in range(max(budgets, default=0)):
            for i, m in enumerate(budgets):
                if turn < m:
                    place(i)

    return ChannelAssignment(tuple(network_ids), tuple(tuple(c) for c in held), n_channels)


def system_fitness(assignment: ChannelAssignment) -> float:
    """Minimum agent fitness over all selected slots."""
    fitness = assignment.agent_fitness
    if not fitness:
        raise ValueError("system fitness of an empty assignment is undefined")
    return min(fitness)


def ess_deviation_check(assignment: ChannelAssignment) -> bool:
    """True iff no agent gains by moving alone to another channel.

    A mover vacates its channel ``h`` and joins ``g``; its fitness goes from
    ``1 / y_h`` to ``1 / (y_g + 1)``.
    """
    y = assignment.occupancy
    for chans in assignment.channels:
        for h in chans:
            current = 1.0 / y[h]
            for g in range(assignment.n_channels):
                if g != h and 1.0 / (y[g] + 1) > current:
                    return False
    return True
