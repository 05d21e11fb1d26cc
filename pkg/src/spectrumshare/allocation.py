"""Round-based spectrum share allocation through the mediator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .mediator import Mediator
from .model import (
    CompetitionParams,
    EquilibriumReport,
    InsufficientChannelsError,
    NetworkAllocState,
    step_network,
)

__all__ = [
    "DisturbanceKind",
    "DisturbanceEvent",
    "TraceRow",
    "AllocationTrace",
    "run_allocation",
    "allocated_channel_count",
    "clamp_channel_budgets",
]

# Slack when flooring normalized totals; converged totals are only accurate
# to about the convergence tolerance, and an exact integer share such as 3.0
# must not floor to 2.
FLOOR_SNAP = 1e-4


class DisturbanceKind(str, enum.Enum):
    SILENCE = "silence"
    DELETE = "delete"


@dataclass(frozen=True)
class DisturbanceEvent:
    """Silence or delete sub-species ``k`` (1-based) of one network.

    Silence holds the share at zero over rounds ``start_round..end_round``
    inclusive and re-seeds it at the start of ``end_round + 1``.  Delete
    removes it for good at the start of ``start_round``.
    """

    kind: DisturbanceKind
    network_id: str
    sub_species_index: int
    start_round: int
    end_round: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        if self.sub_species_index < 1:
            raise ValueError("sub_species_index is 1-based")
        if self.start_round < 1:
            raise ValueError("start_round must be >= 1")
        if self.kind is DisturbanceKind.SILENCE:
            if self.end_round is None or self.end_round < self.start_round:
                raise ValueError("silence needs end_round >= start_round")

    @property
    def label(self) -> str:
        return f"{self.network_id}/{self.sub_species_index}"


@dataclass(frozen=True)
class TraceRow:
    round: int
    labels: tuple[tuple[int, ...], ...]
    sub_shares: tuple[tuple[float, ...], ...]
    totals: tuple[float, ...]
    max_delta: float
    events: tuple[str, ...] = ()


@dataclass
class AllocationTrace:
    network_ids: tuple[str, ...]
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def all_labels(self) -> list[tuple[str, int]]:
        """Every (network, sub-species) pair that was ever alive, in order."""
        seen: dict[tuple[str, int], None] = {}
        for row in self.rows:
            for nid, labels in zip(self.network_ids, row.labels):
                for k in labels:
                    seen[(nid, k)] = None
        return list(seen)

    def max_deltas(self) -> list[float]:
        return [row.max_delta for row in self.rows]


def _normalize(raw: Sequence[float], capacity: float) -> tuple[float, ...]:
    total = math.fsum(raw)
    if total <= 0:
        return tuple(0.0 for _ in raw)
    return tuple(capacity * s / total for s in raw)


def run_allocation(
    networks: Sequence[NetworkAllocState],
    params: CompetitionParams,
    disturbances: Iterable[DisturbanceEvent] = (),
    mediator=None,
    reseed: float = 0.1,
) -> tuple[EquilibriumReport, AllocationTrace]:
    """Iterate the competition until every ``|delta|`` is below tolerance.

    Each round is synchronous: every network first fetches its sanitized
    foreign sum (reflecting the previous round's reports), then steps its
    own sub-species and reports its new total.  Networks see nothing but
    their own state and that sum.

    Hitting ``max_rounds`` is reported as ``converged=False``, as is a
    collapse where every share has been clamped to zero (seed shares too
    large for the capacity).
    """
    networks = list(networks)
    ids = [s.network_id for s in networks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate network ids")
    if mediator is None:
        mediator = Mediator(int(round(params.capacity)) + len(networks))
        for nid in ids:
            mediator.register(nid)

    events = sorted(disturbances, key=lambda e: e.start_round)
    for ev in events:
        if ev.network_id not in ids:
            raise ValueError(f"disturbance targets unknown network {ev.network_id!r}")
    last_event_round = max(
        [ev.end_round + 1 if ev.kind is DisturbanceKind.SILENCE else ev.start_round for ev in events],
        default=0,
    )

    states = {s.network_id: s for s in networks}
    labels = {s.network_id: tuple(range(1, s.requirement + 1)) for s in networks}
    trace = AllocationTrace(tuple(ids))

    def snapshot(rnd, max_delta, marks=()):
        trace.rows.append(TraceRow(
            rnd,
            tuple(labels[i] for i in ids),
            tuple(states[i].sub_shares for i in ids),
            tuple(states[i].total for i in ids),
            max_delta,
            tuple(marks),
        ))

    for nid in ids:
        mediator.report_share(nid, states[nid].total)

    if params.capacity == 0:
        for nid in ids:
            states[nid] = NetworkAllocState(nid, states[nid].requirement, (0.0,) * states[nid].requirement)
            mediator.report_share(nid, 0.0)
        snapshot(0, 0.0)
        return _report(True, 0, states, ids, params), trace

    snapshot(0, math.inf)
    converged = False
    rnd = 0
    while rnd < params.max_rounds:
        rnd += 1
        marks = _apply_events(rnd, events, states, labels, reseed)
        if marks:
            for nid in ids:
                mediator.report_share(nid, states[nid].total)
        betas = {nid: mediator.sanitized_sum(nid) for nid in ids}
        round_max = 0.0
        for nid in ids:
            states[nid], d = step_network(states[nid], betas[nid], params)
            round_max = max(round_max, d)
        for nid in ids:
            mediator.report_share(nid, states[nid].total)
        if all(states[nid].total == 0 for nid in ids):
            # Every sub-species was clamped to zero: an absorbing collapse,
            # not the interior equilibrium.
            snapshot(rnd, round_max, marks + ["collapse"])
            break
        snapshot(rnd, round_max, marks)
        if round_max < params.tolerance and rnd >= last_event_round:
            converged = True
            break

    return _report(converged, rnd, states, ids, params), trace


def _apply_events(rnd, events, states, labels, reseed) -> list[str]:
    marks = []
    for ev in events:
        nid, k = ev.network_id, ev.sub_species_index
        if ev.kind is DisturbanceKind.DELETE and ev.start_round == rnd:
            pos = _position(labels, nid, k, rnd)
            st = states[nid]
            if st.requirement == 1:
                raise ValueError(f"cannot delete the only sub-species of {nid!r}")
            shares = st.sub_shares[:pos] + st.sub_shares[pos + 1:]
            states[nid] = NetworkAllocState(nid, st.requirement - 1, shares)
            labels[nid] = labels[nid][:pos] + labels[nid][pos + 1:]
            marks.append(f"delete {ev.label}")
        elif ev.kind is DisturbanceKind.SILENCE and ev.start_round == rnd:
            marks.append(f"silence {ev.label}")
            _set_share(states, labels, nid, k, 0.0, rnd)
        elif ev.kind is DisturbanceKind.SILENCE and ev.end_round + 1 == rnd:
            marks.append(f"release {ev.label}")
            _set_share(states, labels, nid, k, reseed, rnd)
    return marks


def _position(labels, nid, k, rnd) -> int:
    try:
        return labels[nid].index(k)
    except ValueError:
        raise ValueError(f"sub-species {nid}/{k} does not exist at round {rnd}") from None


def _set_share(states, labels, nid, k, value, rnd):
    pos = _position(labels, nid, k, rnd)
    st = states[nid]
    shares = list(st.sub_shares)
    shares[pos] = value
    states[nid] = NetworkAllocState(nid, st.requirement, tuple(shares))


def _report(converged, rounds, states, ids, params) -> EquilibriumReport:
    final = tuple(states[i] for i in ids)
    raw = tuple(s.total for s in final)
    return EquilibriumReport(converged, rounds, final, raw, _normalize(raw, params.capacity))


def allocated_channel_count(normalized_total: float, snap: float = FLOOR_SNAP) -> int:
    """Channels a network may occupy: ``floor(S) + 1``.

    ``snap`` absorbs convergence error just below an integer.
    """
    if not normalized_total >= 0:
        raise ValueError(f"share must be non-negative, got {normalized_total}")
    return math.floor(normalized_total + snap) + 1


def clamp_channel_budgets(counts: Sequence[int], n_channels: int,
                          shares: Sequence[float] | None = None) -> list[int]:
    """Trim budgets until they fit in ``n_channels``.

    Repeatedly decrements the budget whose share has the smallest fractional
    part (ties go to the higher index), never below one channel.
    """
    counts = [int(c) for c in counts]
    if any(c < 1 for c in counts):
        raise ValueError("every budget must be >= 1")
    if n_channels < len(counts):
        raise InsufficientChannelsError(
            f"insufficient channels: N={n_channels} < n={len(counts)}"
        )
    if shares is None:
        fracs = [0.0] * len(counts)
    else:
        if len(shares) != len(counts):
            raise ValueError("shares and counts differ in length")
        fracs = [s - math.floor(s) for s in shares]
    while sum(counts) > n_channels:
        candidates = [i for i, c in enumerate(counts) if c > 1]
        victim = min(candidates, key=lambda i: (fracs[i], -i))
        counts[victim] -= 1
    return counts
