"""Indirect-coordination mediator.

The mediator keeps only network ids, each network's latest reported share and
per-channel occupancy counts.  It answers with sanitized aggregates: the sum
of the *other* networks' shares, and per-channel selectivity ``1 / y_h``.

Every operation goes through :meth:`Mediator.handle`, which takes and returns
plain dicts shaped exactly like the newline-delimited wire messages::

    {"seq": 7, "op": "report_share", "network": "net1", "share": 7.2}
    {"seq": 7, "ok": true}

Requests are applied one at a time and appended to ``request_log``, so any
log can be replayed against a fresh mediator with :func:`replay`.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

__all__ = [
    "UNOCCUPIED",
    "OPS",
    "MediatorError",
    "LogEntry",
    "MediatorState",
    "Mediator",
    "encode_message",
    "decode_message",
    "replay",
]

OPS = ("register", "report_share", "get_beta", "get_selectivity", "select")


@functools.total_ordering
class _Unoccupied:
    """Selectivity of an empty channel; ranks above every finite value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self

    def __hash__(self):
        return hash("UNOCCUPIED")

    def __repr__(self):
        return "UNOCCUPIED"

    def __reduce__(self):
        return (_Unoccupied, ())


UNOCCUPIED = _Unoccupied()


class MediatorError(RuntimeError):
    """A request was rejected by the mediator."""


@dataclass(frozen=True)
class LogEntry:
    index: int
    request: dict
    response: dict


@dataclass
class MediatorState:
    n_channels: int
    registered: list[str] = field(default_factory=list)
    latest_share: dict[str, float] = field(default_factory=dict)
    occupancy: list[int] = field(default_factory=list)
    request_log: list[LogEntry] = field(default_factory=list)

    def __post_init__(self):
        if not self.occupancy:
            self.occupancy = [0] * self.n_channels


def encode_message(msg: dict) -> bytes:
    """Canonical single-line UTF-8 encoding (floats round-trip exactly)."""
    return json.dumps(msg, sort_keys=True, separators=(",", ":"), allow_nan=False).encode() + b"\n"


def decode_message(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    msg = json.loads(line)
    if not isinstance(msg, dict):
        raise ValueError("message is not an object")
    return msg


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


class Mediator:
    """In-process mediator over ``n_channels`` homogeneous channels."""

    def __init__(self, n_channels: int):
        if int(n_channels) != n_channels or n_channels < 1:
            raise ValueError(f"n_channels must be a positive integer, got {n_channels}")
        self.state = MediatorState(int(n_channels))
        self._next_seq = 0

    @property
    def n_channels(self) -> int:
        return self.state.n_channels

    @property
    def request_log(self) -> list[LogEntry]:
        return self.state.request_log

    @property
    def registered(self) -> tuple[str, ...]:
        return tuple(self.state.registered)

    # -- request processing ------------------------------------------------

    def handle(self, request: dict) -> dict:
        """Apply one request and return its response; the pair is logged."""
        seq = request.get("seq") if isinstance(request, dict) else None
        try:
            body = self._dispatch(request)
            response = {"seq": seq, "ok": True, **body}
        except MediatorError as exc:
            response = {"seq": seq, "ok": False, "error": str(exc)}
        self.state.request_log.append(
            LogEntry(len(self.state.request_log), dict(request) if isinstance(request, dict) else request, response)
        )
        return response

    def _dispatch(self, req: Any) -> dict:
        if not isinstance(req, dict):
            raise MediatorError("malformed request")
        op = req.get("op")
        if op not in OPS:
            raise MediatorError(f"unknown op {op!r}")
        network = req.get("network")
        if not isinstance(network, str):
            raise MediatorError("missing network id")
        st = self.state

        if op == "register":
            if network in st.latest_share:
                raise MediatorError(f"already registered: {network}")
            st.registered.append(network)
            st.latest_share[network] = 0.0
            return {}

        if network not in st.latest_share:
            raise MediatorError(f"unknown network: {network}")

        if op == "report_share":
            share = req.get("share")
            if not _is_number(share) or not math.isfinite(share):
                raise MediatorError("share must be a finite number")
            if share < 0:
                raise MediatorError("share must be non-negative")
            st.latest_share[network] = float(share)
            return {}
        if op == "get_beta":
            beta = math.fsum(s for nid, s in st.latest_share.items() if nid != network)
            return {"beta": beta}
        if op == "get_selectivity":
            return {"selectivity": [None if y == 0 else 1.0 / y for y in st.occupancy]}
        # select
        channel = req.get("channel")
        if not isinstance(channel, int) or isinstance(channel, bool):
            raise MediatorError("channel must be an integer")
        if not 0 <= channel < st.n_channels:
            raise MediatorError(f"channel out of range: {channel}")
        st.occupancy[channel] += 1
        return {}

    def _call(self, op: str, network: str, **fields) -> dict:
        request = {"seq": self._next_seq, "op": op, "network": network, **fields}
        self._next_seq += 1
        response = self.handle(request)
        if not response["ok"]:
            raise MediatorError(response["error"])
        return response

    # -- typed convenience API --------------------------------------------

    def register(self, network_id: str) -> None:
        self._call("register", network_id)

    def report_share(self, network_id: str, share: float) -> None:
        self._call("report_share", network_id, share=float(share))

    def sanitized_sum(self, network_id: str) -> float:
        return self._call("get_beta", network_id)["beta"]

    def selectivity_vector(self, network_id: str) -> list:
        """Per-channel selectivity, with :data:`UNOCCUPIED` for empty channels."""
        sel = self._call("get_selectivity", network_id)["selectivity"]
        return [UNOCCUPIED if e is None else e for e in sel]

    def record_selection(self, network_id: str, channel: int) -> None:
        self._call("select", network_id, channel=int(channel))

    @property
    def occupancy(self) -> tuple[int, ...]:
        return tuple(self.state.occupancy)


def replay(log: Iterable[LogEntry], n_channels: int) -> tuple[Mediator, list[bool]]:
    """Re-run logged requests against a fresh mediator.

    Returns the fresh mediator and, per entry, whether the encoded response
    matches the logged one byte for byte.
    """
    fresh = Mediator(n_channels)
    matches = []
    for entry in log:
        response = fresh.handle(entry.request)
        matches.append(encode_message(response) == encode_message(entry.response))
    return fresh, matches
