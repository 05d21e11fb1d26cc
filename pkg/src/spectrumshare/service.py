"""Line-oriented TCP front end for :class:`~spectrumshare.mediator.Mediator`.

One JSON object per line in each direction.  All connections share one
mediator and requests are applied under a single lock, so the request log is
a total order of whatever arrived.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading

from .mediator import UNOCCUPIED, Mediator, MediatorError, decode_message, encode_message

__all__ = ["MediatorServer", "MediatorClient", "parse_address"]

logger = logging.getLogger(__name__)


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: MediatorServer = self.server  # type: ignore[assignment]
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                request = decode_message(line)
            except (ValueError, UnicodeDecodeError):
                response = {"seq": None, "ok": False, "error": "malformed request"}
            else:
                with server.lock:
                    response = server.mediator.handle(request)
            self.wfile.write(encode_message(response))
            self.wfile.flush()


class MediatorServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    """Serve one mediator on ``address``; use ``port=0`` to pick a free port."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], mediator: Mediator):
        self.mediator = mediator
        self.lock = threading.Lock()
        super().__init__(address, _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class MediatorClient:
    """Blocking client exposing the same calls as an in-process mediator."""

    def __init__(self, address: tuple[str, int], n_channels: int, timeout: float = 10.0):
        self.n_channels = n_channels
        self._sock = socket.create_connection(address, timeout=timeout)
        self._rfile = self._sock.makefile("rb")
        self._seq = 0

    def close(self):
        self._rfile.close()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send_raw(self, request: dict) -> bytes:
        """Send one request and return the raw response line."""
        self._sock.sendall(encode_message(request))
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("mediator closed the connection")
        return line

    def request(self, request: dict) -> dict:
        return json.loads(self.send_raw(request))

    def _call(self, op: str, network: str, **fields) -> dict:
        response = self.request({"seq": self._seq, "op": op, "network": network, **fields})
        self._seq += 1
        if not response["ok"]:
            raise MediatorError(response["error"])
        return response

    def register(self, network_id: str) -> None:
        self._call("register", network_id)

    def report_share(self, network_id: str, share: float) -> None:
        self._call("report_share", network_id, share=float(share))

    def sanitized_sum(self, network_id: str) -> float:
        return self._call("get_beta", network_id)["beta"]

    def selectivity_vector(self, network_id: str) -> list:
        sel = self._call("get_selectivity", network_id)["selectivity"]
        return [UNOCCUPIED if e is None else e for e in sel]

    def record_selection(self, network_id: str, channel: int) -> None:
        self._call("select", network_id, channel=int(channel))


def serve(address: tuple[str, int], n_channels: int) -> None:
    """Run a mediator service in the foreground until interrupted."""
    with MediatorServer(address, Mediator(n_channels)) as server:
        host, port = server.address
        logger.info("mediator listening on %s:%d with %d channels", host, port, n_channels)
        print(f"listening on {host}:{port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
