"""Shared HTTP plumbing for the identity-provider and service-provider
services: a threading server, form/query helpers, and the test-only
clock-skew header.

Services run with a base clock (injectable for tests).  When a server is
started with test_clock=True, an `X-Test-Clock-Skew: <seconds>` request
header shifts that request's notion of "now"; the header is ignored
otherwise.
"""

from __future__ import annotations

import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlsplit

log = logging.getLogger("hbesso.http")

SKEW_HEADER = "X-Test-Clock-Skew"


class SkewableClock:
    """Clock with a per-request (thread-local) offset on top of a base clock."""

    def __init__(self, base: Callable[[], float] = time.time):
        self.base = base
        self._local = threading.local()

    def __call__(self) -> float:
        return self.base() + getattr(self._local, "skew", 0.0)

    def set_skew(self, seconds: float) -> None:
        self._local.skew = seconds


class ServiceServer(ThreadingHTTPServer):
    daemon_threads = True
    # replay-contract tests burst 32 concurrent submissions; the default
    # backlog of 5 drops connections under that load
    request_queue_size = 64

    def __init__(self, address, handler_cls, service, test_clock: bool = False):
        self.service = service
        self.test_clock = test_clock
        super().__init__(address, handler_cls)


class ServiceHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self):
        return self.server.service

    def log_message(self, fmt, *args):  # quiet by default; route to logging
        log.debug("%s %s", self.address_string(), fmt % args)

    def apply_test_clock(self) -> None:
        skew = 0.0
        if self.server.test_clock:
            header = self.headers.get(SKEW_HEADER)
            if header is not None:
                try:
                    skew = float(header)
                except ValueError:
                    skew = 0.0
        self.service.clock.set_skew(skew)

    def query(self) -> dict[str, str]:
        parsed = parse_qs(urlsplit(self.path).query, keep_blank_values=True)
        return {k: v[0] for k, v in parsed.items()}

    def form(self) -> dict[str, str]:
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8", errors="replace")
        return {k: v[0] for k, v in parse_qs(body, keep_blank_values=True).items()}

    def respond(self, status: int, body: bytes | str = b"", content_type: str = "text/plain", headers: Optional[dict[str, str]] = None) -> None:
        if isinstance(body, str):
            body = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for name, value in (headers or {}).items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)


def start_server(service, handler_cls, host: str, port: int, test_clock: bool = False) -> ServiceServer:
    """Bind and start serving on a background thread; returns the server."""
    server = ServiceServer((host, port), handler_cls, service, test_clock=test_clock)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def parse_listen_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen address must be host:port, got {address!r}")
    return host, int(port)
