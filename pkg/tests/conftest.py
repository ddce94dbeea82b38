"""Shared fixtures: a scriptable local HTTP server, issue factories,
and store helpers used across the suite."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import parse_qs, urlsplit

import pytest

from cruise.models import RawIssue
from cruise.store import Store

Responder = Callable[[str, str, dict, bytes], tuple[int, object]]


class StubServer:
    """Local HTTP server whose behavior is one injected callable.

    ``respond(method, path, query, body)`` returns (status, payload);
    dict/list payloads are JSON-encoded, str/bytes sent as-is. Every
    request is appended to ``log`` for wire-level assertions.
    """

    def __init__(self, respond: Responder):
        self.respond = respond
        self.log: list[tuple[str, str, dict, bytes]] = []
        self.headers: list[dict] = []  # request headers, parallel to log
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def _serve(self, method: str) -> None:
                parts = urlsplit(self.path)
                query = {k: v[0] for k, v in parse_qs(parts.query).items()}
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length) if length else b""
                outer.log.append((method, parts.path, query, body))
                outer.headers.append(dict(self.headers))
                status, payload = outer.respond(method, parts.path, query, body)
                if isinstance(payload, bytes):
                    data = payload
                elif isinstance(payload, str):
                    data = payload.encode("utf-8")
                else:
                    data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self) -> None:
                self._serve("GET")

            def do_POST(self) -> None:
                self._serve("POST")

            def log_message(self, *args) -> None:  # silence request logging
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def stub_server():
    servers: list[StubServer] = []

    def start(respond: Responder) -> StubServer:
        server = StubServer(respond)
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.close()


def make_issue(
    id: str = "1",
    tracker: str = "trk",
    *,
    title: str = "Cart total is wrong",
    body: str = "The cart total is wrong after applying a coupon.",
    labels: tuple[str, ...] = ("bug",),
    state: str = "closed",
    created_at: str = "2024-01-01T00:00:00Z",
    fetched_at: str = "2024-06-01T00:00:00Z",
    url: str | None = None,
) -> RawIssue:
    return RawIssue(
        id=id,
        tracker=tracker,
        url=url if url is not None else f"https://tracker.example/{tracker}/issues/{id}",
        title=title,
        body=body,
        labels=labels,
        state=state,
        created_at=created_at,
        fetched_at=fetched_at,
    )


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "store")
