"""HTTP front of the context service.

Endpoints (JSON request/response bodies, schemas in docs/api.md):

    POST /v1/search    {user_id, query, alpha?, max_subqueries?}
    POST /v1/events    {user_id, events: [...]}
    POST /v1/feedback  {user_id, kind, target, value?, title?, ts?}
    POST /v1/register  {user_id, storage_mode?}
    POST /v1/digest    {user_id, digest}
    GET  /v1/profile/{user}
    GET  /v1/health

Errors come back as {"error": {"code", "message"}} with the matching HTTP
status. When `static_dir` is configured, anything outside /v1/ is served
from it (the companion web console). CORS is wide open: the service carries
no credentials and runs at desk scale.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import (
    AllBackendsFailed,
    DigestParse,
    EmptyQuery,
    MalformedEvent,
    UnknownKind,
)
from .gateway import ContextService


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: ContextService):
        super().__init__(address, ApiHandler)
        self.service = service

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    @property
    def service(self) -> ContextService:
        return self.server.service

    # -- plumbing -----------------------------------------------------------

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_error(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": {"code": code, "message": message}})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise ValueError("empty request body")
        data = json.loads(raw.decode("utf-8"))
        if not isinstance(data, dict):
            raise ValueError("request body must be a JSON object")
        return data

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- routes ---------------------------------------------------------------

    def do_GET(self):
        path = urllib.parse.urlparse(self.path).path
        if path == "/v1/health":
            self._send_json(200, {"status": "ok"})
            return
        if path.startswith("/v1/profile/"):
            user_id = urllib.parse.unquote(path[len("/v1/profile/"):])
            try:
                self._send_json(200, self.service.profile_view(user_id))
            except KeyError:
                self._send_error(404, "UnknownUser", f"no profile for {user_id!r}")
            return
        if self._serve_static(path):
            return
        self._send_error(404, "NotFound", f"no route for {path}")

    def do_POST(self):
        path = urllib.parse.urlparse(self.path).path
        handler = {
            "/v1/search": self._post_search,
            "/v1/events": self._post_events,
            "/v1/feedback": self._post_feedback,
            "/v1/register": self._post_register,
            "/v1/digest": self._post_digest,
        }.get(path)
        if handler is None:
            self._send_error(404, "NotFound", f"no route for {path}")
            return
        try:
            body = self._read_body()
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_error(400, "BadRequest", str(exc))
            return
        try:
            handler(body)
        except Exception as exc:  # noqa: BLE001 - mapped to a JSON error below
            self._handle_exception(exc)

    def _handle_exception(self, exc: Exception) -> None:
        if isinstance(exc, EmptyQuery):
            self._send_error(400, "EmptyQuery", str(exc))
        elif isinstance(exc, MalformedEvent):
            self._send_error(400, "MalformedEvent", str(exc))
        elif isinstance(exc, UnknownKind):
            self._send_error(400, "UnknownKind", str(exc))
        elif isinstance(exc, DigestParse):
            self._send_error(400, "DigestParse", str(exc))
        elif isinstance(exc, ValueError):
            self._send_error(400, "BadRequest", str(exc))
        elif isinstance(exc, KeyError):
            self._send_error(404, "UnknownUser", f"no profile for {exc.args[0]!r}")
        elif isinstance(exc, PermissionError):
            self._send_error(403, "NotRegistered",
                             f"user {exc.args[0]!r} has not registered for server storage")
        elif isinstance(exc, AllBackendsFailed):
            self._send_error(503, "AllBackendsFailed", str(exc))
        else:
            self._send_error(500, "Internal", f"{type(exc).__name__}: {exc}")

    def _post_search(self, body: dict) -> None:
        if "query" not in body:
            raise EmptyQuery("request body is missing the query field")
        response = self.service.search(
            user_id=str(body.get("user_id", "")),
            query_text=str(body["query"]),
            alpha=body.get("alpha"),
            max_subqueries=body.get("max_subqueries"),
        )
        self._send_json(200, response)

    def _post_events(self, body: dict) -> None:
        events = body.get("events")
        if not isinstance(events, list):
            raise ValueError("events must be a list of activity records")
        response = self.service.ingest_events(str(body.get("user_id", "")), events)
        self._send_json(200, response)

    def _post_feedback(self, body: dict) -> None:
        self._send_json(200, self.service.apply_feedback(body))

    def _post_register(self, body: dict) -> None:
        response = self.service.register(
            user_id=str(body.get("user_id", "")),
            storage_mode=str(body.get("storage_mode", "server")),
        )
        self._send_json(200, response)

    def _post_digest(self, body: dict) -> None:
        if "digest" not in body:
            raise DigestParse("request body is missing the digest field")
        response = self.service.accept_digest(str(body.get("user_id", "")), body["digest"])
        self._send_json(200, response)

    # -- static assets -----------------------------------------------------------

    def _serve_static(self, path: str) -> bool:
        static_dir = self.service.config.static_dir
        if not static_dir:
            return False
        rel = path.lstrip("/") or "index.html"
        root = os.path.abspath(static_dir)
        full = os.path.normpath(os.path.join(root, rel))
        if not full.startswith(root + os.sep) or not os.path.isfile(full):
            return False
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as handle:
            data = handle.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
        return True


def make_server(service: ContextService, host: str | None = None,
                port: int | None = None) -> ApiServer:
    """Bind an API server; None falls back to the config, 0 picks an ephemeral port."""
    host = service.config.host if host is None else host
    port = service.config.port if port is None else port
    return ApiServer((host, port), service)


def serve_in_thread(service: ContextService, host: str = "127.0.0.1",
                    port: int = 0) -> tuple[ApiServer, threading.Thread]:
    server = make_server(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
