"""Canned external search service for tests and demos.

Serves GET /search?q=...&k=... with fixture results in the documented wire
schema. Behavior knobs (`status`, `delay`) let tests exercise the 5xx and
timeout paths of the external backend client.

Run standalone with: python -m ctxsearch.stubserver --port 8099 --fixture f.json
"""

from __future__ import annotations

import argparse
import json
import threading
import time
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class StubSearchServer:
    """In-process HTTP stub; start() binds an ephemeral port unless given one."""

    def __init__(self, results=None, per_query=None, status: int = 200, delay: float = 0.0,
                 host: str = "127.0.0.1", port: int = 0):
        self.results = results if results is not None else []
        self.per_query = per_query or {}
        self.status = status
        self.delay = delay
        self.requests: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                parsed = urllib.parse.urlparse(self.path)
                if parsed.path != "/search":
                    self.send_error(404)
                    return
                params = urllib.parse.parse_qs(parsed.query)
                query = params.get("q", [""])[0]
                k = int(params.get("k", ["10"])[0])
                stub.requests.append({"q": query, "k": k})
                if stub.delay:
                    time.sleep(stub.delay)
                if stub.status != 200:
                    self.send_response(stub.status)
                    self.send_header("Content-Type", "application/json")
                    self.end_headers()
                    self.wfile.write(b'{"error":"stub failure"}')
                    return
                results = stub.per_query.get(query, stub.results)[:k]
                body = json.dumps({"results": results}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubSearchServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "StubSearchServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Run the stub external search service")
    parser.add_argument("--port", type=int, default=8099)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--fixture", help="JSON file: list of results or {query: results}")
    parser.add_argument("--status", type=int, default=200)
    parser.add_argument("--delay", type=float, default=0.0)
    args = parser.parse_args(argv)

    results, per_query = [], {}
    if args.fixture:
        with open(args.fixture, encoding="utf-8") as handle:
            data = json.load(handle)
        if isinstance(data, list):
            results = data
        else:
            per_query = {q: r for q, r in data.items() if q != "*"}
            results = data.get("*", [])

    stub = StubSearchServer(results=results, per_query=per_query, status=args.status,
                            delay=args.delay, host=args.host, port=args.port)
    print(f"stub search service on {stub.endpoint}", flush=True)
    try:
        stub._server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
