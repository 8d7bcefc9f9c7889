"""HTTP/1.1 front-end for the report store.

POST /acsnservice/submit   binary submit batch in the body
POST /acsnservice/fetch    JSON fetch request in the body

The Authorization header is taken verbatim as the opaque owner token; the
X-Finder-Identity header as the opaque finder token.  Neither is validated:
the real system's attestation and token minting are deliberately out of
scope, and the simulator only needs identities to study their metadata.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .service import BadHeader, LengthMismatch, MalformedFetch, ReportStore

SUBMIT_PATH = "/acsnservice/submit"
FETCH_PATH = "/acsnservice/fetch"


class _Handler(BaseHTTPRequestHandler):
    store: ReportStore  # assigned by make_server

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length)

    def _respond(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _respond_json(self, status: int, payload: dict):
        self._respond(status, json.dumps(payload).encode(), "application/json")

    def do_POST(self):
        body = self._read_body()
        if self.path == SUBMIT_PATH:
            finder_id = self.headers.get("X-Finder-Identity", "")
            try:
                stored = self.store.submit(body, finder_id=finder_id)
            except (BadHeader, LengthMismatch) as exc:
                self._respond_json(400, {"statusCode": "400", "error": str(exc)})
                return
            self._respond_json(200, {"statusCode": "200", "stored": stored})
        elif self.path == FETCH_PATH:
            owner_token = self.headers.get("Authorization")
            try:
                response = self.store.fetch(body, owner_token=owner_token)
            except MalformedFetch as exc:
                self._respond_json(400, {"statusCode": "400", "error": str(exc)})
                return
            self._respond_json(200, response)
        else:
            self._respond_json(404, {"statusCode": "404"})


def make_server(store: ReportStore, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build a server bound to ``port`` (0 picks a free one); caller runs it."""
    handler = type("BoundHandler", (_Handler,), {"store": store})
    return ThreadingHTTPServer((host, port), handler)


def serve_background(store: ReportStore, host: str = "127.0.0.1", port: int = 0):
    """Start a daemon-thread server; returns (server, base_url)."""
    server = make_server(store, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{server.server_address[0]}:{server.server_address[1]}"
