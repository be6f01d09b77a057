"""HTTP service implementing the generation wire protocol.

POST /v1/generate  {"request_id": str, "inputs": [str], "max_new_tokens": int}
  -> 200           {"request_id": str, "backend_name": str, "snippets": [str]}
  -> 400           {"error": str} on a malformed body
GET  /v1/health    -> {"status": "ok", "backend_name": str}

Generation is request-serial behind a lock; responses carry the caller's
request_id back regardless of scheduling, and snippets are always
index-aligned with inputs.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class ProtocolRequestError(Exception):
    """The request body does not follow the wire protocol."""


def _validate_generate_body(body: bytes) -> dict:
    try:
        payload = json.loads(body)
    except json.JSONDecodeError:
        raise ProtocolRequestError("body is not valid JSON") from None
    if not isinstance(payload, dict):
        raise ProtocolRequestError("body must be a JSON object")
    for field in ("request_id", "inputs", "max_new_tokens"):
        if field not in payload:
            raise ProtocolRequestError(f"missing field {field!r}")
    if not isinstance(payload["request_id"], str):
        raise ProtocolRequestError("request_id must be a string")
    inputs = payload["inputs"]
    if (
        not isinstance(inputs, list)
        or not inputs
        or not all(isinstance(x, str) for x in inputs)
    ):
        raise ProtocolRequestError("inputs must be a non-empty list of strings")
    tokens = payload["max_new_tokens"]
    if not isinstance(tokens, int) or isinstance(tokens, bool) or tokens <= 0:
        raise ProtocolRequestError("max_new_tokens must be a positive integer")
    return payload


def make_server(model, host: str = "127.0.0.1", port: int = 8040) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server around a model backend."""
    lock = threading.Lock()

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def _send(self, code: int, payload: dict) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/v1/health":
                self._send(200, {"status": "ok", "backend_name": model.name})
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != "/v1/generate":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = _validate_generate_body(self.rfile.read(length))
            except ProtocolRequestError as exc:
                self._send(400, {"error": str(exc)})
                return
            try:
                with lock:
                    snippets = model.generate(payload["inputs"], payload["max_new_tokens"])
            except Exception as exc:  # a model bug must not kill the server
                self._send(500, {"error": f"generation failed: {exc}"})
                return
            if len(snippets) != len(payload["inputs"]):
                self._send(500, {"error": "internal alignment violation"})
                return
            self._send(
                200,
                {
                    "request_id": payload["request_id"],
                    "backend_name": model.name,
                    "snippets": list(snippets),
                },
            )

    return ThreadingHTTPServer((host, port), Handler)


def serve(model, host: str = "127.0.0.1", port: int = 8040) -> None:
    """Run the server until interrupted."""
    httpd = make_server(model, host, port)
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()
