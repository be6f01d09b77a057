import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ctxasm.context import ContextualInput
from ctxasm.corpus import ContextCategory
from ctxasm.generation import (
    BackendError,
    EchoBackend,
    GenerationRequest,
    GenerationResponse,
    ProtocolViolationError,
    RemoteBackend,
    RetrievalBackend,
    TransportError,
    build_retrieval_index,
    generate_candidates,
    health_check,
    remote_generate,
    retrieve_generate,
)

FIXTURES = Path(__file__).parent / "fixtures"


def item(input_text, target, sample_id="s"):
    return ContextualInput(
        input_text=input_text,
        target=target,
        sample_id=sample_id,
        category=ContextCategory.NO_CONTEXT,
    )


# -------------------------------------------------------------- retrieval


def test_index_single_entry():
    index = build_retrieval_index([item("clear eax register", "xor eax, eax")])
    assert len(index) == 1


def test_index_empty_train_rejected():
    with pytest.raises(ValueError, match="non-empty"):
        build_retrieval_index([])


def test_index_keeps_duplicates_in_order():
    index = build_retrieval_index(
        [item("same input", "target a"), item("same input", "target b")]
    )
    assert len(index) == 2
    assert index.entries[0].target == "target a"
    assert retrieve_generate(index, "same input") == "target a"  # lowest index wins


def test_index_hundred_entries():
    index = build_retrieval_index([item(f"input {i}", f"t{i}") for i in range(100)])
    assert len(index) == 100


def test_retrieve_exact_match_dominates():
    index = build_retrieval_index(
        [item("clear eax register", "A"), item("increment it", "B")]
    )
    assert retrieve_generate(index, "clear eax register") == "A"


def test_retrieve_no_overlap_falls_back_to_first():
    index = build_retrieval_index([item("alpha beta", "A"), item("gamma delta", "B")])
    assert retrieve_generate(index, "zzz qqq") == "A"


def test_retrieve_is_pure():
    index = build_retrieval_index([item("push eax", "A"), item("pop ebx", "B")])
    results = {retrieve_generate(index, "push something eax") for _ in range(5)}
    assert results == {"A"}


def test_retrieval_memorizes_training_set():
    train = [item(f"unique input number {i} with token{i}", f"target {i}", f"s{i}") for i in range(20)]
    backend = RetrievalBackend(build_retrieval_index(train))
    req = GenerationRequest(
        inputs=tuple(t.input_text for t in train), max_new_tokens=8, request_id="mem"
    )
    resp = backend.generate(req)
    assert resp.snippets == tuple(t.target for t in train)


# ------------------------------------------------------------------- echo


def test_echo_contract():
    resp = EchoBackend().generate(
        GenerationRequest(inputs=("x", "y"), max_new_tokens=4, request_id="r1")
    )
    assert resp.snippets == ("x", "y")
    assert resp.backend_name == "echo"


def test_request_invariants():
    with pytest.raises(ValueError):
        GenerationRequest(inputs=(), max_new_tokens=4, request_id="r")
    with pytest.raises(ValueError):
        GenerationRequest(inputs=("x",), max_new_tokens=0, request_id="r")


# ------------------------------------------------------------ wire client


class _Handler(BaseHTTPRequestHandler):
    behavior = "echo"
    fail_remaining = 0
    requests_seen = 0

    def log_message(self, *args):
        pass

    def _send(self, code, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(200, {"status": "ok", "backend_name": type(self).behavior})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        cls = type(self)
        cls.requests_seen += 1
        if self.path != "/v1/generate":
            self._send(404, {"error": "not found"})
            return
        if cls.fail_remaining > 0:
            cls.fail_remaining -= 1
            self.connection.close()
            return
        length = int(self.headers.get("Content-Length", 0))
        req = json.loads(self.rfile.read(length))
        inputs = req["inputs"]
        if cls.behavior == "echo":
            self._send(
                200,
                {
                    "request_id": req["request_id"],
                    "backend_name": "echo",
                    "snippets": inputs,
                },
            )
        elif cls.behavior == "identity":
            snippets = [text.rsplit("_BREAK", 1)[-1].strip() for text in inputs]
            self._send(
                200,
                {
                    "request_id": req["request_id"],
                    "backend_name": "identity",
                    "snippets": snippets,
                },
            )
        elif cls.behavior == "short":
            self._send(
                200,
                {
                    "request_id": req["request_id"],
                    "backend_name": "short",
                    "snippets": inputs[:1],
                },
            )
        elif cls.behavior == "wrong_id":
            self._send(
                200,
                {"request_id": "someone-else", "backend_name": "w", "snippets": inputs},
            )
        elif cls.behavior == "error":
            self._send(503, {"error": "model not loaded"})
        elif cls.behavior == "garbage":
            body = b"<html>oops</html>"
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)


@pytest.fixture
def server():
    def start(behavior, fail_remaining=0):
        handler = type("H", (_Handler,), {"behavior": behavior, "fail_remaining": fail_remaining, "requests_seen": 0})
        httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        servers.append(httpd)
        return f"http://127.0.0.1:{httpd.server_address[1]}", handler

    servers = []
    yield start
    for httpd in servers:
        httpd.shutdown()
        httpd.server_close()


def _req(inputs, request_id="r1"):
    return GenerationRequest(inputs=tuple(inputs), max_new_tokens=16, request_id=request_id)


def test_remote_echo_contract(server):
    endpoint, _ = server("echo")
    resp = remote_generate(endpoint, _req(["x", "y"]))
    assert resp.snippets == ("x", "y")
    assert resp.backend_name == "echo"
    assert len(resp.latency_ms) == 2


def test_remote_length_mismatch_is_protocol_violation(server):
    endpoint, _ = server("short")
    with pytest.raises(ProtocolViolationError, match="alignment"):
        remote_generate(endpoint, _req(["x", "y"]))


def test_remote_request_id_mismatch(server):
    endpoint, _ = server("wrong_id")
    with pytest.raises(ProtocolViolationError, match="request_id"):
        remote_generate(endpoint, _req(["x"]))


def test_remote_non_json_body(server):
    endpoint, _ = server("garbage")
    with pytest.raises(ProtocolViolationError, match="non-JSON"):
        remote_generate(endpoint, _req(["x"]))


def test_remote_backend_error_status(server):
    endpoint, _ = server("error")
    with pytest.raises(BackendError, match="model not loaded"):
        remote_generate(endpoint, _req(["x"]))


def test_remote_unreachable_exhausts_retries():
    with pytest.raises(TransportError, match="3 attempts"):
        remote_generate("http://127.0.0.1:1", _req(["x"]), timeout=0.2, retries=2)


def test_remote_retries_transport_failures_then_succeeds(server):
    endpoint, handler = server("echo", fail_remaining=2)
    resp = remote_generate(endpoint, _req(["x"]), retries=2)
    assert resp.snippets == ("x",)
    assert handler.requests_seen == 3


def test_health_check(server):
    endpoint, _ = server("echo")
    payload = health_check(endpoint)
    assert payload["status"] == "ok"
    assert payload["backend_name"] == "echo"


def test_health_check_unreachable():
    with pytest.raises(TransportError):
        health_check("http://127.0.0.1:1", timeout=0.2)


def test_golden_fixtures_against_identity_server(server):
    request = json.loads((FIXTURES / "golden_generate_request.json").read_text())
    expected = json.loads((FIXTURES / "golden_generate_response_identity.json").read_text())
    endpoint, _ = server("identity")
    resp = remote_generate(
        endpoint,
        GenerationRequest(
            inputs=tuple(request["inputs"]),
            max_new_tokens=request["max_new_tokens"],
            request_id=request["request_id"],
        ),
    )
    assert list(resp.snippets) == expected["snippets"]
    assert resp.backend_name == expected["backend_name"]


# --------------------------------------------------------------- batching


def test_generate_candidates_batches_preserve_order(server):
    endpoint, handler = server("echo")
    backend = RemoteBackend(endpoint)
    inputs = [f"input {i}" for i in range(70)]
    out = generate_candidates(backend, inputs, batch_size=32)
    assert out == inputs
    assert handler.requests_seen == 3  # 32 + 32 + 6


def test_generate_candidates_validates_alignment():
    class Liar:
        name = "liar"

        def generate(self, req):
            return GenerationResponse(snippets=("only one",), backend_name="liar")

    with pytest.raises(ProtocolViolationError):
        generate_candidates(Liar(), ["a", "b"], batch_size=8)
