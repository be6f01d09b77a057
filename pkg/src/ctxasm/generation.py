"""Candidate-snippet generation backends.

Three backends produce candidates for evaluation: a deterministic
token-set retrieval baseline built from the training split, an echo stub
for tests, and an HTTP client for remote model servers.  All of them see
standardized, separator-joined inputs; de-standardization happens on the
evaluation side after candidates come back.

Wire protocol (shared with any conforming server):
  POST /v1/generate   {"request_id": str, "inputs": [str], "max_new_tokens": int}
    -> 200            {"request_id": str, "backend_name": str, "snippets": [str]}
    -> non-200        {"error": str}
  GET  /v1/health     -> {"status": "ok", "backend_name": str}
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

from .preprocess import TextKind, tokenize


class BackendError(Exception):
    """The backend reported a failure (non-200 with an error body)."""


class TransportError(BackendError):
    """The endpoint could not be reached after all retries."""


class ProtocolViolationError(BackendError):
    """The backend answered, but not in the agreed wire format."""


@dataclass(frozen=True)
class GenerationRequest:
    inputs: tuple[str, ...]
    max_new_tokens: int
    request_id: str

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("GenerationRequest.inputs must be non-empty")
        if self.max_new_tokens <= 0:
            raise ValueError("GenerationRequest.max_new_tokens must be positive")


@dataclass(frozen=True)
class GenerationResponse:
    snippets: tuple[str, ...]
    backend_name: str
    latency_ms: tuple[float, ...] = ()


def input_token_set(text: str) -> frozenset[str]:
    """Token set used for retrieval similarity (intent tokenization)."""
    return frozenset(tokenize(text, TextKind.INTENT).tokens)


@dataclass(frozen=True)
class RetrievalEntry:
    tokens: frozenset[str]
    target: str
    train_index: int


@dataclass(frozen=True)
class RetrievalIndex:
    entries: tuple[RetrievalEntry, ...]
    source_sample_ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


def build_retrieval_index(train: Sequence) -> RetrievalIndex:
    """Index training inputs by token set; order follows the training file.

    Accepts anything with ``input_text``/``target``/``sample_id`` fields
    (the context module's contextual inputs or split records).
    """
    if not train:
        raise ValueError("retrieval index requires a non-empty training set")
    entries = tuple(
        RetrievalEntry(
            tokens=input_token_set(item.input_text),
            target=item.target,
            train_index=i,
        )
        for i, item in enumerate(train)
    )
    return RetrievalIndex(entries, tuple(item.sample_id for item in train))


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def retrieve_generate(index: RetrievalIndex, input_text: str) -> str:
    """Target of the most token-similar training entry; ties go to the
    lowest training index, so the result is a pure function of the input."""
    if not index.entries:
        raise ValueError("retrieval index is empty")
    query = input_token_set(input_text)
    best = index.entries[0]
    best_score = _jaccard(query, best.tokens)
    for entry in index.entries[1:]:
        score = _jaccard(query, entry.tokens)
        if score > best_score:
            best, best_score = entry, score
    return best.target


def health_check(endpoint: str, timeout: float = 10.0) -> dict:
    """GET /v1/health; raises on transport failure or a malformed body."""
    url = endpoint.rstrip("/") + "/v1/health"
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"health check against {url} failed: {exc}") from exc
    try:
        payload = resp.json()
    except ValueError:
        raise ProtocolViolationError(f"health check returned non-JSON body from {url}") from None
    if resp.status_code != 200 or payload.get("status") != "ok":
        raise BackendError(f"backend unhealthy at {url}: {payload}")
    return payload


def remote_generate(
    endpoint: str,
    req: GenerationRequest,
    timeout: float = 30.0,
    retries: int = 2,
) -> GenerationResponse:
    """POST the request to a remote server, retrying transport failures.

    Retries cover connection-level failures only (the request is
    idempotent); a served error status or a malformed/misaligned body is
    reported immediately and distinctly.
    """
    url = endpoint.rstrip("/") + "/v1/generate"
    body = {
        "request_id": req.request_id,
        "inputs": list(req.inputs),
        "max_new_tokens": req.max_new_tokens,
    }
    attempts = retries + 1
    last_exc: Exception | None = None
    for _ in range(attempts):
        started = time.perf_counter()
        try:
            resp = requests.post(url, json=body, timeout=timeout)
        except requests.RequestException as exc:
            last_exc = exc
            continue
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return _parse_generate_response(resp, req, elapsed_ms)
    raise TransportError(f"{url} unreachable after {attempts} attempts: {last_exc}")


def _parse_generate_response(
    resp: requests.Response, req: GenerationRequest, elapsed_ms: float
) -> GenerationResponse:
    try:
        payload = resp.json()
    except ValueError:
        raise ProtocolViolationError("backend returned a non-JSON body") from None
    if resp.status_code != 200:
        raise BackendError(
            f"backend returned {resp.status_code}: {payload.get('error', '<no error field>')}"
        )
    snippets = payload.get("snippets")
    if not isinstance(snippets, list) or not all(isinstance(s, str) for s in snippets):
        raise ProtocolViolationError("response field 'snippets' must be a list of strings")
    if len(snippets) != len(req.inputs):
        raise ProtocolViolationError(
            f"alignment violation: {len(req.inputs)} inputs but {len(snippets)} snippets"
        )
    if payload.get("request_id") != req.request_id:
        raise ProtocolViolationError(
            f"response request_id {payload.get('request_id')!r} does not match {req.request_id!r}"
        )
    per_item = elapsed_ms / len(snippets) if snippets else 0.0
    return GenerationResponse(
        snippets=tuple(snippets),
        backend_name=str(payload.get("backend_name", "")),
        latency_ms=tuple(per_item for _ in snippets),
    )


class Backend(Protocol):
    name: str

    def generate(self, req: GenerationRequest) -> GenerationResponse: ...


@dataclass
class EchoBackend:
    """Returns each input unchanged; a fixture for pipeline smoke tests."""

    name: str = "echo"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        return GenerationResponse(
            snippets=req.inputs,
            backend_name=self.name,
            latency_ms=tuple(0.0 for _ in req.inputs),
        )


@dataclass
class RetrievalBackend:
    index: RetrievalIndex
    name: str = "retrieval"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        snippets = tuple(retrieve_generate(self.index, text) for text in req.inputs)
        return GenerationResponse(
            snippets=snippets,
            backend_name=self.name,
            latency_ms=tuple(0.0 for _ in req.inputs),
        )


@dataclass
class RemoteBackend:
    endpoint: str
    timeout: float = 30.0
    retries: int = 2
    name: str = "remote"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        return remote_generate(self.endpoint, req, timeout=self.timeout, retries=self.retries)


DEFAULT_BATCH_SIZE = 32


def iter_generate_batches(
    backend: Backend,
    inputs: Sequence[str],
    max_new_tokens: int = 128,
    batch_size: int = DEFAULT_BATCH_SIZE,
    request_prefix: str = "batch",
):
    """Yield snippet batches in input order, validating alignment per batch.

    Request ids are derived from the batch number so repeated runs produce
    identical artifacts.
    """
    for batch_no, start in enumerate(range(0, len(inputs), batch_size)):
        chunk = tuple(inputs[start : start + batch_size])
        req = GenerationRequest(
            inputs=chunk,
            max_new_tokens=max_new_tokens,
            request_id=f"{request_prefix}-{batch_no:04d}",
        )
        resp = backend.generate(req)
        if len(resp.snippets) != len(chunk):
            raise ProtocolViolationError(
                f"backend {backend.name} returned {len(resp.snippets)} snippets for {len(chunk)} inputs"
            )
        yield resp.snippets


def generate_candidates(
    backend: Backend,
    inputs: Sequence[str],
    max_new_tokens: int = 128,
    batch_size: int = DEFAULT_BATCH_SIZE,
    request_prefix: str = "batch",
) -> list[str]:
    """Run inputs through a backend in order-preserving batches."""
    out: list[str] = []
    for snippets in iter_generate_batches(
        backend, inputs, max_new_tokens, batch_size, request_prefix
    ):
        out.extend(snippets)
    return out
