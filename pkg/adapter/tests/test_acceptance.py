"""Adapter acceptance: protocol conformance and the fine-tune smoke test."""

import json
from contextlib import contextmanager

import requests

from conftest import FIXTURES
from ctxasm_adapter.config import AdapterConfig
from ctxasm_adapter.models import IdentityModel, load_model
from ctxasm_adapter.training import finetune


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def test_protocol_conformance_identity(run_server):
    with criterion("adapter protocol conformance (golden fixtures, alignment invariant)"):
        endpoint = run_server(IdentityModel())

        health_expected = json.loads((FIXTURES / "golden_health_response.json").read_text())
        health = requests.get(f"{endpoint}/v1/health", timeout=5)
        assert health.status_code == 200
        assert health.json() == health_expected

        request = json.loads((FIXTURES / "golden_generate_request.json").read_text())
        expected = json.loads(
            (FIXTURES / "golden_generate_response_identity.json").read_text()
        )
        resp = requests.post(f"{endpoint}/v1/generate", json=request, timeout=5)
        assert resp.status_code == 200
        assert resp.json() == expected

        inputs = [f"ctx {i} _BREAK intent {i}" for i in range(11)]
        resp = requests.post(
            f"{endpoint}/v1/generate",
            json={"request_id": "align", "inputs": inputs, "max_new_tokens": 4},
            timeout=5,
        )
        payload = resp.json()
        assert len(payload["snippets"]) == len(inputs)
        assert payload["request_id"] == "align"


def test_finetune_and_serve_smoke(toy_split, tmp_path, run_server):
    with criterion("adapter fine-tune smoke (1 epoch on 20-sample corpus, serves non-empty)"):
        train, dev = toy_split
        cfg = AdapterConfig(base_model="tiny", batch_size=8, learning_rate=0.01, seed=7)
        out = finetune(train, dev, cfg, tmp_path / "ckpt", epochs=1)

        log = [json.loads(l) for l in (out / "training_log.jsonl").read_text().splitlines()]
        assert len(log) == 1 and log[0]["train_loss"] > 0

        endpoint = run_server(load_model(str(out)))
        resp = requests.post(
            f"{endpoint}/v1/generate",
            json={
                "request_id": "smoke",
                "inputs": [
                    "clear eax register _BREAK move var0 into lower byte",
                    "negate contents esi",
                ],
                "max_new_tokens": 16,
            },
            timeout=15,
        )
        payload = resp.json()
        assert resp.status_code == 200
        assert len(payload["snippets"]) == 2
        assert all(s.strip() for s in payload["snippets"])
