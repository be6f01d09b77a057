import json
import threading
from pathlib import Path

import pytest

from ctxasm_adapter.server import make_server

FIXTURES = Path(__file__).parent / "fixtures"

# A 20-pair toy training set in the split-file schema the primary harness
# exports (standardized inputs, _BREAK-joined context).
TOY_PAIRS = [
    ("clear eax register", "xor eax, eax"),
    ("move value var0 into lower byte eax", "mov al, var0"),
    ("negate contents esi", "not esi"),
    ("push string var0 onto stack", "push var0"),
    ("increment edi register", "inc edi"),
    ("subtract var0 from current byte in esi", "sub byte [esi], var0"),
    ("perform bitwise and between ecx and var0", "and ecx, var0"),
    ("jump short to label encoder", "jmp short encoder"),
    ("clear eax register _BREAK move var0 into lower byte", "mov al, var0"),
    ("move esi in eax _BREAK increment it", "inc eax"),
    ("push value var0 onto stack _BREAK pop it into eax", "pop eax"),
    ("zero out ebx register _BREAK move var0 into its lower byte", "mov bl, var0"),
    (
        "subtract var0 from current byte in esi _BREAK negate result _BREAK move eax in it",
        "mov byte [esi], eax",
    ),
    (
        "move eax to edx _BREAK right shift register by var0 bits _BREAK add result to eax",
        "add eax, edx",
    ),
    ("define decode label _BREAK subtract var0 from current byte", "sub byte [esi], var0"),
    ("increment edi _BREAK add var0 to al", "add al, var0"),
    ("move var0 into lower byte _BREAK jump short to switch", "jmp short switch"),
    (
        "increment edi _BREAK add var0 to al _BREAK jump to label recv_http_request",
        "jmp recv_http_request",
    ),
    (
        "define decode label _BREAK clear eax register _BREAK store doubleword var0 on stack",
        "push var0",
    ),
    (
        "negate contents esi _BREAK push string var0 _BREAK compare dl with byte var0",
        "cmp dl, var0\nje found",
    ),
]


def write_split_file(path: Path, pairs) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for i, (input_text, target) in enumerate(pairs):
            fh.write(
                json.dumps(
                    {
                        "input": input_text,
                        "target": target,
                        "sample_id": f"toy_{i:02d}",
                        "category": "no_context",
                    }
                )
                + "\n"
            )
    return path


@pytest.fixture
def toy_split(tmp_path):
    train = write_split_file(tmp_path / "train.jsonl", TOY_PAIRS)
    dev = write_split_file(tmp_path / "dev.jsonl", TOY_PAIRS[:4])
    return train, dev


@pytest.fixture
def run_server():
    servers = []

    def start(model):
        httpd = make_server(model, host="127.0.0.1", port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        servers.append(httpd)
        return f"http://127.0.0.1:{httpd.server_address[1]}"

    yield start
    for httpd in servers:
        httpd.shutdown()
        httpd.server_close()
