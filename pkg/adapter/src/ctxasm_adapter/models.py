"""Model backends behind the generation server.

Three modes, selected by ``base_model``:

* ``identity`` -- returns the text after the last separator token; no
  training, used for protocol-conformance tests.
* ``tiny`` -- a small word-level GRU encoder-decoder trained from scratch
  on the split files; small enough that a CPU fine-tune on a toy corpus
  takes seconds.  Greedy decoding, deterministic for a fixed checkpoint.
* anything else -- treated as a Hugging Face seq2seq checkpoint id or
  path; requires the weights to be available locally.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from torch import nn

from .config import AdapterConfig

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


class AdapterError(Exception):
    pass


class Vocab:
    def __init__(self, tokens: list[str]):
        self.itos = list(_SPECIALS) + [t for t in tokens if t not in _SPECIALS]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @staticmethod
    def build(texts: list[str]) -> "Vocab":
        seen: dict[str, None] = {}
        for text in texts:
            for token in text.split():
                seen.setdefault(token, None)
        return Vocab(list(seen))

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(tok, UNK) for tok in text.split()]

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.itos[i] for i in ids if i >= len(_SPECIALS) or i == UNK)

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.itos, ensure_ascii=False), encoding="utf-8")

    @staticmethod
    def load(path: Path) -> "Vocab":
        itos = json.loads(path.read_text(encoding="utf-8"))
        vocab = Vocab([])
        vocab.itos = itos
        vocab.stoi = {t: i for i, t in enumerate(itos)}
        return vocab


class IdentityModel:
    """Echoes the segment after the last separator; for integration tests."""

    name = "identity"

    def __init__(self, separator: str = "_BREAK"):
        self.separator = separator

    def generate(self, inputs: list[str], max_new_tokens: int) -> list[str]:
        return [text.rsplit(self.separator, 1)[-1].strip() for text in inputs]


class TinySeq2Seq(nn.Module):
    """Word-level GRU encoder-decoder small enough for CPU smoke training."""

    def __init__(self, vocab_size: int, embed_dim: int = 64, hidden_dim: int = 96):
        super().__init__()
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.src_embed = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD)
        self.tgt_embed = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD)
        self.encoder = nn.GRU(embed_dim, hidden_dim, batch_first=True)
        self.decoder = nn.GRU(embed_dim, hidden_dim, batch_first=True)
        self.out = nn.Linear(hidden_dim, vocab_size)

    def encode(self, src: torch.Tensor) -> torch.Tensor:
        _, state = self.encoder(self.src_embed(src))
        return state

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        state = self.encode(src)
        outputs, _ = self.decoder(self.tgt_embed(tgt_in), state)
        return self.out(outputs)

    @torch.no_grad()
    def greedy_decode(self, src_ids: list[int], max_new_tokens: int) -> list[int]:
        self.eval()
        src = torch.tensor([src_ids or [UNK]], dtype=torch.long)
        state = self.encode(src)
        token = torch.tensor([[BOS]], dtype=torch.long)
        decoded: list[int] = []
        for step in range(max_new_tokens):
            output, state = self.decoder(self.tgt_embed(token), state)
            logits = self.out(output[0, -1])
            if step == 0:
                logits[EOS] = float("-inf")  # a served snippet is never empty
            logits[PAD] = float("-inf")
            logits[BOS] = float("-inf")
            next_id = int(torch.argmax(logits).item())
            if next_id == EOS:
                break
            decoded.append(next_id)
            token = torch.tensor([[next_id]], dtype=torch.long)
        return decoded


class TinyModelBackend:
    name = "tiny"

    def __init__(self, model: TinySeq2Seq, vocab: Vocab, device: str = "cpu"):
        self.model = model.to(device)
        self.vocab = vocab
        self.device = device

    def generate(self, inputs: list[str], max_new_tokens: int) -> list[str]:
        return [
            self.vocab.decode(self.model.greedy_decode(self.vocab.encode(text), max_new_tokens))
            for text in inputs
        ]


class HFModelBackend:
    """Thin wrapper around a locally available Hugging Face seq2seq model."""

    def __init__(self, model_dir: str, cfg: AdapterConfig):
        try:
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        except ImportError as exc:
            raise AdapterError(
                "base models other than 'tiny'/'identity' need the transformers package"
            ) from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_dir)
            self.model = AutoModelForSeq2SeqLM.from_pretrained(model_dir).to(cfg.device)
        except OSError as exc:
            raise AdapterError(
                f"cannot load {model_dir!r}: weights must be available locally "
                "(this environment has no model-hub access)"
            ) from exc
        self.cfg = cfg
        self.name = Path(model_dir).name or model_dir

    def generate(self, inputs: list[str], max_new_tokens: int) -> list[str]:
        batch = self.tokenizer(inputs, return_tensors="pt", padding=True, truncation=True)
        batch = {k: v.to(self.cfg.device) for k, v in batch.items()}
        out = self.model.generate(
            **batch, max_new_tokens=max_new_tokens, num_beams=self.cfg.beam_size
        )
        return self.tokenizer.batch_decode(out, skip_special_tokens=True)


def save_tiny_checkpoint(
    model_dir: Path,
    model: TinySeq2Seq,
    vocab: Vocab,
    cfg: AdapterConfig,
    epochs_completed: int,
) -> None:
    model_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), model_dir / "weights.pt")
    vocab.save(model_dir / "vocab.json")
    (model_dir / "config.json").write_text(
        json.dumps(
            {
                "mode": "tiny",
                "vocab_size": len(vocab),
                "embed_dim": model.embed_dim,
                "hidden_dim": model.hidden_dim,
                "epochs_completed": epochs_completed,
                "adapter_config": cfg.to_dict(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


def load_model(model: str, separator: str = "_BREAK"):
    """Resolve a ``--model`` argument into a backend.

    ``identity`` is a mode, not a checkpoint.  A directory containing a
    ``config.json`` with ``mode: tiny`` loads the built-in model; anything
    else is handed to the hf backend.
    """
    if model == "identity":
        return IdentityModel(separator)
    model_dir = Path(model)
    config_path = model_dir / "config.json"
    if config_path.exists():
        meta = json.loads(config_path.read_text(encoding="utf-8"))
        if meta.get("mode") == "identity":
            return IdentityModel(meta.get("separator", separator))
        if meta.get("mode") == "tiny":
            vocab = Vocab.load(model_dir / "vocab.json")
            net = TinySeq2Seq(meta["vocab_size"], meta["embed_dim"], meta["hidden_dim"])
            state = torch.load(model_dir / "weights.pt", map_location="cpu", weights_only=True)
            net.load_state_dict(state)
            cfg = AdapterConfig.from_dict(meta.get("adapter_config", {}))
            return TinyModelBackend(net, vocab, cfg.device)
    if not model_dir.exists() and (model_dir.is_absolute() or model.startswith(".")):
        raise AdapterError(f"checkpoint directory {model!r} does not exist")
    return HFModelBackend(model, AdapterConfig(base_model=model))
