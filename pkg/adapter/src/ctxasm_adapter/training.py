"""Fine-tuning on split files.

Train/dev files use the split JSONL schema: one object per line with
``input`` and ``target`` string fields.  The tiny backend trains a GRU
seq2seq from scratch; hf ids run a plain teacher-forcing loop over a
locally available seq2seq checkpoint.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import torch
from torch import nn

from .config import AdapterConfig
from .models import (
    BOS,
    EOS,
    PAD,
    AdapterError,
    TinySeq2Seq,
    Vocab,
    save_tiny_checkpoint,
)


def read_split_file(path: str | Path) -> list[tuple[str, str]]:
    path = Path(path)
    if not path.exists():
        raise AdapterError(f"split file not found: {path}")
    pairs: list[tuple[str, str]] = []
    with path.open("r", encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
                pairs.append((record["input"], record["target"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise AdapterError(f"{path}: line {i}: bad split record: {exc}") from None
    return pairs


def _pad_batch(rows: list[list[int]]) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([r + [PAD] * (width - len(r)) for r in rows], dtype=torch.long)


def _batches(pairs: list[tuple[str, str]], vocab: Vocab, batch_size: int):
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        src = _pad_batch([vocab.encode(inp) + [EOS] for inp, _ in chunk])
        tgt = [vocab.encode(out) for _, out in chunk]
        tgt_in = _pad_batch([[BOS] + t for t in tgt])
        tgt_out = _pad_batch([t + [EOS] for t in tgt])
        yield src, tgt_in, tgt_out


def _epoch_loss(model, pairs, vocab, cfg, loss_fn, optimizer=None) -> float:
    total, tokens = 0.0, 0
    for src, tgt_in, tgt_out in _batches(pairs, vocab, cfg.batch_size):
        src, tgt_in, tgt_out = (t.to(cfg.device) for t in (src, tgt_in, tgt_out))
        logits = model(src, tgt_in)
        loss = loss_fn(logits.reshape(-1, logits.size(-1)), tgt_out.reshape(-1))
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        n = int((tgt_out != PAD).sum().item())
        total += loss.item() * n
        tokens += n
    return total / max(tokens, 1)


def finetune(
    train_file: str | Path,
    dev_file: str | Path,
    cfg: AdapterConfig,
    model_out: str | Path,
    epochs: int | None = None,
    resume: bool = False,
) -> Path:
    """Train ``input -> target`` and write a checkpoint directory.

    Returns the checkpoint path.  With ``resume=True`` an existing tiny
    checkpoint in ``model_out`` is loaded and training continues from its
    recorded epoch count instead of re-initializing.
    """
    if cfg.base_model == "identity":
        raise AdapterError("the identity model has no trainable parameters")
    if cfg.base_model != "tiny":
        return _finetune_hf(train_file, dev_file, cfg, model_out, epochs)

    train_pairs = read_split_file(train_file)
    dev_pairs = read_split_file(dev_file)
    if not train_pairs:
        raise AdapterError(f"training file {train_file} holds no records")

    model_out = Path(model_out)
    epochs = epochs if epochs is not None else cfg.max_epochs
    torch.manual_seed(cfg.seed)

    start_epoch = 0
    if resume and (model_out / "config.json").exists():
        meta = json.loads((model_out / "config.json").read_text(encoding="utf-8"))
        if meta.get("mode") != "tiny":
            raise AdapterError(f"cannot resume from non-tiny checkpoint {model_out}")
        vocab = Vocab.load(model_out / "vocab.json")
        model = TinySeq2Seq(meta["vocab_size"], meta["embed_dim"], meta["hidden_dim"])
        state = torch.load(model_out / "weights.pt", map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        start_epoch = int(meta.get("epochs_completed", 0))
    else:
        vocab = Vocab.build([text for pair in train_pairs for text in pair])
        model = TinySeq2Seq(len(vocab))

    model = model.to(cfg.device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD)

    log_path = model_out / "training_log.jsonl"
    model_out.mkdir(parents=True, exist_ok=True)
    mode = "a" if resume and log_path.exists() else "w"
    with log_path.open(mode, encoding="utf-8") as log:
        for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
            model.train()
            train_loss = _epoch_loss(model, train_pairs, vocab, cfg, loss_fn, optimizer)
            model.eval()
            with torch.no_grad():
                dev_loss = _epoch_loss(model, dev_pairs, vocab, cfg, loss_fn) if dev_pairs else None
            if not math.isfinite(train_loss):
                raise AdapterError(f"training diverged at epoch {epoch}: loss={train_loss}")
            log.write(
                json.dumps({"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss})
                + "\n"
            )

    save_tiny_checkpoint(model_out, model, vocab, cfg, epochs_completed=start_epoch + epochs)
    return model_out


def _finetune_hf(train_file, dev_file, cfg, model_out, epochs: int | None) -> Path:
    try:
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
    except ImportError as exc:
        raise AdapterError(
            "fine-tuning a pretrained checkpoint needs the transformers package"
        ) from exc

    train_pairs = read_split_file(train_file)
    dev_pairs = read_split_file(dev_file)
    if not train_pairs:
        raise AdapterError(f"training file {train_file} holds no records")
    try:
        tokenizer = AutoTokenizer.from_pretrained(cfg.base_model)
        model = AutoModelForSeq2SeqLM.from_pretrained(cfg.base_model).to(cfg.device)
    except OSError as exc:
        raise AdapterError(
            f"cannot load base model {cfg.base_model!r}: weights must be available "
            "locally (this environment has no model-hub access)"
        ) from exc

    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    epochs = epochs if epochs is not None else cfg.max_epochs
    model_out = Path(model_out)
    model_out.mkdir(parents=True, exist_ok=True)

    def batch_loss(pairs, train: bool) -> float:
        total, count = 0.0, 0
        for start in range(0, len(pairs), cfg.batch_size):
            chunk = pairs[start : start + cfg.batch_size]
            enc = tokenizer([p[0] for p in chunk], return_tensors="pt", padding=True, truncation=True)
            labels = tokenizer([p[1] for p in chunk], return_tensors="pt", padding=True, truncation=True)
            label_ids = labels["input_ids"].masked_fill(
                labels["input_ids"] == tokenizer.pad_token_id, -100
            )
            enc = {k: v.to(cfg.device) for k, v in enc.items()}
            loss = model(**enc, labels=label_ids.to(cfg.device)).loss
            if train:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total += loss.item()
            count += 1
        return total / max(count, 1)

    with (model_out / "training_log.jsonl").open("w", encoding="utf-8") as log:
        for epoch in range(1, epochs + 1):
            model.train()
            train_loss = batch_loss(train_pairs, train=True)
            model.eval()
            with torch.no_grad():
                dev_loss = batch_loss(dev_pairs, train=False) if dev_pairs else None
            log.write(
                json.dumps({"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss})
                + "\n"
            )

    model.save_pretrained(model_out)
    tokenizer.save_pretrained(model_out)
    return model_out
