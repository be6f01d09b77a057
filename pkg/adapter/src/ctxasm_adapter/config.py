"""Adapter configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class AdapterConfig:
    """Fine-tuning and decoding knobs.

    Defaults follow the hyperparameter style common for fine-tuning
    pretrained code models on corpora of this size: a small learning rate,
    batches of 16-32, and beam width 10 (used by the hf backend; the
    built-in tiny model decodes greedily).
    """

    base_model: str = "tiny"
    learning_rate: float = 0.00005
    batch_size: int = 32
    beam_size: int = 10
    max_epochs: int = 10
    device: str = "cpu"
    seed: int = 7
    separator: str = "_BREAK"

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "AdapterConfig":
        known = {f for f in AdapterConfig.__dataclass_fields__}
        return AdapterConfig(**{k: v for k, v in data.items() if k in known})
