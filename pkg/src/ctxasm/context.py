"""Contextual-input construction and experimental split generation.

A contextual input joins a sample's preceding intents and its current
intent with a separator token (``_BREAK`` by default, space-padded), so a
model can distinguish the actionable intent from its backdrop.  Splits are
materialized from declarative per-category quotas with a seeded shuffle;
the five shipped presets pin the experiment design's absolute counts, and
their known off-by-one discrepancies are flagged in the manifest rather
than silently reconciled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Mapping, Sequence

from .corpus import CATEGORY_ORDER, ContextCategory, Corpus, Sample, corpus_content_hash

DEFAULT_SEPARATOR = "_BREAK"

PRESET_NAMES = ("missing_information", "ctx_2to1", "ctx_3to1", "unn_2to1", "unn_3to1")

_PRESET_DIR = Path(__file__).parent / "data" / "presets"


class SplitError(Exception):
    """A split request cannot be satisfied by the corpus."""


@dataclass(frozen=True)
class ContextualInput:
    """Separator-joined model input plus its target snippet."""

    input_text: str
    target: str
    sample_id: str
    category: ContextCategory

    def to_record(self) -> dict:
        return {
            "input": self.input_text,
            "target": self.target,
            "sample_id": self.sample_id,
            "category": self.category.value,
        }


def build_contextual_input(sample: Sample, separator: str = DEFAULT_SEPARATOR) -> ContextualInput:
    """Join context intents and the current intent; current always last."""
    segments = list(sample.context_intents) + [sample.intent]
    return ContextualInput(
        input_text=f" {separator} ".join(segments),
        target=sample.snippet,
        sample_id=sample.id,
        category=sample.category,
    )


@dataclass(frozen=True)
class CategoryQuota:
    """Absolute counts (ints) or fractions (floats summing to 1) per set."""

    train: int | float
    dev: int | float
    test: int | float

    @property
    def is_fractional(self) -> bool:
        return any(isinstance(v, float) for v in (self.train, self.dev, self.test))

    def resolve(self, available: int) -> tuple[int, int, int]:
        """Materialize counts; fractional dev/test floor, train takes the rest."""
        if not self.is_fractional:
            return int(self.train), int(self.dev), int(self.test)
        if not all(isinstance(v, float) for v in (self.train, self.dev, self.test)):
            raise SplitError("quota mixes fractions and absolute counts")
        total = self.train + self.dev + self.test
        if abs(total - 1.0) > 1e-9:
            raise SplitError(f"fractional quotas must sum to 1, got {total}")
        dev = int(self.dev * available)
        test = int(self.test * available)
        return available - dev - test, dev, test


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative split recipe: per-category quotas plus a shuffle seed."""

    name: str
    quotas: Mapping[ContextCategory, CategoryQuota]
    seed: int
    absorb_train_shortfall: bool = False
    notes: tuple[str, ...] = ()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.name, self.quotas, seed, self.absorb_train_shortfall, self.notes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "absorb_train_shortfall": self.absorb_train_shortfall,
            "quotas": {
                cat.value: {"train": q.train, "dev": q.dev, "test": q.test}
                for cat, q in self.quotas.items()
            },
            "notes": list(self.notes),
        }

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        quotas = {}
        for key, q in data["quotas"].items():
            quotas[ContextCategory(key)] = CategoryQuota(q["train"], q["dev"], q["test"])
        return ExperimentConfig(
            name=data["name"],
            quotas=quotas,
            seed=int(data.get("seed", 0)),
            absorb_train_shortfall=bool(data.get("absorb_train_shortfall", False)),
            notes=tuple(data.get("notes", ())),
        )

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_preset(name: str) -> ExperimentConfig:
    """Load one of the five shipped experiment presets."""
    if name not in PRESET_NAMES:
        raise SplitError(f"unknown experiment preset {name!r}; expected one of {', '.join(PRESET_NAMES)}")
    return ExperimentConfig.from_file(_PRESET_DIR / f"{name}.json")


@dataclass(frozen=True)
class SplitDiscrepancy:
    """A requested quota the corpus could not honor exactly.

    ``train_shortfall``: requested/materialized are the train quota before
    and after shrinking.  ``unused_samples``: requested is the total drawn
    from the category, materialized the number available.
    """

    category: ContextCategory
    kind: str
    requested: int
    materialized: int

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "kind": self.kind,
            "requested": self.requested,
            "materialized": self.materialized,
        }


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[ContextualInput, ...]
    dev: tuple[ContextualInput, ...]
    test: tuple[ContextualInput, ...]
    config: ExperimentConfig
    separator: str = DEFAULT_SEPARATOR
    corpus_hash: str = ""
    discrepancies: tuple[SplitDiscrepancy, ...] = ()

    def counts_by_category(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for set_name, items in (("train", self.train), ("dev", self.dev), ("test", self.test)):
            for item in items:
                per_set = out.setdefault(item.category.value, {"train": 0, "dev": 0, "test": 0})
                per_set[set_name] += 1
        return out


def generate_splits(
    corpus: Corpus,
    config: ExperimentConfig,
    separator: str = DEFAULT_SEPARATOR,
) -> DatasetSplit:
    """Materialize train/dev/test sets from per-category quotas.

    Samples of each quota'd category are shuffled with a seed derived from
    (config seed, category) and assigned train-first.  Dev and test quotas
    are hard; a train quota exceeding what remains is an error unless the
    config absorbs the shortfall, in which case train shrinks and the
    discrepancy is recorded.  Leftover samples are recorded too.
    """
    groups: dict[ContextCategory, list[Sample]] = {cat: [] for cat in CATEGORY_ORDER}
    for sample in corpus.samples:
        groups[sample.category].append(sample)

    train: list[ContextualInput] = []
    dev: list[ContextualInput] = []
    test: list[ContextualInput] = []
    discrepancies: list[SplitDiscrepancy] = []

    for category in CATEGORY_ORDER:
        quota = config.quotas.get(category)
        if quota is None:
            continue
        pool = list(groups[category])
        available = len(pool)
        want_train, want_dev, want_test = quota.resolve(available)

        if want_dev + want_test > available:
            raise SplitError(
                f"category {category.value}: dev+test quota {want_dev + want_test} exceeds "
                f"{available} available samples (short by {want_dev + want_test - available})"
            )
        train_room = available - want_dev - want_test
        got_train = want_train
        if want_train > train_room:
            if not config.absorb_train_shortfall:
                raise SplitError(
                    f"category {category.value}: quota {want_train + want_dev + want_test} exceeds "
                    f"{available} available samples (short by {want_train - train_room})"
                )
            got_train = train_room
            discrepancies.append(
                SplitDiscrepancy(category, "train_shortfall", requested=want_train, materialized=got_train)
            )

        rng = Random(f"{config.seed}:{category.value}")
        rng.shuffle(pool)

        cursor = 0
        for bucket, size in ((train, got_train), (dev, want_dev), (test, want_test)):
            for sample in pool[cursor : cursor + size]:
                bucket.append(build_contextual_input(sample, separator))
            cursor += size
        if cursor < available:
            discrepancies.append(
                SplitDiscrepancy(category, "unused_samples", requested=cursor, materialized=available)
            )

    return DatasetSplit(
        train=tuple(train),
        dev=tuple(dev),
        test=tuple(test),
        config=config,
        separator=separator,
        corpus_hash=corpus_content_hash(corpus),
        discrepancies=tuple(discrepancies),
    )


SPLIT_MANIFEST_NAME = "split_manifest.json"


def split_manifest_dict(split: DatasetSplit) -> dict:
    return {
        "config": split.config.to_dict(),
        "separator": split.separator,
        "corpus_hash": split.corpus_hash,
        "counts": split.counts_by_category(),
        "totals": {"train": len(split.train), "dev": len(split.dev), "test": len(split.test)},
        "discrepancies": [d.to_dict() for d in split.discrepancies],
    }


def export_split(split: DatasetSplit, out_dir: str | Path) -> dict[str, Path]:
    """Write train/dev/test JSONL plus the split manifest; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for set_name, items in (("train", split.train), ("dev", split.dev), ("test", split.test)):
        path = out_dir / f"{set_name}.jsonl"
        try:
            with path.open("w", encoding="utf-8") as fh:
                for item in items:
                    fh.write(json.dumps(item.to_record(), ensure_ascii=False) + "\n")
        except OSError as exc:
            raise SplitError(f"cannot write split file {path}: {exc}") from exc
        paths[set_name] = path
    manifest_path = out_dir / SPLIT_MANIFEST_NAME
    manifest_path.write_text(
        json.dumps(split_manifest_dict(split), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    paths["manifest"] = manifest_path
    return paths


def load_split_file(path: str | Path) -> list[ContextualInput]:
    """Read one exported split file back into contextual inputs."""
    items: list[ContextualInput] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            record = json.loads(raw)
            try:
                items.append(
                    ContextualInput(
                        input_text=record["input"],
                        target=record["target"],
                        sample_id=record["sample_id"],
                        category=ContextCategory(record["category"]),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise SplitError(f"{path}: line {i}: bad split record: {exc}") from None
    return items
