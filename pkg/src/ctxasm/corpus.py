"""Loading, validation, and indexing of the shellcode intent/snippet corpus.

The corpus is a JSONL file with one sample per line.  Each sample pairs a
natural-language intent with its target assembly snippet, records which
source program and line it came from, and carries the preceding intents it
was described with.  Context intents are stored denormalized on the sample
so unnecessary-context pairs (whose context is deliberately unrelated to
the preceding program line) survive a round trip through disk.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class ContextCategory(enum.Enum):
    """The five context flavors a sample can be described with."""

    NO_CONTEXT = "no_context"
    CTX_2TO1 = "ctx_2to1"
    CTX_3TO1 = "ctx_3to1"
    UNN_2TO1 = "unn_2to1"
    UNN_3TO1 = "unn_3to1"

    @property
    def context_arity(self) -> int:
        """Number of preceding intents a sample of this category carries."""
        return _CONTEXT_ARITY[self]


_CONTEXT_ARITY: dict[ContextCategory, int] = {
    ContextCategory.NO_CONTEXT: 0,
    ContextCategory.CTX_2TO1: 1,
    ContextCategory.UNN_2TO1: 1,
    ContextCategory.CTX_3TO1: 2,
    ContextCategory.UNN_3TO1: 2,
}

CATEGORY_ORDER: tuple[ContextCategory, ...] = (
    ContextCategory.NO_CONTEXT,
    ContextCategory.CTX_2TO1,
    ContextCategory.CTX_3TO1,
    ContextCategory.UNN_2TO1,
    ContextCategory.UNN_3TO1,
)


class CorpusError(Exception):
    """Base error for corpus ingestion problems."""


class CorpusParseError(CorpusError):
    """A line of the corpus file could not be parsed into a sample."""


class CorpusValidationError(CorpusError):
    """A parsed corpus violates a structural invariant."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(str(report))


@dataclass(frozen=True)
class Sample:
    """One intent/snippet pair with its program lineage and context."""

    id: str
    program_id: str
    line_no: int
    intent: str
    snippet: str
    category: ContextCategory
    context_intents: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "program_id": self.program_id,
            "line_no": self.line_no,
            "intent": self.intent,
            "snippet": self.snippet,
            "category": self.category.value,
            "context_intents": list(self.context_intents),
        }


@dataclass(frozen=True)
class Violation:
    """One broken invariant, attributed to a sample where possible."""

    rule: str
    sample_id: str | None
    detail: str

    def __str__(self) -> str:
        where = self.sample_id if self.sample_id is not None else "<corpus>"
        return f"{where}: {self.rule}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.is_valid:
            return "corpus valid"
        lines = [f"{len(self.violations)} invariant violation(s):"]
        lines.extend(f"  - {v}" for v in self.violations)
        return "\n".join(lines)


@dataclass(frozen=True)
class Corpus:
    """Immutable, ordered collection of samples indexed by source program."""

    samples: tuple[Sample, ...]
    programs: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}

    @staticmethod
    def from_samples(samples: Iterable[Sample]) -> "Corpus":
        """Index samples by program without validating invariants."""
        samples = tuple(samples)
        programs: dict[str, list[str]] = {}
        for s in samples:
            programs.setdefault(s.program_id, []).append(s.id)
        return Corpus(samples, {p: tuple(ids) for p, ids in programs.items()})


def build_corpus(samples: Iterable[Sample]) -> Corpus:
    """Construct a corpus and fail loudly if any invariant is broken."""
    corpus = Corpus.from_samples(samples)
    report = validate_corpus(corpus)
    if not report.is_valid:
        raise CorpusValidationError(report)
    return corpus


_REQUIRED_FIELDS = {
    "id": str,
    "program_id": str,
    "line_no": int,
    "intent": str,
    "snippet": str,
    "category": str,
    "context_intents": list,
}


def _parse_record(record: dict, line_no: int) -> Sample:
    for name, kind in _REQUIRED_FIELDS.items():
        if name not in record:
            raise CorpusParseError(f"line {line_no}: missing field {name!r}")
        value = record[name]
        bad_bool = kind is int and isinstance(value, bool)
        if bad_bool or not isinstance(value, kind):
            raise CorpusParseError(
                f"line {line_no}: field {name!r} must be {kind.__name__}, got {type(value).__name__}"
            )
    try:
        category = ContextCategory(record["category"])
    except ValueError:
        raise CorpusParseError(
            f"line {line_no}: unknown category {record['category']!r}"
        ) from None
    context = record["context_intents"]
    if not all(isinstance(c, str) for c in context):
        raise CorpusParseError(f"line {line_no}: context_intents must be strings")
    return Sample(
        id=record["id"],
        program_id=record["program_id"],
        line_no=record["line_no"],
        intent=record["intent"],
        snippet=record["snippet"],
        category=category,
        context_intents=tuple(context),
    )


def load_corpus(path: str | Path) -> Corpus:
    """Read a JSONL corpus file, enforcing all sample and corpus invariants.

    Parse failures name the offending line; invariant violations name the
    offending sample and rule.  Unknown extra keys on a record are ignored
    so processed corpora (which add a standardization dictionary) stay
    loadable.
    """
    path = Path(path)
    samples: list[Sample] = []
    with path.open("r", encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"line {i}: malformed JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise CorpusParseError(f"line {i}: expected a JSON object")
            samples.append(_parse_record(record, i))
    return build_corpus(samples)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the corpus in the canonical JSONL form used for hashing."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sample in corpus.samples:
            fh.write(json.dumps(sample.to_record(), ensure_ascii=False) + "\n")


def corpus_content_hash(corpus: Corpus) -> str:
    """SHA-256 over the canonical serialization; identical corpora agree."""
    digest = hashlib.sha256()
    for sample in corpus.samples:
        digest.update(json.dumps(sample.to_record(), ensure_ascii=False).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def category_histogram(corpus: Corpus) -> dict[ContextCategory, int]:
    """Per-category sample counts; always contains all five categories."""
    counts = {category: 0 for category in CATEGORY_ORDER}
    for sample in corpus.samples:
        counts[sample.category] += 1
    return counts


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check every corpus invariant; violations are data, not exceptions."""
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    seen_lines: set[tuple[str, int]] = set()
    last_line: dict[str, int] = {}

    for sample in corpus.samples:
        if sample.id in seen_ids:
            violations.append(Violation("duplicate_id", sample.id, "sample id occurs more than once"))
        seen_ids.add(sample.id)

        key = (sample.program_id, sample.line_no)
        if key in seen_lines:
            violations.append(
                Violation(
                    "duplicate_program_line",
                    sample.id,
                    f"(program_id, line_no)=({sample.program_id}, {sample.line_no}) occurs more than once",
                )
            )
        seen_lines.add(key)

        prev = last_line.get(sample.program_id)
        if prev is not None and sample.line_no <= prev:
            violations.append(
                Violation(
                    "line_no_not_increasing",
                    sample.id,
                    f"line_no {sample.line_no} does not increase past {prev} within program {sample.program_id}",
                )
            )
        last_line[sample.program_id] = sample.line_no

        expected = sample.category.context_arity
        if len(sample.context_intents) != expected:
            violations.append(
                Violation(
                    "context_arity",
                    sample.id,
                    f"category {sample.category.value} requires {expected} context intents, found {len(sample.context_intents)}",
                )
            )
        if not sample.intent.strip():
            violations.append(Violation("empty_intent", sample.id, "intent is empty after trimming"))
        if not sample.snippet.strip():
            violations.append(Violation("empty_snippet", sample.id, "snippet is empty after trimming"))

    return ValidationReport(tuple(violations))
