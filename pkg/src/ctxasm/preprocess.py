"""Intent/snippet preprocessing: stopword filtering, tokenization, and
standardization of volatile tokens into ``var#`` placeholders.

Standardization is regex-driven.  Four token classes are standardizable:
hexadecimal literals, standalone decimal integers, quoted string literals,
and identifiers that the paired snippet defines as a label (token followed
by ``:``).  Register names are never standardized.  Replacement happens on
token boundaries so ``22`` never corrupts ``0x22``, and the original
spacing of both texts is preserved so de-standardization is an exact
inverse.
"""

from __future__ import annotations

import enum
import json
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


class TextKind(enum.Enum):
    INTENT = "intent"
    SNIPPET = "snippet"


@dataclass(frozen=True)
class StopwordList:
    """Ordered, deduplicated, lowercase word list; matching is whole-token."""

    words: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_lookup", frozenset(self.words))

    def __contains__(self, token: str) -> bool:
        return token.lower() in self._lookup

    def __len__(self) -> int:
        return len(self.words)

    @staticmethod
    def from_words(words: Iterable[str]) -> "StopwordList":
        ordered: dict[str, None] = {}
        for word in words:
            word = word.strip().lower()
            if word:
                ordered[word] = None
        return StopwordList(tuple(ordered))

    @staticmethod
    def from_file(path: str | Path) -> "StopwordList":
        """Load one token per line; blank lines and ``#`` comments allowed."""
        words = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                words.append(line)
        return StopwordList.from_words(words)

    @staticmethod
    def empty() -> "StopwordList":
        return StopwordList(())


def default_stopwords() -> StopwordList:
    """The stopword list shipped with the package."""
    return StopwordList.from_file(Path(__file__).parent / "data" / "stopwords.txt")


def filter_stopwords(intent: str, stopwords: StopwordList) -> str:
    """Drop whole-word, case-insensitive stopword occurrences from an intent.

    Remaining tokens keep their order and are re-joined with single spaces.
    """
    return " ".join(tok for tok in intent.split() if tok not in stopwords)


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    source_kind: TextKind

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


# Underscore stays inside tokens: label names and the context separator
# token use it as an identifier character.
_PEEL_CHARS = frozenset(string.punctuation) - {"_"}
_SNIPPET_DELIMS = frozenset(",[]:")
_QUOTED_CHUNK_RE = re.compile(r"^(['\"]).*\1$", re.DOTALL)


def _is_quoted(chunk: str) -> bool:
    return len(chunk) >= 2 and bool(_QUOTED_CHUNK_RE.match(chunk))


def _split_intent_chunk(chunk: str) -> list[str]:
    lead: list[str] = []
    trail: list[str] = []
    # Peel the trailing end first so "'//sh'," sheds its comma before the
    # balanced-quote check can see the literal.
    while chunk and not _is_quoted(chunk):
        if chunk[-1] in _PEEL_CHARS:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        elif chunk[0] in _PEEL_CHARS:
            lead.append(chunk[0])
            chunk = chunk[1:]
        else:
            break
    middle = [chunk] if chunk else []
    return lead + middle + trail[::-1]


def _split_snippet_chunk(chunk: str) -> list[str]:
    out: list[str] = []
    buf = ""
    i = 0
    while i < len(chunk):
        ch = chunk[i]
        if ch in "'\"":
            end = chunk.find(ch, i + 1)
            if end != -1:
                if buf:
                    out.append(buf)
                    buf = ""
                out.append(chunk[i : end + 1])
                i = end + 1
                continue
        if ch in _SNIPPET_DELIMS:
            if buf:
                out.append(buf)
                buf = ""
            out.append(ch)
        else:
            buf += ch
        i += 1
    if buf:
        out.append(buf)
    return out


def tokenize(text: str, kind: TextKind) -> TokenStream:
    """Split text into tokens.

    Intent tokenization splits on whitespace and peels leading/trailing
    punctuation into separate tokens.  Snippet tokenization additionally
    splits the assembly delimiters ``, [ ] :`` into their own tokens.
    Quoted literals stay intact in both modes.  Nothing is lowercased.
    """
    tokens: list[str] = []
    split = _split_intent_chunk if kind is TextKind.INTENT else _split_snippet_chunk
    for chunk in text.split():
        tokens.extend(split(chunk))
    return TokenStream(tuple(tokens), kind)


@dataclass(frozen=True)
class StandardizationDict:
    """Ordered mapping from ``var#`` placeholders to the original tokens."""

    entries: tuple[tuple[str, str], ...] = ()

    @property
    def mapping(self) -> dict[str, str]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def to_json(self) -> str:
        return json.dumps(self.mapping, ensure_ascii=False)

    @staticmethod
    def from_json(text: str) -> "StandardizationDict":
        return StandardizationDict.from_mapping(json.loads(text))

    @staticmethod
    def from_mapping(mapping: dict[str, str]) -> "StandardizationDict":
        return StandardizationDict(tuple(mapping.items()))


@dataclass(frozen=True)
class StandardizeResult:
    intent: str
    snippet: str
    dictionary: StandardizationDict


@dataclass(frozen=True)
class DestandardizeResult:
    text: str
    unknown_placeholders: tuple[str, ...] = ()

    @property
    def has_warnings(self) -> bool:
        return bool(self.unknown_placeholders)


_HEX_RE = re.compile(r"^0x[0-9a-fA-F]+$")
_DEC_RE = re.compile(r"^[0-9]+$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
# Any var-prefixed token counts when scanning predictions, including the
# bare "var" a model may hallucinate in place of a concrete operand.
_VAR_TOKEN_RE = re.compile(r"(?<![A-Za-z0-9_])var\d*(?![A-Za-z0-9_])")


def _label_definitions(snippet: str) -> set[str]:
    toks = tokenize(snippet, TextKind.SNIPPET).tokens
    return {
        tok
        for tok, nxt in zip(toks, toks[1:])
        if nxt == ":" and _IDENT_RE.match(tok)
    }


def _is_standardizable(token: str, labels: set[str]) -> bool:
    return bool(
        _HEX_RE.match(token)
        or _DEC_RE.match(token)
        or _is_quoted(token)
        or token in labels
    )


def _token_boundary_pattern(token: str) -> re.Pattern[str]:
    return re.compile(r"(?<![A-Za-z0-9_])" + re.escape(token) + r"(?![A-Za-z0-9_])")


def standardize(intent: str, snippet: str) -> StandardizeResult:
    """Replace standardizable tokens with ``var#`` in both texts.

    Placeholders are assigned in first-occurrence order over the intent's
    tokens, and the same original maps to the same placeholder everywhere
    it occurs in the intent and the snippet.  Spacing of both texts is
    preserved exactly.
    """
    labels = _label_definitions(snippet)
    originals: dict[str, None] = {}
    for token in tokenize(intent, TextKind.INTENT):
        if _is_standardizable(token, labels):
            originals.setdefault(token, None)

    entries = tuple((f"var{i}", original) for i, original in enumerate(originals))
    out_intent, out_snippet = intent, snippet
    for placeholder, original in entries:
        pattern = _token_boundary_pattern(original)
        out_intent = pattern.sub(placeholder, out_intent)
        out_snippet = pattern.sub(placeholder, out_snippet)
    return StandardizeResult(out_intent, out_snippet, StandardizationDict(entries))


def destandardize(snippet: str, dictionary: StandardizationDict) -> DestandardizeResult:
    """Replace ``var#`` placeholders with their recorded originals.

    Placeholders with no dictionary entry (including a bare ``var``) are
    left verbatim and reported: they signal a hallucinated operand in a
    model prediction.
    """
    mapping = dictionary.mapping
    unknown: dict[str, None] = {}

    def _restore(match: re.Match[str]) -> str:
        token = match.group(0)
        if token in mapping:
            return mapping[token]
        unknown.setdefault(token, None)
        return token

    text = _VAR_TOKEN_RE.sub(_restore, snippet)
    return DestandardizeResult(text, tuple(unknown))
