"""Output-similarity metrics for generated snippets.

All four metrics are implemented from scratch and return values in [0, 1]:

* exact match: string equality, optionally after whitespace normalization;
* edit-distance similarity: 1 - Levenshtein(candidate, reference) / max(len);
* METEOR: exact-unigram alignment only (no stemming or synonymy, which are
  meaningless for assembly tokens), harmonic F-mean weighted by ``alpha``
  and a fragmentation penalty ``gamma * (chunks / matches) ** beta``;
* ROUGE-L: F-measure over the token-level longest common subsequence.

Corpus aggregation reports per-category and overall means scaled by 100;
rounding to two decimals happens only in the text renderer.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import CATEGORY_ORDER, ContextCategory


@dataclass(frozen=True)
class EvalPair:
    """A model prediction matched with its ground-truth snippet."""

    candidate: str
    reference: str
    sample_id: str
    category: ContextCategory


@dataclass(frozen=True)
class MetricConfig:
    meteor_alpha: float = 0.9
    meteor_gamma: float = 0.5
    meteor_beta: float = 3.0
    rouge_beta: float = 1.0
    em_whitespace_normalize: bool = True

    def to_dict(self) -> dict:
        return {
            "meteor_alpha": self.meteor_alpha,
            "meteor_gamma": self.meteor_gamma,
            "meteor_beta": self.meteor_beta,
            "rouge_beta": self.rouge_beta,
            "em_whitespace_normalize": self.em_whitespace_normalize,
            "meteor_matching": "exact-unigram only (no stemming or synonymy)",
        }


DEFAULT_METRIC_CONFIG = MetricConfig()


def _normalize_whitespace(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [" ".join(line.split()) for line in text.split("\n")]
    return "\n".join(lines).strip()


def exact_match(pair: EvalPair, cfg: MetricConfig = DEFAULT_METRIC_CONFIG) -> int:
    """1 iff the candidate equals the reference (modulo whitespace policy)."""
    cand, ref = pair.candidate, pair.reference
    if cfg.em_whitespace_normalize:
        cand, ref = _normalize_whitespace(cand), _normalize_whitespace(ref)
    return int(cand == ref)


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character edits turning ``a`` into ``b``."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            )
        previous = current
    return previous[len(b)]


def edit_distance_sim(pair: EvalPair) -> float:
    """1 - normalized character Levenshtein; 1.0 when both strings are empty."""
    cand, ref = pair.candidate, pair.reference
    longest = max(len(cand), len(ref))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(cand, ref) / longest


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l(pair: EvalPair, cfg: MetricConfig = DEFAULT_METRIC_CONFIG) -> float:
    """LCS F-measure over whitespace tokens (newlines are separators too)."""
    cand = pair.candidate.split()
    ref = pair.reference.split()
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    recall = lcs / len(ref)
    precision = lcs / len(cand)
    beta_sq = cfg.rouge_beta**2
    return (1 + beta_sq) * recall * precision / (recall + beta_sq * precision)


# Exact chunk minimization explores an exponential state space; beyond
# these bounds a deterministic longest-common-block decomposition is used.
_EXACT_REF_LIMIT = 12
_EXACT_CAND_LIMIT = 24


def _match_count(cand: Sequence[str], ref: Sequence[str]) -> int:
    cand_counts, ref_counts = Counter(cand), Counter(ref)
    return sum(min(n, ref_counts[token]) for token, n in cand_counts.items())


def _min_chunks_exact(cand: Sequence[str], ref: Sequence[str], m: int) -> int:
    """Fewest chunks over all maximum one-to-one unigram alignments."""
    common = set(cand) & set(ref)
    cand_pos = [i for i, t in enumerate(cand) if t in common]
    ref_pos = [j for j, t in enumerate(ref) if t in common]
    ref_index = {j: k for k, j in enumerate(ref_pos)}

    # Remaining matchable tokens from each candidate position onward.
    suffix_counts: list[Counter] = [Counter()] * (len(cand_pos) + 1)
    suffix_counts[len(cand_pos)] = Counter()
    for k in range(len(cand_pos) - 1, -1, -1):
        counts = Counter(suffix_counts[k + 1])
        counts[cand[cand_pos[k]]] += 1
        suffix_counts[k] = counts

    memo: dict[tuple[int, int, int], int] = {}
    INF = m + 1

    def capacity(k: int, used: int) -> int:
        remaining_ref = Counter()
        for j in ref_pos:
            if not used & (1 << ref_index[j]):
                remaining_ref[ref[j]] += 1
        suffix = suffix_counts[k]
        return sum(min(n, suffix[token]) for token, n in remaining_ref.items())

    def solve(k: int, used: int, prev_j: int) -> int:
        matched = bin(used).count("1")
        needed = m - matched
        if needed == 0:
            return 0
        if k == len(cand_pos) or capacity(k, used) < needed:
            return INF
        key = (k, used, prev_j)
        if key in memo:
            return memo[key]
        i = cand_pos[k]
        best = solve(k + 1, used, -2)  # skipping breaks any open run
        token = cand[i]
        run_open = k > 0 and prev_j >= 0 and cand_pos[k - 1] == i - 1
        for j in ref_pos:
            bit = 1 << ref_index[j]
            if used & bit or ref[j] != token:
                continue
            cost = 0 if run_open and j == prev_j + 1 else 1
            best = min(best, cost + solve(k + 1, used | bit, j))
        memo[key] = best
        return best

    return solve(0, 0, -2)


def _min_chunks_greedy(cand: Sequence[str], ref: Sequence[str]) -> int:
    """Longest-common-block decomposition; deterministic, near-optimal."""
    used_c = [False] * len(cand)
    used_r = [False] * len(ref)
    chunks = 0
    while True:
        best_len, best_i, best_j = 0, -1, -1
        for i in range(len(cand)):
            if used_c[i]:
                continue
            for j in range(len(ref)):
                if used_r[j] or ref[j] != cand[i]:
                    continue
                length = 0
                while (
                    i + length < len(cand)
                    and j + length < len(ref)
                    and not used_c[i + length]
                    and not used_r[j + length]
                    and cand[i + length] == ref[j + length]
                ):
                    length += 1
                if length > best_len:
                    best_len, best_i, best_j = length, i, j
        if best_len == 0:
            return chunks
        for k in range(best_len):
            used_c[best_i + k] = True
            used_r[best_j + k] = True
        chunks += 1


def _align(cand: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """Return (matches, chunks) of the chunk-minimizing maximum alignment."""
    m = _match_count(cand, ref)
    if m == 0:
        return 0, 0
    common = set(cand) & set(ref)
    n_ref = sum(1 for t in ref if t in common)
    n_cand = sum(1 for t in cand if t in common)
    if n_ref <= _EXACT_REF_LIMIT and n_cand <= _EXACT_CAND_LIMIT:
        return m, _min_chunks_exact(cand, ref, m)
    return m, _min_chunks_greedy(cand, ref)


def meteor(pair: EvalPair, cfg: MetricConfig = DEFAULT_METRIC_CONFIG) -> float:
    """Unigram-alignment score with fragmentation penalty; 0 when nothing matches."""
    cand = pair.candidate.split()
    ref = pair.reference.split()
    if not cand or not ref:
        return 0.0
    m, chunks = _align(cand, ref)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = precision * recall / (cfg.meteor_alpha * precision + (1 - cfg.meteor_alpha) * recall)
    penalty = cfg.meteor_gamma * (chunks / m) ** cfg.meteor_beta
    return fmean * (1 - penalty)


@dataclass(frozen=True)
class PairScores:
    sample_id: str
    category: ContextCategory
    em: float
    ed: float
    meteor: float
    rouge_l: float


@dataclass(frozen=True)
class AggregateScores:
    """Arithmetic means over pair scores, scaled by 100."""

    count: int
    em: float
    ed: float
    meteor: float
    rouge_l: float


@dataclass(frozen=True)
class MetricReport:
    per_sample: tuple[PairScores, ...] = ()
    overall: AggregateScores | None = None
    by_category: Mapping[ContextCategory, AggregateScores] = field(default_factory=dict)
    config: MetricConfig = DEFAULT_METRIC_CONFIG
    flags: tuple[str, ...] = ()


def _aggregate(scored: Sequence[PairScores]) -> AggregateScores:
    n = len(scored)
    return AggregateScores(
        count=n,
        em=100.0 * sum(s.em for s in scored) / n,
        ed=100.0 * sum(s.ed for s in scored) / n,
        meteor=100.0 * sum(s.meteor for s in scored) / n,
        rouge_l=100.0 * sum(s.rouge_l for s in scored) / n,
    )


def score_pair(pair: EvalPair, cfg: MetricConfig = DEFAULT_METRIC_CONFIG) -> PairScores:
    return PairScores(
        sample_id=pair.sample_id,
        category=pair.category,
        em=float(exact_match(pair, cfg)),
        ed=edit_distance_sim(pair),
        meteor=meteor(pair, cfg),
        rouge_l=rouge_l(pair, cfg),
    )


def evaluate_corpus(
    pairs: Iterable[EvalPair], cfg: MetricConfig = DEFAULT_METRIC_CONFIG
) -> MetricReport:
    """Score every pair and aggregate per category and overall."""
    scored = tuple(score_pair(pair, cfg) for pair in pairs)
    if not scored:
        return MetricReport(per_sample=(), overall=None, by_category={}, config=cfg, flags=("empty_pair_list",))
    by_category = {}
    for category in CATEGORY_ORDER:
        in_cat = [s for s in scored if s.category is category]
        if in_cat:
            by_category[category] = _aggregate(in_cat)
    return MetricReport(
        per_sample=scored,
        overall=_aggregate(scored),
        by_category=by_category,
        config=cfg,
    )


def report_to_dict(report: MetricReport) -> dict:
    def agg(a: AggregateScores) -> dict:
        return {"count": a.count, "em": a.em, "ed": a.ed, "meteor": a.meteor, "rouge_l": a.rouge_l}

    return {
        "config": report.config.to_dict(),
        "overall": agg(report.overall) if report.overall else None,
        "by_category": {cat.value: agg(a) for cat, a in report.by_category.items()},
        "per_sample": [
            {
                "sample_id": s.sample_id,
                "category": s.category.value,
                "em": s.em,
                "ed": s.ed,
                "meteor": s.meteor,
                "rouge_l": s.rouge_l,
            }
            for s in report.per_sample
        ],
        "flags": list(report.flags),
    }


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report_to_dict(report), ensure_ascii=False, indent=2)


def render_report_table(report_dict: dict) -> str:
    """Aligned text table in the column order EM | ED | METEOR | ROUGE-L."""
    header = f"{'Category':<14}{'Count':>7}{'EM':>9}{'ED':>9}{'METEOR':>9}{'ROUGE-L':>9}"
    lines = [header, "-" * len(header)]

    def row(label: str, agg: dict) -> str:
        return (
            f"{label:<14}{agg['count']:>7}"
            f"{agg['em']:>9.2f}{agg['ed']:>9.2f}{agg['meteor']:>9.2f}{agg['rouge_l']:>9.2f}"
        )

    for category in CATEGORY_ORDER:
        agg = report_dict["by_category"].get(category.value)
        if agg:
            lines.append(row(category.value, agg))
    if report_dict["overall"]:
        lines.append(row("all", report_dict["overall"]))
    else:
        lines.append(f"{'all':<14}{0:>7}" + "     --.-" * 4)
    for flag in report_dict.get("flags", []):
        lines.append(f"flag: {flag}")
    return "\n".join(lines)
