"""Operator entry point: prepare, split, generate, evaluate, report.

Every command appends a stage entry to ``run_manifest.json`` in its output
directory.  Stage entries carry the parameters and artifact hashes needed
to reproduce the run; wall-clock timestamps live under a separate
``timestamps`` key so artifact comparisons can ignore them.

Exit codes: 0 success, 1 usage, 2 validation, 3 backend failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import context as ctx
from . import corpus as corpus_mod
from . import generation as gen
from . import metrics as metrics_mod
from . import preprocess as prep
from . import replica

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_BACKEND = 3

PROCESSED_CORPUS_NAME = "processed_corpus.jsonl"
AUDIT_LOG_NAME = "standardization_audit.jsonl"
RUN_MANIFEST_NAME = "run_manifest.json"


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _append_manifest(out_dir: Path, stage: str, payload: dict, artifacts: dict[str, Path]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RUN_MANIFEST_NAME
    if path.exists():
        doc = json.loads(path.read_text(encoding="utf-8"))
    else:
        doc = {"stages": [], "timestamps": []}
    doc["stages"].append(
        {
            "stage": stage,
            **payload,
            "artifacts": {name: _sha256_file(p) for name, p in sorted(artifacts.items())},
        }
    )
    doc["timestamps"].append(
        {"stage": stage, "completed_at": datetime.now(timezone.utc).isoformat()}
    )
    path.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _resolve_processed(path: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / PROCESSED_CORPUS_NAME
    if not p.exists():
        raise ValidationFailure(f"processed corpus not found at {p}")
    return p


@dataclass
class ProcessedCorpus:
    corpus: corpus_mod.Corpus
    dicts: dict[str, prep.StandardizationDict]


def load_processed_corpus(path: str | Path) -> ProcessedCorpus:
    """Read a prepare-stage output file: samples plus their dictionaries."""
    path = Path(path)
    corpus = corpus_mod.load_corpus(path)
    dicts: dict[str, prep.StandardizationDict] = {}
    with path.open("r", encoding="utf-8") as fh:
        for raw in fh:
            if not raw.strip():
                continue
            record = json.loads(raw)
            dicts[record["id"]] = prep.StandardizationDict.from_mapping(record.get("std_dict", {}))
    return ProcessedCorpus(corpus, dicts)


def _standardize_context_intent(intent: str) -> str:
    # Context intents are preprocessed independently of the current line;
    # their throwaway dictionaries restart at var0 per segment.
    return prep.standardize(intent, "").intent


def prepare_corpus(
    corpus: corpus_mod.Corpus, stopwords: prep.StopwordList
) -> tuple[corpus_mod.Corpus, dict[str, prep.StandardizationDict]]:
    """Filter stopwords and standardize every sample; returns the processed
    corpus and the per-sample dictionaries needed for de-standardization."""
    processed: list[corpus_mod.Sample] = []
    dicts: dict[str, prep.StandardizationDict] = {}
    for sample in corpus.samples:
        filtered = prep.filter_stopwords(sample.intent, stopwords)
        result = prep.standardize(filtered, sample.snippet)
        context = tuple(
            _standardize_context_intent(prep.filter_stopwords(c, stopwords))
            for c in sample.context_intents
        )
        processed.append(
            corpus_mod.Sample(
                id=sample.id,
                program_id=sample.program_id,
                line_no=sample.line_no,
                intent=result.intent,
                snippet=result.snippet,
                category=sample.category,
                context_intents=context,
            )
        )
        dicts[sample.id] = result.dictionary
    return corpus_mod.build_corpus(processed), dicts


def _print_histogram(corpus: corpus_mod.Corpus) -> None:
    histogram = corpus_mod.category_histogram(corpus)
    for category in corpus_mod.CATEGORY_ORDER:
        print(f"{category.value:<12} {histogram[category]:>6}")
    print(f"{'total':<12} {len(corpus):>6}")


def cmd_make_corpus(args) -> int:
    out = Path(args.out)
    corpus = replica.make_toy_corpus() if args.toy else replica.make_replica_corpus(args.seed)
    corpus_mod.save_corpus(corpus, out)
    print(f"wrote {len(corpus)} samples to {out}")
    _print_histogram(corpus)
    return EXIT_OK


def cmd_prepare(args) -> int:
    out_dir = Path(args.out)
    corpus = corpus_mod.load_corpus(args.corpus)
    stopwords = (
        prep.StopwordList.from_file(args.stopwords) if args.stopwords else prep.default_stopwords()
    )
    processed, dicts = prepare_corpus(corpus, stopwords)

    out_dir.mkdir(parents=True, exist_ok=True)
    processed_path = out_dir / PROCESSED_CORPUS_NAME
    with processed_path.open("w", encoding="utf-8") as fh:
        for sample in processed.samples:
            record = sample.to_record()
            record["std_dict"] = dicts[sample.id].mapping
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    audit_path = out_dir / AUDIT_LOG_NAME
    with audit_path.open("w", encoding="utf-8") as fh:
        for sample in processed.samples:
            fh.write(
                json.dumps(
                    {"sample_id": sample.id, "dict": dicts[sample.id].mapping},
                    ensure_ascii=False,
                )
                + "\n"
            )

    _append_manifest(
        out_dir,
        "prepare",
        {
            "corpus": Path(args.corpus).name,
            "stopwords": Path(args.stopwords).name if args.stopwords else "<default>",
            "raw_corpus_hash": corpus_mod.corpus_content_hash(corpus),
            "processed_corpus_hash": corpus_mod.corpus_content_hash(processed),
            "histogram": {
                c.value: n for c, n in corpus_mod.category_histogram(processed).items()
            },
        },
        {PROCESSED_CORPUS_NAME: processed_path, AUDIT_LOG_NAME: audit_path},
    )
    _print_histogram(processed)
    return EXIT_OK


def cmd_split(args) -> int:
    if args.experiment_config:
        config = ctx.ExperimentConfig.from_file(args.experiment_config)
    else:
        config = ctx.load_preset(args.experiment)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    separator = args.separator or ctx.DEFAULT_SEPARATOR

    processed_path = _resolve_processed(args.processed)
    corpus = corpus_mod.load_corpus(processed_path)
    split = ctx.generate_splits(corpus, config, separator=separator)
    out_dir = Path(args.out)
    paths = ctx.export_split(split, out_dir)

    _append_manifest(
        out_dir,
        "split",
        {
            "processed_corpus": processed_path.name,
            "processed_corpus_sha256": _sha256_file(processed_path),
            "experiment": config.name,
            "seed": config.seed,
            "separator": separator,
            "corpus_hash": split.corpus_hash,
            "counts": split.counts_by_category(),
            "discrepancies": [d.to_dict() for d in split.discrepancies],
        },
        {name: p for name, p in paths.items()},
    )
    for name in ("train", "dev", "test"):
        print(f"{name:<6} {len(getattr(split, name)):>6}")
    for d in split.discrepancies:
        print(f"discrepancy: {d.category.value} {d.kind}: requested {d.requested}, materialized {d.materialized}")
    return EXIT_OK


def _build_backend(args, split_path: Path) -> gen.Backend:
    if args.backend == "echo":
        return gen.EchoBackend()
    if args.backend == "retrieval":
        train_path = Path(args.retrieval_train) if args.retrieval_train else split_path.parent / "train.jsonl"
        if not train_path.exists():
            raise ValidationFailure(
                f"retrieval backend needs a training split; not found at {train_path}"
            )
        train_items = ctx.load_split_file(train_path)
        if not train_items:
            raise ValidationFailure(f"retrieval training split {train_path} is empty")
        return gen.RetrievalBackend(gen.build_retrieval_index(train_items))
    if args.backend == "remote":
        if not args.endpoint:
            raise UsageError("--backend remote requires --endpoint")
        gen.health_check(args.endpoint)
        return gen.RemoteBackend(args.endpoint, timeout=args.timeout, retries=args.retries)
    raise UsageError(f"unknown backend {args.backend!r}")


def _index_provenance(backend: gen.Backend, items) -> dict:
    """Sample-id overlap between the retrieval index and the evaluated split.

    Any overlap is deliberate only in memorization diagnostics; recording
    it in the manifest keeps such runs distinguishable from real ones.
    """
    if not isinstance(backend, gen.RetrievalBackend):
        return {}
    index_ids = set(backend.index.source_sample_ids)
    overlap = sorted(index_ids & {item.sample_id for item in items})
    return {
        "retrieval_index_size": len(backend.index),
        "retrieval_index_eval_overlap": len(overlap),
    }


def _batch_iter(backend: gen.Backend, items, args):
    inputs = [item.input_text for item in items]
    return gen.iter_generate_batches(
        backend,
        inputs,
        max_new_tokens=args.max_new_tokens,
        batch_size=args.batch_size,
        request_prefix=args.backend,
    )


def cmd_generate(args) -> int:
    split_path = Path(args.split)
    items = ctx.load_split_file(split_path)
    backend = _build_backend(args, split_path)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    predictions: list[str] = []
    for batch in _batch_iter(backend, items, args):
        predictions.extend(batch)
    with out_path.open("w", encoding="utf-8") as fh:
        for item, predicted in zip(items, predictions):
            fh.write(
                json.dumps(
                    {"sample_id": item.sample_id, "input": item.input_text, "prediction": predicted},
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(f"wrote {len(predictions)} predictions to {out_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    split_path = Path(args.split)
    items = ctx.load_split_file(split_path)
    manifest_path = split_path.parent / ctx.SPLIT_MANIFEST_NAME
    if not manifest_path.exists():
        raise ValidationFailure(f"split manifest not found at {manifest_path}")
    split_manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    processed_path = _resolve_processed(args.processed)
    processed = load_processed_corpus(processed_path)
    actual_hash = corpus_mod.corpus_content_hash(processed.corpus)
    if actual_hash != split_manifest.get("corpus_hash"):
        raise ValidationFailure(
            "refusing to evaluate: processed corpus hash "
            f"{actual_hash[:12]}… does not match the split manifest's "
            f"{str(split_manifest.get('corpus_hash'))[:12]}…"
        )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = _build_backend(args, split_path)

    predictions: list[str] = []
    try:
        for batch in _batch_iter(backend, items, args):
            predictions.extend(batch)
    except gen.BackendError as exc:
        _append_manifest(
            out_dir,
            "evaluate",
            {
                "split": split_path.name,
                "backend": args.backend,
                "aborted": str(exc),
                "completed_candidates": len(predictions),
            },
            {},
        )
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    pairs: list[metrics_mod.EvalPair] = []
    hallucinations = 0
    predictions_path = out_dir / "predictions.jsonl"
    with predictions_path.open("w", encoding="utf-8") as fh:
        for item, predicted in zip(items, predictions):
            sdict = processed.dicts.get(item.sample_id)
            if sdict is None:
                raise ValidationFailure(
                    f"split sample {item.sample_id} is absent from the processed corpus"
                )
            cand = prep.destandardize(predicted, sdict)
            ref = prep.destandardize(item.target, sdict)
            hallucinations += bool(cand.unknown_placeholders)
            pairs.append(
                metrics_mod.EvalPair(
                    candidate=cand.text,
                    reference=ref.text,
                    sample_id=item.sample_id,
                    category=item.category,
                )
            )
            fh.write(
                json.dumps(
                    {
                        "sample_id": item.sample_id,
                        "input": item.input_text,
                        "prediction": predicted,
                        "prediction_destandardized": cand.text,
                        "hallucinated_placeholders": list(cand.unknown_placeholders),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )

    cfg = metrics_mod.MetricConfig(em_whitespace_normalize=not args.no_em_normalize)
    report = metrics_mod.evaluate_corpus(pairs, cfg)
    report_dict = metrics_mod.report_to_dict(report)
    report_dict["backend"] = backend.name
    report_dict["split"] = split_path.name
    report_dict["split_sha256"] = _sha256_file(split_path)
    report_dict["hallucination_warnings"] = hallucinations

    report_json_path = out_dir / "report.json"
    report_json_path.write_text(
        json.dumps(report_dict, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    table = metrics_mod.render_report_table(report_dict)
    report_txt_path = out_dir / "report.txt"
    report_txt_path.write_text(table + "\n", encoding="utf-8")

    _append_manifest(
        out_dir,
        "evaluate",
        {
            "split": split_path.name,
            "split_sha256": _sha256_file(split_path),
            "backend": backend.name,
            "corpus_hash": actual_hash,
            "pairs": len(pairs),
            "hallucination_warnings": hallucinations,
            **_index_provenance(backend, items),
        },
        {
            "predictions.jsonl": predictions_path,
            "report.json": report_json_path,
            "report.txt": report_txt_path,
        },
    )
    print(table)
    return EXIT_OK


def cmd_report(args) -> int:
    report_dict = json.loads(Path(args.report).read_text(encoding="utf-8"))
    table = metrics_mod.render_report_table(report_dict)
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def _add_generate_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--backend", choices=("retrieval", "echo", "remote"), default=None)
    sub.add_argument("--endpoint", help="remote backend URL")
    sub.add_argument("--retrieval-train", help="training split for the retrieval index")
    sub.add_argument("--max-new-tokens", type=int, default=128)
    sub.add_argument("--batch-size", type=int, default=gen.DEFAULT_BATCH_SIZE)
    sub.add_argument("--timeout", type=float, default=30.0)
    sub.add_argument("--retries", type=int, default=2)


def build_parser() -> _Parser:
    parser = _Parser(prog="ctxasm", description=__doc__)
    parser.add_argument("--config", help="JSON file with default values for flags; flags win")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("make-corpus", help="write the replicated (or toy) corpus")
    sub.add_argument("--out", required=True)
    sub.add_argument("--seed", type=int, default=replica.DEFAULT_REPLICA_SEED)
    sub.add_argument("--toy", action="store_true", help="write the 20-sample toy corpus")
    sub.set_defaults(func=cmd_make_corpus)

    sub = commands.add_parser("prepare", help="filter stopwords and standardize a corpus")
    sub.add_argument("--corpus", default=None)
    sub.add_argument("--stopwords", default=None)
    sub.add_argument("--out", default=None)
    sub.set_defaults(func=cmd_prepare, _required=("corpus", "out"))

    sub = commands.add_parser("split", help="materialize an experimental split")
    sub.add_argument("--processed", default=None, help="processed corpus file or prepare out dir")
    sub.add_argument("--experiment", choices=ctx.PRESET_NAMES, default=None)
    sub.add_argument("--experiment-config", default=None, help="custom experiment config JSON")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--separator", default=None, help=f"default: {ctx.DEFAULT_SEPARATOR}")
    sub.add_argument("--out", default=None)
    sub.set_defaults(func=cmd_split, _required=("processed", "out"))

    sub = commands.add_parser("generate", help="produce candidate snippets for a split")
    sub.add_argument("--split", default=None)
    sub.add_argument("--out", default=None)
    _add_generate_flags(sub)
    sub.set_defaults(func=cmd_generate, _required=("split", "out", "backend"))

    sub = commands.add_parser("evaluate", help="generate, de-standardize, and score a split")
    sub.add_argument("--split", default=None)
    sub.add_argument("--processed", default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--no-em-normalize", action="store_true")
    _add_generate_flags(sub)
    sub.set_defaults(func=cmd_evaluate, _required=("split", "processed", "out", "backend"))

    sub = commands.add_parser("report", help="render a report.json as an aligned table")
    sub.add_argument("--report", default=None)
    sub.add_argument("--out", default=None)
    sub.set_defaults(func=cmd_report, _required=("report",))

    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(overrides, dict):
        raise UsageError("--config file must hold a JSON object")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) in (None, False):
            setattr(args, attr, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        for name in getattr(args, "_required", ()):
            if getattr(args, name) is None:
                raise UsageError(f"--{name.replace('_', '-')} is required")
        if args.func is cmd_split and not args.experiment and not args.experiment_config:
            raise UsageError("split needs --experiment or --experiment-config")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationFailure, corpus_mod.CorpusError, ctx.SplitError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except gen.BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


def entrypoint() -> None:
    sys.exit(main())
