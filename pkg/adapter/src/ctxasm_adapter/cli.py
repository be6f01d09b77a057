"""Adapter CLI: ``adapter finetune`` and ``adapter serve``."""

from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig
from .models import AdapterError, load_model
from .server import serve
from .training import finetune


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapter", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("finetune", help="fine-tune a model on split files")
    sub.add_argument("--train", required=True, help="training split JSONL")
    sub.add_argument("--dev", required=True, help="validation split JSONL")
    sub.add_argument("--out", required=True, help="checkpoint directory to write")
    sub.add_argument("--base-model", default="tiny", help="'tiny' or a local HF checkpoint")
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--lr", type=float, default=0.00005)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--beam-size", type=int, default=10)
    sub.add_argument("--seed", type=int, default=7)
    sub.add_argument("--device", default="cpu")
    sub.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")

    sub = commands.add_parser("serve", help="serve a checkpoint over the wire protocol")
    sub.add_argument("--model", required=True, help="checkpoint directory or 'identity'")
    sub.add_argument("--port", type=int, required=True)
    sub.add_argument("--host", default="127.0.0.1")
    sub.add_argument("--separator", default="_BREAK")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "finetune":
            cfg = AdapterConfig(
                base_model=args.base_model,
                learning_rate=args.lr,
                batch_size=args.batch_size,
                beam_size=args.beam_size,
                seed=args.seed,
                device=args.device,
            )
            out = finetune(
                args.train, args.dev, cfg, args.out, epochs=args.epochs, resume=args.resume
            )
            print(f"checkpoint written to {out}")
            return 0
        if args.command == "serve":
            model = load_model(args.model, separator=args.separator)
            print(f"serving {model.name} on {args.host}:{args.port}")
            serve(model, host=args.host, port=args.port)
            return 0
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())
