"""Bridge command line: export embeddings, serve the scorer, fine-tune."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .export import export_embeddings
from .modeling import BridgeConfig
from .server import serve
from .training import finetune_ranker


def _config_from(args) -> BridgeConfig:
    return BridgeConfig(
        model_name=args.model,
        device=args.device,
        batch_size=args.batch_size,
        max_length=args.max_length,
        pooling=getattr(args, "pooling", "mean"),
        learning_rate=getattr(args, "lr", 1e-5),
        epochs=getattr(args, "epochs", 5),
        seed=getattr(args, "seed", 0),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnel-bridge",
        description="Encoder bridge: EMB1 export, scorer protocol server, fine-tuning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed a dictionary or texts file into EMB1")
    p.add_argument("--model", required=True, help="checkpoint id or local directory")
    p.add_argument("--dictionary", help="dictionary TSV (cui/name/lang/type)")
    p.add_argument("--texts", help="texts TSV (id<TAB>text)")
    p.add_argument("--out", required=True, help="output EMB1 path")
    p.add_argument("--pooling", choices=("mean", "cls"), default="mean")
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, dest="batch_size", default=16)
    p.add_argument("--max-length", type=int, dest="max_length", default=256)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve the scorer wire protocol on stdio")
    p.add_argument("--model", required=True, help="base checkpoint or fine-tuned directory")
    p.add_argument("--mode", choices=("CL", "LISTWISE"), default="CL")
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, dest="batch_size", default=16)
    p.add_argument("--max-length", type=int, dest="max_length", default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("finetune", help="fine-tune the ranking head on training pairs")
    p.add_argument("--model", required=True, help="base checkpoint or directory")
    p.add_argument("--pairs", required=True, help="training-pairs JSONL")
    p.add_argument("--mode", choices=("CL", "LISTWISE"), default="CL")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-5, help="7e-6 or 1e-5 in the usual grid")
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, dest="batch_size", default=16)
    p.add_argument("--max-length", type=int, dest="max_length", default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.set_defaults(func=cmd_finetune)

    return parser


def cmd_export(args) -> int:
    if (args.dictionary is None) == (args.texts is None):
        print("pass exactly one of --dictionary or --texts", file=sys.stderr)
        return 1
    config = _config_from(args)
    if args.dictionary:
        stats = export_embeddings(args.dictionary, args.out, config, kind="dictionary")
    else:
        stats = export_embeddings(args.texts, args.out, config, kind="texts")
    print(f"wrote {stats.rows} x {stats.dim} embeddings to {args.out} "
          f"({stats.truncated} truncated)", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    return serve(_config_from(args), args.mode)


def cmd_finetune(args) -> int:
    config = _config_from(args)
    training_log = finetune_ranker(args.pairs, config, args.out, mode=args.mode)
    if training_log.epoch_losses:
        print(f"trained {config.epochs} epoch(s); "
              f"final mean loss {training_log.epoch_losses[-1]:.4f}", file=sys.stderr)
    else:
        print("epochs=0: saved the initialized checkpoint unchanged", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    # Keep stdout clean for the protocol: all logging goes to stderr and
    # hub progress bars are disabled.
    os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")
    logging.basicConfig(
        stream=sys.stderr,
        level=os.environ.get("NNEL_BRIDGE_LOG", "WARNING").upper(),
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"nnel-bridge: error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
