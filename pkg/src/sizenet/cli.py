"""Command-line entry point: ``sizenet simulate|label|train|evaluate|explain|pipeline``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import pipeline
from .config import load_config
from .errors import SizeNetError


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="config file (flat key = value with [section] headers)")
    parser.add_argument("--seed", type=int, help="global seed; overrides [pipeline] seed")
    parser.add_argument("--out", metavar="DIR", help="output directory; overrides [paths] out")
    parser.add_argument("--no-weights", action="store_true", help="train without teacher weights in the loss")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sizenet",
        description="Teacher labels from sales and returns, an image student, and its evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate sales, returns, ground truth and images"),
        ("label", "compute teacher labels, scores and weights"),
        ("train", "split articles and train the student"),
        ("evaluate", "score the student on the test split"),
        ("explain", "RISE saliency maps for selected articles"),
        ("pipeline", "run every stage in order"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        if name in ("explain", "pipeline"):
            p.add_argument("--ids", help="comma-separated article ids to explain")
            p.add_argument("--top-tp", type=int, metavar="K", help="explain the K highest-scoring true positives")
    return parser


def _print_simulate(s):
    print(
        f"articles: {s['articles']}  sales: {s['sales']}  returns: {s['returns']} "
        f"(size_issue: {s['size_returns']})  cold-start articles: {s['coldstart_articles']}"
    )


def _print_label(s):
    print(f"window: {s['window'][0]}-{s['window'][1]}")
    print(f"size issue: {s['size_issue']} / no size issue: {s['no_size_issue']}")


def _print_train(s):
    print(f"split: train {s['train']} / validation {s['validation']} / test {s['test']}")
    print(
        f"epochs: {s['epochs']}  use_weights: {str(s['use_weights']).lower()}  "
        f"train loss: {s['final_train_loss']:.4f}  val loss: {s['final_val_loss']:.4f}"
    )


def _print_evaluate(s):
    for line in s["report"].summary_lines():
        print(line)


def _print_explain(s):
    for art, kind, y_hat, loc, chance in s["explained"]:
        extra = "" if loc is None else f"  localization: {loc:.3f} (chance {chance:.3f})"
        print(f"{art} [{kind}] y_hat: {y_hat:.4f}{extra}")


def run(args) -> None:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    if args.no_weights:
        cfg = replace(cfg, train=replace(cfg.train, use_weights=False))
    ids = [a for a in args.ids.split(",") if a] if getattr(args, "ids", None) else None
    top_tp = getattr(args, "top_tp", None)

    if args.command == "pipeline":
        (cfg.out / "explain" / "explain.csv").unlink(missing_ok=True)
        _print_simulate(pipeline.run_simulate(cfg))
        _print_label(pipeline.run_label(cfg))
        _print_train(pipeline.run_train(cfg))
        _print_evaluate(pipeline.run_evaluate(cfg))
        _print_explain(pipeline.run_explain(cfg, ids, top_tp))
    elif args.command == "simulate":
        _print_simulate(pipeline.run_simulate(cfg))
    elif args.command == "label":
        _print_label(pipeline.run_label(cfg))
    elif args.command == "train":
        _print_train(pipeline.run_train(cfg))
    elif args.command == "evaluate":
        _print_evaluate(pipeline.run_evaluate(cfg))
    elif args.command == "explain":
        _print_explain(pipeline.run_explain(cfg, ids, top_tp))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run(args)
    except (SizeNetError, OSError) as exc:
        kind = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"error: {args.command}: {kind}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
