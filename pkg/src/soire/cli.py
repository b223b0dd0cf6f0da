"""Command-line interface: gen, match, train, interpret, eval, pipeline.

All outputs land under --out.  Runs are deterministic for a fixed seed in
single-threaded execution; the pipeline sweep writes one results.csv row
per (noise level, learning rate) plus an accuracy figure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .core import Alphabet, Soire, SoireError, parse_infix, parse_prefix, to_infix
from .datagen import Dataset, load_dataset, make_dataset, save_dataset
from .diffnet import TrainConfig, train
from .encoding import load_checkpoint, required_bound, save_checkpoint
from .interpreter import interpret
from .matcher import match_batch
from .metrics import accuracy, evaluate
from .report import format_float, render_accuracy_figure, write_results_csv

DEFAULT_LEARNING_RATES = (0.01, 0.05, 0.1, 0.15, 0.2)
DEFAULT_DELTAS = (0.0, 0.05, 0.1, 0.15, 0.2)


def parse_regex_arg(text: str, sigma: Alphabet, syntax: str = "auto") -> Soire:
    """Parse --regex input in prefix or infix notation."""
    if syntax == "prefix":
        return parse_prefix(text, sigma)
    if syntax == "infix":
        return parse_infix(text, sigma)
    try:
        return parse_prefix(text, sigma)
    except SoireError:
        return parse_infix(text, sigma)


def _regex_symbols(text: str) -> str:
    return "".join(sorted({c for c in text if c.isalpha()}))


def _resolve_target(args) -> tuple[Soire, Alphabet, str]:
    """The ground-truth expression, alphabet and dataset id for gen/pipeline."""
    if getattr(args, "fixture", None) is not None:
        sigma = Alphabet(args.alphabet) if args.alphabet else None
        r = fixtures.fixture(args.fixture, sigma)
        return r, r.alphabet, str(args.fixture)
    if not args.regex:
        raise SoireError("pass --regex or --fixture")
    sigma = Alphabet(args.alphabet if args.alphabet else "abcdefghij")
    r = parse_regex_arg(args.regex, sigma, args.syntax)
    return r, sigma, "custom"


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _cmd_gen(args) -> int:
    r, sigma, _ = _resolve_target(args)
    train_ds, val_ds, test_ds = make_dataset(
        r, sigma=sigma, train_size=args.train_size, val_size=args.val_size,
        test_size=args.test_size, delta=args.delta, seed=args.seed,
        max_len=args.max_len,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(train_ds, out / "train.txt")
    save_dataset(val_ds, out / "validation.txt")
    save_dataset(test_ds, out / "test.txt")
    print(f"wrote {len(train_ds)}+{len(val_ds)}+{len(test_ds)} records to {out}")
    return 0


def _cmd_match(args) -> int:
    symbols = args.alphabet if args.alphabet else _regex_symbols(args.regex)
    if not symbols:
        raise SoireError(f"regex {args.regex!r} contains no alphabet symbols")
    sigma = Alphabet(symbols)
    r = parse_regex_arg(args.regex, sigma, args.syntax)
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    for result in match_batch(r, lines):
        print(1 if result else 0)
    return 0


def _cmd_train(args) -> int:
    train_ds = load_dataset(args.train, "train")
    val_ds = load_dataset(args.val, "validation")
    T = args.T if args.T else required_bound(train_ds.alphabet)
    config = TrainConfig(
        T=T, learning_rate=args.lr, batch_size=args.batch_size,
        reg_lambda=getattr(args, "lambda"), epochs=args.epochs, seed=args.seed,
        eval_threshold=args.threshold, max_len=args.max_len,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(train_ds, val_ds, config, log_path=out / "training_log.csv",
                   time_limit=args.time_limit)
    save_checkpoint(result.encoding, out / "checkpoint.txt")
    print(f"best validation accuracy {result.best_val_accuracy:.4f} "
          f"at epoch {result.best_epoch}; checkpoint in {out}")
    return 0


def _cmd_interpret(args) -> int:
    theta = load_checkpoint(args.checkpoint)
    train_ds = load_dataset(args.train, "train")
    result = interpret(train_ds, theta, beta=args.beam)
    prefix = result.soire.prefix
    print(f"infix: {to_infix(prefix)}")
    print(f"prefix: {prefix}")
    print(f"train accuracy: {result.train_accuracy:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "soire.txt").write_text(prefix + "\n", encoding="utf-8")
    return 0


def _read_regex_argument(args, sigma: Alphabet) -> Soire:
    if args.regex_file:
        text = Path(args.regex_file).read_text(encoding="utf-8").strip()
        return parse_regex_arg(text, sigma, args.syntax)
    if args.regex:
        return parse_regex_arg(args.regex, sigma, args.syntax)
    raise SoireError("pass --regex or --regex-file")


def _cmd_eval(args) -> int:
    theta = load_checkpoint(args.checkpoint)
    test_ds = load_dataset(args.test, "test")
    r = _read_regex_argument(args, theta.alphabet)
    report = evaluate(r, theta, test_ds, threshold=args.threshold)
    row = ",".join([
        args.dataset_id,
        format_float(args.delta),
        format_float(report.accuracy),
        format_float(report.network_accuracy),
        format_float(report.faithfulness),
    ])
    header = "dataset,delta,soire_accuracy,network_accuracy,faithfulness"
    if args.out:
        Path(args.out).write_text(header + "\n" + row + "\n", encoding="utf-8")
    print(header)
    print(row)
    return 0


def _cmd_pipeline(args) -> int:
    r, sigma, dataset_id = _resolve_target(args)
    T = args.T if args.T else required_bound(sigma)
    deltas = [float(x) for x in args.deltas.split(",") if x != ""]
    lrs = [float(x) for x in args.lrs.split(",") if x != ""]
    if not lrs:
        raise SoireError("empty learning-rate list")
    if not deltas:
        raise SoireError("empty delta list")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    for d_idx, delta in enumerate(deltas):
        data_dir = out / "data" / f"delta_{delta:.2f}"
        data_dir.mkdir(parents=True, exist_ok=True)
        train_ds, val_ds, test_ds = make_dataset(
            r, sigma=sigma, train_size=args.train_size, val_size=args.val_size,
            test_size=args.test_size, delta=delta,
            seed=_derived_seed(args.seed, d_idx), max_len=args.max_len,
        )
        save_dataset(train_ds, data_dir / "train.txt")
        save_dataset(val_ds, data_dir / "validation.txt")
        save_dataset(test_ds, data_dir / "test.txt")
        delta_rows: list[dict] = []
        for l_idx, lr in enumerate(lrs):
            run_dir = out / "runs" / f"delta_{delta:.2f}" / f"lr_{lr:.4f}"
            run_dir.mkdir(parents=True, exist_ok=True)
            row = {
                "dataset": dataset_id,
                "delta": delta,
                "learning_rate": lr,
                "selected": 0,
                "val_accuracy": "",
                "test_accuracy": "",
                "network_accuracy": "",
                "faithfulness": "",
                "soire_prefix": "",
                "soire_infix": "",
            }
            try:
                config = TrainConfig(
                    T=T, learning_rate=lr, batch_size=args.batch_size,
                    reg_lambda=getattr(args, "lambda"), epochs=args.epochs,
                    seed=_derived_seed(args.seed, d_idx, l_idx),
                    eval_threshold=args.threshold, max_len=args.max_len,
                )
                result = train(train_ds, val_ds, config,
                               log_path=run_dir / "training_log.csv",
                               time_limit=args.time_limit)
                theta = result.encoding
                save_checkpoint(theta, run_dir / "checkpoint.txt")
                interp = interpret(train_ds, theta, beta=args.beam)
                (run_dir / "soire.txt").write_text(interp.soire.prefix + "\n",
                                                   encoding="utf-8")
                report = evaluate(interp.soire, theta, test_ds,
                                  threshold=args.threshold)
                row.update({
                    "val_accuracy": accuracy(interp.soire, val_ds),
                    "test_accuracy": report.accuracy,
                    "network_accuracy": report.network_accuracy,
                    "faithfulness": report.faithfulness,
                    "soire_prefix": interp.soire.prefix,
                    "soire_infix": interp.soire.infix,
                })
            except SoireError as exc:
                print(f"run delta={delta} lr={lr} failed: {exc}", file=sys.stderr)
            delta_rows.append(row)
        scored = [row for row in delta_rows if row["val_accuracy"] != ""]
        if scored:
            best = max(scored, key=lambda row: (row["val_accuracy"], -row["learning_rate"]))
            best["selected"] = 1
        rows.extend(delta_rows)
    write_results_csv(rows, out / "results.csv")
    if args.plot:
        render_accuracy_figure(
            [{k: str(v) for k, v in row.items()} for row in rows],
            out / "accuracy_vs_delta.png",
        )
    print(f"wrote {out / 'results.csv'}")
    return 0


def _add_regex_options(p, with_fixture=False):
    p.add_argument("--regex", help="expression in prefix or infix notation")
    p.add_argument("--syntax", choices=("auto", "prefix", "infix"), default="auto")
    p.add_argument("--alphabet", help="alphabet symbols (default: see the subcommand)")
    if with_fixture:
        p.add_argument("--fixture", type=int,
                       help="ground-truth number 1..30 instead of --regex")


def _add_dataset_sizes(p):
    p.add_argument("--train-size", type=int, default=250,
                   help="positives (= negatives) in the training split")
    p.add_argument("--val-size", type=int, default=50)
    p.add_argument("--test-size", type=int, default=250)
    p.add_argument("--max-len", type=int, default=20)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soire",
        description="Learn single-occurrence regular expressions with "
                    "interleaving from noisy labeled strings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled dataset from an expression")
    _add_regex_options(p, with_fixture=True)
    _add_dataset_sizes(p)
    p.add_argument("--delta", type=float, default=0.0, help="label-flip rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("match", help="match strings from a file, one per line")
    _add_regex_options(p)
    p.add_argument("--input", required=True)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("train", help="train the matching network on a dataset")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--T", type=int, help="bounded size (default 4|alphabet|-2)")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", type=float, default=0.0,
                   help="faithfulness regularization coefficient")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--time-limit", type=float, default=5000.0,
                   help="wall-clock cap in seconds for the training loop")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("interpret", help="decode a checkpoint into a SOIRE")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", required=True, help="training dataset for ranking")
    p.add_argument("--beam", type=int, default=500)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_interpret)

    p = sub.add_parser("eval", help="evaluate a SOIRE and its network on a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--regex", help="the interpreted expression")
    p.add_argument("--regex-file", help="file holding the expression (soire.txt)")
    p.add_argument("--syntax", choices=("auto", "prefix", "infix"), default="auto")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--dataset-id", default="custom")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="gen + train + interpret + eval sweep")
    _add_regex_options(p, with_fixture=True)
    _add_dataset_sizes(p)
    p.add_argument("--deltas", default=",".join(str(d) for d in DEFAULT_DELTAS))
    p.add_argument("--lrs", default=",".join(str(lr) for lr in DEFAULT_LEARNING_RATES))
    p.add_argument("--T", type=int)
    p.add_argument("--beam", type=int, default=500)
    p.add_argument("--lambda", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--time-limit", type=float, default=5000.0)
    plot = p.add_mutually_exclusive_group()
    plot.add_argument("--plot", dest="plot", action="store_true", default=True)
    plot.add_argument("--no-plot", dest="plot", action="store_false")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SoireError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
