"""Command-line entry point: ``seqrec <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
Every command takes ``--seed`` and ``--out``; with ``--out`` the outputs and
a ``<command>.invocation.json`` record are written there, otherwise the main
JSON result goes to stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .dataset import (
    DEFAULT_MODE, DEFAULT_TRIM_Q, DataError, SplitSpec, compute_stats, load_corpus, parse_matches,
    plot_csv, plot_data, preprocess, read_heroes, read_items, save_corpus, split_chronological,
    validate_split_representativeness, write_heroes, write_items, write_matches,
)
from .dataset.io import HEROES_FILE, ITEMS_FILE, MATCHES_FILE
from .dataset.stats import SERIES
from .evaluation import EvalConfig, compare_reports, evaluate, load_report, save_report
from .models import load_checkpoint
from .training import TrainConfig, TrainingDiverged

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
SPLIT_FILES = {"train": "train.jsonl", "val": "val.jsonl", "test": "test.jsonl"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


@dataclass
class CommandResult:
    exit_code: int = EXIT_OK
    artifacts: list = field(default_factory=list)
    summary: str = ""


class _Out:
    """Collects artifacts written under ``--out`` (or nothing, for stdout mode)."""

    def __init__(self, out):
        self.dir = None if out is None else Path(out)
        self.paths = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        p = self.dir / name
        self.paths.append(str(p))
        return p

    def text(self, name, text):
        self.path(name).write_text(text, encoding="utf-8")

    def json(self, name, obj):
        self.text(name, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _emit_json(out: _Out, name, obj):
    if out.dir is None:
        sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")
    else:
        out.json(name, obj)


# -- data helpers ----------------------------------------------------------------

def _load_split(data_dir, which):
    d = Path(data_dir)
    name = SPLIT_FILES[which]
    if not (d / name).exists():
        raise DataError(f"{d / name} not found; run `split` first")
    ds, _ = load_corpus(d, matches_file=name)
    return ds


def _preprocess_args(p):
    p.add_argument("--mode", default=DEFAULT_MODE, help="game mode kept by preprocessing")
    p.add_argument("--trim-q", type=float, default=DEFAULT_TRIM_Q, help="duration trim per tail")


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, max_epochs=args.max_epochs, patience=args.patience,
                       batch_size=args.batch_size, warmup_steps=args.warmup, mask_prob=args.mask_prob,
                       max_len=args.max_len, coverage=args.coverage, seed=args.seed)


def _train_args(p):
    d = TrainConfig()
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--max-epochs", type=int, default=d.max_epochs)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--warmup", type=int, default=d.warmup_steps)
    p.add_argument("--mask-prob", type=float, default=d.mask_prob)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--coverage", type=float, default=d.coverage)


# flag -> (config key, kinds accepting it)
MODEL_FLAGS = {
    "emb": ("emb_size", ("gru", "narm")),
    "cell": ("cell_size", ("gru",)),
    "enc": ("enc_size", ("narm",)),
    "hidden": ("hidden_size", ("mlp",)),
    "heads": ("heads", ("sasrec", "bert4rec")),
    "head_size": ("head_size", ("sasrec", "bert4rec")),
    "layers": ("n_layers", ("mlp", "gru", "narm", "sasrec", "bert4rec")),
    "dropout": ("dropout", ("gru", "sasrec", "bert4rec")),
    "ctx_dropout": ("ctx_dropout", ("narm",)),
    "emb_dropout": ("emb_dropout", ("narm",)),
    "activation": ("activation", ("sasrec", "bert4rec")),
}


def _model_config(args) -> dict:
    from .hpo import BEST_CONFIGS

    config = dict(BEST_CONFIGS[args.preset].get(args.model, {}))
    for flag, (key, kinds) in MODEL_FLAGS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if args.model not in kinds:
            raise UsageError(f"--{flag.replace('_', '-')} does not apply to model {args.model}")
        config[key] = value
    return config


# -- commands --------------------------------------------------------------------

def cmd_ingest(args, out):
    vocab, heroes = read_items(args.items), read_heroes(args.heroes)
    with open(args.matches, encoding="utf-8") as fh:
        ds, skipped = parse_matches(fh, vocab, heroes, strict=not args.lenient)
    report = {
        "matches": len(ds.matches),
        "invalid_matches": sum(1 for m in ds.matches if not m.valid),
        "skipped_lines": [{"line": e.line_no, "message": e.message} for e in skipped],
        "issues": [{"match_id": m.match_id, "issues": list(m.issues)} for m in ds.matches if m.issues],
    }
    if out.dir is not None:
        save_corpus(out.dir, ds)
        out.paths += [str(out.dir / f) for f in (MATCHES_FILE, ITEMS_FILE, HEROES_FILE)]
    _emit_json(out, "ingest_report.json", report)
    return f"ingested {len(ds.matches)} matches, skipped {len(skipped)} lines"


def cmd_stats(args, out):
    ds, _ = load_corpus(args.data)
    counts = []
    processed = preprocess(ds, args.mode, args.trim_q, report=counts)
    obj = {"raw": compute_stats(ds).to_json(), "processed": compute_stats(processed).to_json(),
           "filter_counts": asdict(counts[0]) if counts else None}
    _emit_json(out, "stats.json", obj)
    return f"{len(ds.matches)} matches before filtering, {len(processed.matches)} after"


def cmd_split(args, out):
    if out.dir is None:
        raise UsageError("split needs --out")
    ds, _ = load_corpus(args.data)
    counts = []
    processed = preprocess(ds, args.mode, args.trim_q, report=counts)
    spec = SplitSpec(args.train, args.val, args.test)
    parts = split_chronological(processed, spec)
    write_items(out.path(ITEMS_FILE), ds.vocab)
    write_heroes(out.path(HEROES_FILE), ds.heroes)
    report = {"fractions": [args.train, args.val, args.test],
              "filter_counts": asdict(counts[0]) if counts else None, "splits": {}}
    for (name, fname), part in zip(SPLIT_FILES.items(), parts):
        with open(out.path(fname), "w", encoding="utf-8") as fh:
            write_matches(fh, part)
        rep = validate_split_representativeness(processed, part)
        report["splits"][name] = {
            "matches": len(part.matches),
            "sessions": part.n_sessions,
            "first_start_time": part.matches[0].start_time,
            "last_start_time": part.matches[-1].start_time,
            "first_match_id": part.matches[0].match_id,
            "last_match_id": part.matches[-1].match_id,
            "representativeness": asdict(rep),
        }
    out.json("split_report.json", report)
    sizes = "/".join(str(len(p.matches)) for p in parts)
    return f"split {len(processed.matches)} matches into {sizes}"


def cmd_synth(args, out):
    from .synth import SynthSpec, generate, save_synth

    if out.dir is None:
        raise UsageError("synth needs --out")
    spec = SynthSpec(n_matches=args.matches, n_items=args.items, n_heroes=args.heroes,
                     transition_sharpness=args.sharpness, consumable_rate=args.consumable_rate,
                     mean_ls=args.mean_ls, std_ls=args.std_ls, seed=args.seed,
                     shared_weight=args.shared_weight, second_order_weight=args.second_order,
                     game_mode=args.mode)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds, oracle = generate(spec)
    save_synth(out.dir, spec, ds, oracle)
    out.paths += [str(out.dir / f) for f in (MATCHES_FILE, ITEMS_FILE, HEROES_FILE, "oracle.json",
                                             "synth_meta.json")]
    return f"generated {len(ds.matches)} matches over {args.items} items"


def cmd_train(args, out):
    from .training import train

    config = _model_config(args)
    cfg = _train_config(args)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tr, va = _load_split(args.data, "train"), _load_split(args.data, "val")
    try:
        ranker, manifest = train(args.model, config, tr, va, cfg, out.dir)
    except TrainingDiverged as exc:
        if out.dir is not None:
            exc.manifest.save(out.path(f"{args.model}.manifest.json"))
        raise
    if out.dir is not None:
        out.paths += [manifest.checkpoint, str(out.dir / f"{args.model}.manifest.json")]
    else:
        _emit_json(out, None, manifest.to_json())
    return f"{args.model}: best epoch {manifest.best_epoch}, val rec@3 {max(manifest.val_recall3):.4f}"


def cmd_eval(args, out):
    ranker = load_checkpoint(args.checkpoint)
    split = _load_split(args.data, args.split)
    report = evaluate(ranker, split, EvalConfig(tuple(args.ks), args.max_len), name=args.name)
    if out.dir is None:
        _emit_json(out, None, report.to_json())
    else:
        save_report(out.path(f"{report.model}.report.json"), report)
    return " ".join(f"rec@{k} {report.recall[k]:.4f}" for k in report.recall)


def cmd_search(args, out):
    from .hpo import run_search

    cfg = _train_config(args)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tr, va, te = (_load_split(args.data, w) for w in ("train", "val", "test"))
    result = run_search(args.model, tr, va, te, trials=args.trials, master_seed=args.seed, cfg=cfg,
                        out_dir=out.dir, jobs=args.jobs)
    if out.dir is None:
        _emit_json(out, None, result.to_json())
    else:
        out.paths.append(str(out.dir / "search.json"))
    return f"best trial {result.best.trial_id}: {result.best.config} val rec@3 {result.best.val_recall3:.4f}"


def _plot_rows(data_dir, matches_file, series, item, bin_s, window):
    ds, _ = load_corpus(data_dir, matches_file=matches_file)
    return plot_data(ds, series, bin_s=bin_s, window_bins=window, item_id=item)


def _plot_name(series, item):
    return f"plot_{series}.csv" if item is None else f"plot_{series}_item{item}.csv"


def cmd_plotdata(args, out):
    rows = _plot_rows(args.data, args.matches_file, args.series, args.item, args.bin, args.window)
    text = plot_csv(rows)
    if out.dir is None:
        sys.stdout.write(text)
    else:
        out.text(_plot_name(args.series, args.item), text)
    return f"{len(rows)} bins"


def cmd_report(args, out):
    """Leaderboard over eval reports plus optional plot-data CSVs."""
    for p in args.reports:
        if not Path(p).exists():
            raise DataError(f"report {p} not found")
    board = compare_reports([load_report(p) for p in args.reports])
    if out.dir is None:
        sys.stdout.write(board)
    else:
        out.text("leaderboard.csv", board)
        for series in args.series or ():
            items = args.item or [None]
            for item in items if series == "item_purchase_time" else [None]:
                rows = _plot_rows(args.data, args.matches_file, series, item, args.bin, args.window)
                out.text(_plot_name(series, item), plot_csv(rows))
    return f"leaderboard over {len(args.reports)} reports"


COMMANDS = {
    "ingest": cmd_ingest, "stats": cmd_stats, "split": cmd_split, "synth": cmd_synth,
    "train": cmd_train, "eval": cmd_eval, "search": cmd_search, "plotdata": cmd_plotdata,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqrec", description="Sequential item recommendation toolkit")
    parser.add_argument("--version", action="version", version=f"seqrec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = command("ingest", "parse and validate raw match files")
    p.add_argument("--matches", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--heroes", required=True)
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")

    p = command("stats", "corpus statistics before and after preprocessing")
    p.add_argument("--data", required=True)
    _preprocess_args(p)

    p = command("split", "preprocess and split chronologically by match")
    p.add_argument("--data", required=True)
    p.add_argument("--train", type=float, default=0.94)
    p.add_argument("--val", type=float, default=0.01)
    p.add_argument("--test", type=float, default=0.05)
    _preprocess_args(p)

    p = command("synth", "generate a synthetic corpus with a planted oracle")
    p.add_argument("--matches", type=int, default=1000)
    p.add_argument("--items", type=int, default=50)
    p.add_argument("--heroes", type=int, default=10)
    p.add_argument("--sharpness", type=float, default=3.0)
    p.add_argument("--consumable-rate", type=float, default=0.1)
    p.add_argument("--mean-ls", type=float, default=12.0)
    p.add_argument("--std-ls", type=float, default=4.0)
    p.add_argument("--shared-weight", type=float, default=0.0)
    p.add_argument("--second-order", type=float, default=0.0)
    p.add_argument("--mode", default=DEFAULT_MODE)

    def model_flags(p):
        p.add_argument("--model", required=True, choices=["pop", "markov", "lr", "mlp", "gru", "narm",
                                                          "sasrec", "bert4rec"])
        p.add_argument("--data", required=True, help="directory written by `split`")
        _train_args(p)

    p = command("train", "train one model with early stopping")
    model_flags(p)
    p.add_argument("--preset", choices=["dota350k", "opendota"], default="dota350k",
                   help="starting hyperparameters, overridden by explicit flags")
    p.add_argument("--emb", type=int)
    p.add_argument("--cell", type=int)
    p.add_argument("--enc", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--head-size", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--ctx-dropout", type=float)
    p.add_argument("--emb-dropout", type=float)
    p.add_argument("--activation", choices=["relu", "tanh"])

    p = command("eval", "evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=list(SPLIT_FILES), default="test")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3])
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--name", default=None)

    p = command("search", "random hyperparameter search")
    model_flags(p)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)

    def plot_flags(p):
        p.add_argument("--matches-file", default=MATCHES_FILE)
        p.add_argument("--bin", type=int, default=60)
        p.add_argument("--window", type=int, default=5)

    p = command("plotdata", "binned distribution for one plot series")
    p.add_argument("--data", required=True)
    p.add_argument("--series", required=True, choices=SERIES)
    p.add_argument("--item", type=int, default=None)
    plot_flags(p)

    p = command("report", "leaderboard CSV and plot-data CSVs")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--series", nargs="*", choices=SERIES)
    p.add_argument("--item", type=int, nargs="*")
    plot_flags(p)
    return parser


def _invocation(args) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "verbose")}
    return {"command": args.command, "args": flags, "seed": args.seed, "version": __version__}


def dispatch(argv) -> CommandResult:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "report" and args.series and args.data is None:
            raise UsageError("report --series needs --data")
    except UsageError as exc:
        return CommandResult(EXIT_USAGE, summary=str(exc))
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = _Out(args.out)
    try:
        summary = COMMANDS[args.command](args, out)
        code = EXIT_OK
    except UsageError as exc:
        return CommandResult(EXIT_USAGE, summary=str(exc))
    except (DataError, FileNotFoundError) as exc:
        summary, code = f"data error: {exc}", EXIT_DATA
    except TrainingDiverged as exc:
        summary, code = f"training diverged: {exc}", EXIT_DIVERGED
    except ValueError as exc:  # invalid parameter values that argparse cannot see
        return CommandResult(EXIT_USAGE, summary=f"usage error: {exc}")
    if out.dir is not None:
        out.json(f"{args.command}.invocation.json", _invocation(args))
    return CommandResult(code, out.paths, summary)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        result = dispatch(argv)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    print(result.summary, file=sys.stderr if result.exit_code else sys.stdout)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
