"""Command-line driver.

Verbs: train (fit trees, learn the tensor, save artifacts), compare (full
method comparison with baselines), convergence (training trace only),
inspect (slice diagnostics of a saved tensor), gen-data (write a synthetic
dataset as CSV).

A config file holds the same keys as the long flags, one `key = value`
per line with # comments; flags given on the command line override file
values, which override built-in defaults.

Exit codes: 0 success, 2 configuration problem, 3 data problem,
4 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiment
from .data import DataError, generate_blobs, generate_double_ring, save_csv
from .experiment import ConfigError, RunConfig, resolve_gamma
from .io_utils import fmt_float
from .optimizer import DivergenceError
from .tensor import load_tensor

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

_EXPERIMENT_KEYS = {
    "dataset", "csv", "label-col", "no-header", "preds",
    "n", "noise", "classes", "dims", "spread",
    "k", "max-depth", "min-leaf",
    "alpha", "gamma", "lr", "max-iters", "batch", "tolerance",
    "seed", "baselines", "out",
}
_INSPECT_KEYS = {"tensor", "tolerance", "out"}
_GENDATA_KEYS = {"dataset", "n", "noise", "classes", "dims", "spread", "seed", "out"}
_BOOL_KEYS = {"no-header"}

_CONFIG_KEYS = {
    "train": _EXPERIMENT_KEYS,
    "compare": _EXPERIMENT_KEYS,
    "convergence": _EXPERIMENT_KEYS,
    "inspect": _INSPECT_KEYS,
    "gen-data": _GENDATA_KEYS,
}


def _add_experiment_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", metavar="PATH", help="key = value file; flags override")
    sp.add_argument("--dataset", default="double-ring",
                    help="double-ring | blobs | csv | preds (default double-ring)")
    sp.add_argument("--csv", metavar="PATH", help="input file for --dataset csv")
    sp.add_argument("--label-col", default="label",
                    help="label column name or 0-based index (default label)")
    sp.add_argument("--no-header", action="store_true",
                    help="treat the first CSV row as data, not names")
    sp.add_argument("--preds", metavar="PATH",
                    help="vote file for --dataset preds (k indices + label per line)")
    sp.add_argument("--n", type=int, default=1000, help="generated sample count")
    sp.add_argument("--noise", type=float, default=experiment.EXPERIMENT_RING_NOISE,
                    help="double-ring radial noise standard deviation")
    sp.add_argument("--classes", type=int, default=3, help="blobs class count")
    sp.add_argument("--dims", type=int, default=2, help="blobs feature count")
    sp.add_argument("--spread", type=float, default=1.5, help="blobs cluster spread")
    sp.add_argument("--k", type=int, default=10, help="base learner count")
    sp.add_argument("--max-depth", type=int, default=6, help="tree depth limit")
    sp.add_argument("--min-leaf", type=int, default=experiment.EXPERIMENT_MIN_LEAF,
                    help="minimum samples per leaf")
    sp.add_argument("--alpha", type=float, default=10.0, help="smooth-max sharpness")
    sp.add_argument("--gamma", default="5",
                    help='margin weight, or "random" for a seeded draw from '
                         "{5,10,15,20,25}")
    sp.add_argument("--lr", type=float, default=0.1, help="learning rate")
    sp.add_argument("--max-iters", type=int, default=200, help="iteration budget")
    sp.add_argument("--batch", default="full", help='"full" or a batch size')
    sp.add_argument("--tolerance", type=float, default=1e-8,
                    help="relative loss-change stopping threshold")
    sp.add_argument("--seed", type=int, default=0, help="master random seed")
    sp.add_argument("--baselines", default="10,20,30,100",
                    help="comma-separated forest sizes to compare against")
    sp.add_argument("--out", default="out", metavar="DIR", help="artifact directory")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tensorfuse",
        description="Learn a per-classifier, per-class confidence tensor that "
                    "fuses a small ensemble's votes.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    sub_map = {}

    sp = subs.add_parser("train", help="fit base learners and learn the tensor")
    _add_experiment_flags(sp)
    sub_map["train"] = sp

    sp = subs.add_parser("compare", help="score the fusion against baselines")
    _add_experiment_flags(sp)
    sub_map["compare"] = sp

    sp = subs.add_parser("convergence", help="train and write the loss trace only")
    _add_experiment_flags(sp)
    sub_map["convergence"] = sp

    sp = subs.add_parser("inspect", help="slice diagnostics of a saved tensor")
    sp.add_argument("--config", metavar="PATH", help="key = value file; flags override")
    sp.add_argument("--tensor", metavar="PATH", help="tensor.json to inspect")
    sp.add_argument("--tolerance", type=float, default=None,
                    help="uninformative-column cutoff (default: 1e-9 of each "
                         "learner's weight)")
    sp.add_argument("--out", default=None, metavar="DIR",
                    help="also write slices.txt and slices.png here")
    sub_map["inspect"] = sp

    sp = subs.add_parser("gen-data", help="write a synthetic dataset as CSV")
    sp.add_argument("--config", metavar="PATH", help="key = value file; flags override")
    sp.add_argument("--dataset", default="double-ring", help="double-ring | blobs")
    sp.add_argument("--n", type=int, default=1000, help="sample count")
    sp.add_argument("--noise", type=float, default=experiment.EXPERIMENT_RING_NOISE,
                    help="double-ring radial noise standard deviation")
    sp.add_argument("--classes", type=int, default=3, help="blobs class count")
    sp.add_argument("--dims", type=int, default=2, help="blobs feature count")
    sp.add_argument("--spread", type=float, default=1.5, help="blobs cluster spread")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--out", default="out", metavar="DIR", help="output directory")
    sub_map["gen-data"] = sp

    return parser, sub_map


def read_config_file(path) -> dict:
    """Flat `key = value` pairs; # starts a comment, blank lines ignored."""
    if not os.path.exists(path):
        raise ConfigError(f"no such config file: {path}")
    pairs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path} line {line_no}: expected `key = value`, got {line!r}"
                )
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ConfigError(f"{path} line {line_no}: empty key or value")
            pairs[key] = value
    return pairs


def _merge_config_file(parser, sub, command: str, args, argv):
    """Second parse with file values as defaults, so explicit flags win."""
    pairs = read_config_file(args.config)
    allowed = _CONFIG_KEYS[command]
    defaults = {}
    for key, value in pairs.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} for verb {command}")
        dest = key.replace("-", "_")
        if key in _BOOL_KEYS:
            lowered = value.lower()
            if lowered in ("true", "1", "yes"):
                defaults[dest] = True
            elif lowered in ("false", "0", "no"):
                defaults[dest] = False
            else:
                raise ConfigError(f"config key {key!r} wants true/false, got {value!r}")
        else:
            defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _parse_batch(value) -> object:
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if text == "full":
        return "full"
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f'batch must be "full" or an integer, got {value!r}') from None


def _parse_baselines(value) -> tuple:
    text = str(value).strip()
    if not text:
        return ()
    try:
        return tuple(int(part.strip()) for part in text.split(","))
    except ValueError:
        raise ConfigError(
            f"baselines must be comma-separated integers, got {value!r}"
        ) from None


def _build_run_config(args) -> RunConfig:
    return RunConfig(
        dataset=args.dataset,
        csv_path=args.csv,
        label_column=args.label_col,
        header=not args.no_header,
        preds_path=args.preds,
        n=args.n,
        noise=args.noise,
        num_classes=args.classes,
        dims=args.dims,
        spread=args.spread,
        k=args.k,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        alpha=args.alpha,
        gamma=resolve_gamma(args.gamma, args.seed),
        learning_rate=args.lr,
        max_iters=args.max_iters,
        batch_size=_parse_batch(args.batch),
        tolerance=args.tolerance,
        seed=args.seed,
        baselines=_parse_baselines(args.baselines),
        out_dir=args.out,
    )


def _print_training_summary(trained) -> None:
    print(
        f"final loss {trained.loss_history[-1]:.9g}  "
        f"iterations {trained.iterations_run}  "
        f"converged {'yes' if trained.converged else 'no'}  "
        f"max residual {trained.constraint_residuals.max():.3g}"
    )


def _run_train(args) -> int:
    config = _build_run_config(args)
    prepared = experiment.prepare(config)
    trained = experiment.train_tensor(prepared, config)
    print(
        f"trained {prepared.weights.num_learners}-learner tensor "
        f"on {len(prepared.y_train)} samples"
    )
    _print_training_summary(trained)
    for path in experiment.write_train_artifacts(config.out_dir, prepared, trained):
        print(f"wrote {path}")
    return EXIT_OK


def _run_compare(args) -> int:
    config = _build_run_config(args)
    prepared = experiment.prepare(config)
    trained = experiment.train_tensor(prepared, config)
    report = experiment.compare(prepared, trained.final_theta, config)
    written = experiment.write_train_artifacts(config.out_dir, prepared, trained)
    written += experiment.write_comparison_artifacts(config.out_dir, report, trained)
    print(experiment.render_report_text(report), end="")
    _print_training_summary(trained)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _run_convergence(args) -> int:
    config = _build_run_config(args)
    prepared = experiment.prepare(config)
    trained = experiment.train_tensor(prepared, config)
    _print_training_summary(trained)
    os.makedirs(config.out_dir, exist_ok=True)
    csv_path = os.path.join(config.out_dir, "convergence.csv")
    experiment.emit_convergence(trained, csv_path)
    print(f"wrote {csv_path}")
    from . import plots

    png_path = os.path.join(config.out_dir, "convergence.png")
    plots.convergence_figure(trained, png_path)
    print(f"wrote {png_path}")
    return EXIT_OK


def _render_slice_lines(diagnostics) -> list:
    lines = []
    for diag in diagnostics:
        confident = ",".join(str(r) for r in diag.confident_classes) or "-"
        flat = ",".join(str(r) for r, f in enumerate(diag.uninformative) if f) or "-"
        lines.append(
            f"learner {diag.learner:>2}  w={diag.weight:.6f}  "
            f"confident=[{confident}]  uninformative=[{flat}]"
        )
        for r, (row, rng) in enumerate(zip(diag.argmax_rows, diag.ranges)):
            lines.append(
                f"  vote {r}: strongest evidence row {row}, range {fmt_float(rng)}"
            )
    return lines


def _run_inspect(args) -> int:
    if not args.tensor:
        raise ConfigError("inspect requires --tensor PATH")
    try:
        theta, weights = load_tensor(args.tensor)
    except FileNotFoundError:
        raise DataError(f"no such file: {args.tensor}") from None
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read tensor file {args.tensor}: {exc}") from None
    diagnostics = experiment.inspect_slices(
        theta, tolerance=args.tolerance, weights=weights
    )
    lines = _render_slice_lines(diagnostics)
    print("\n".join(lines))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        from .io_utils import atomic_write_text

        txt_path = os.path.join(args.out, "slices.txt")
        atomic_write_text(txt_path, "\n".join(lines) + "\n")
        print(f"wrote {txt_path}")
        from . import plots

        png_path = os.path.join(args.out, "slices.png")
        plots.slices_figure(theta, png_path)
        print(f"wrote {png_path}")
    return EXIT_OK


def _run_gen_data(args) -> int:
    if args.dataset == "double-ring":
        dataset = generate_double_ring(args.n, args.noise, args.seed)
    elif args.dataset == "blobs":
        dataset = generate_blobs(args.n, args.classes, args.dims, args.spread, args.seed)
    else:
        raise ConfigError(
            f"gen-data supports double-ring and blobs, got {args.dataset!r}"
        )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{args.dataset}.csv")
    save_csv(dataset, path)
    print(f"wrote {path} ({dataset.num_samples} rows, {dataset.num_classes} classes)")
    return EXIT_OK


_HANDLERS = {
    "train": _run_train,
    "compare": _run_compare,
    "convergence": _run_convergence,
    "inspect": _run_inspect,
    "gen-data": _run_gen_data,
}


def main(argv=None) -> int:
    parser, sub_map = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if getattr(args, "config", None):
            try:
                args = _merge_config_file(
                    parser, sub_map[args.command], args.command, args, argv
                )
            except SystemExit as exc:
                return EXIT_CONFIG if exc.code else EXIT_OK
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except json.JSONDecodeError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    raise SystemExit(main(sys.argv[1:]))
