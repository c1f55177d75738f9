"""Command-line entry point: discretize, train, predict, eval, grid-search, bench.

Exit codes: 0 success, 2 unreadable input, 3 invalid configuration, 4 numeric
failure during training. ``QS3ORAO_SEED`` in the environment overrides
``--seed``. A ``--config`` JSON file supplies defaults that explicit flags
override.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .data import (DataError, SemiSupervisedSplit, ValidationError, discretize_equal_frequency, load_dataset,
                   load_features, make_ordinal_blobs, make_semi_split, min_max_scale, write_csv)
from .evaluation import bench_scaling, evaluate_model, overall_auc, write_bench_csv
from .model import ModelFileError, load_model, predict_labels, predict_scores, save_model
from .trainer import ConfigError, NumericError, TrainConfig, Trainer

EXIT_OK, EXIT_PARSE, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4
SCHEMA_VERSION = 1
SEED_ENV = "QS3ORAO_SEED"

DEFAULT_LAMBDA_GRID = [2.0 ** e for e in range(-3, 4)]
DEFAULT_SIGMA_GRID = [2.0 ** e for e in range(-3, 4)]
DEFAULT_GAMMA_GRID = [round(0.1 * i, 1) for i in range(11)]


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def separable_fixture(seed: int = 0, n_labeled_per_class: int = 20, n_unlabeled: int = 2000):
    """1-D three-class fixture (means -2, 0, 2, noise 0.3) used when no data file is given."""
    lab = make_ordinal_blobs(n_labeled_per_class, seed=seed)
    per = [n_unlabeled // 3 + (c < n_unlabeled % 3) for c in range(3)]
    unl = make_ordinal_blobs(per, seed=seed + 1).features
    return SemiSupervisedSplit(lab, unl, seed)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _gamma(text):
    values = _float_list(text) if isinstance(text, str) else list(np.atleast_1d(text))
    return values[0] if len(values) == 1 else tuple(values)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="regularization (default 1)")
    p.add_argument("--theta", type=float, default=None,
                   help="step-size scale; default 1.5/lambda so theta*lambda = 1.5")
    p.add_argument("--gamma", type=_gamma, default=0.5,
                   help="PN weight in [0,1]; one value or k-1 comma-separated values")
    p.add_argument("--sigma", type=float, default=1.0, help="Gaussian kernel width (default 1)")
    p.add_argument("--m", type=int, default=64, help="random frequencies per iteration")
    p.add_argument("--iters", type=int, default=500, help="training iterations t_max")
    p.add_argument("--batch", type=int, default=16, help="rows drawn per class and from the unlabeled pool")
    p.add_argument("--threshold-margin", type=float, default=0.0, help="hinge margin when fitting thresholds")


def _add_data_flags(p: argparse.ArgumentParser, n_labeled_default) -> None:
    p.add_argument("--data", help="labeled dataset; omitted -> built-in separable fixture")
    p.add_argument("--format", choices=["csv", "libsvm"], default="csv")
    p.add_argument("--n-labeled", type=int, default=n_labeled_default,
                   help="rows kept labeled; the rest form the unlabeled pool")
    p.add_argument("--seed", type=int, default=0, help="master seed (split and training)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qs3orao", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        parser.subcommands[name] = p
        p.add_argument("--config", help="JSON file of flag defaults (keys are flag names)")
        p.add_argument("--json-out", help="also write the JSON summary here")
        return p

    p = command("discretize", "bin a real-valued target column into k ordinal labels")
    p.add_argument("--in", dest="input", required=True, help="CSV of real values")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--target-col", type=int, default=-1, help="column holding the target (default last)")
    p.add_argument("--normalize", action="store_true", help="min-max scale the feature columns")

    p = command("train", "train a ranking model")
    _add_data_flags(p, None)
    _add_train_flags(p)
    p.add_argument("--model-out", default="model.qs3o")
    p.add_argument("--curve-out", help="CSV of per-iteration progress")

    p = command("predict", "score or label feature rows with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["csv", "libsvm"], default="csv")
    p.add_argument("--has-labels", action="store_true", help="input CSV carries a trailing label column")
    p.add_argument("--out", required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--scores", dest="mode", action="store_const", const="scores")
    mode.add_argument("--labels", dest="mode", action="store_const", const="labels")
    p.set_defaults(mode="scores")

    p = command("eval", "AUC and label metrics of a model on a labeled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["csv", "libsvm"], default="csv")

    p = command("grid-search", "cross-validated search over lambda, sigma and gamma")
    _add_data_flags(p, None)
    _add_train_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lambda-grid", type=_float_list, default=DEFAULT_LAMBDA_GRID)
    p.add_argument("--sigma-grid", type=_float_list, default=DEFAULT_SIGMA_GRID)
    p.add_argument("--gamma-grid", type=_float_list, default=DEFAULT_GAMMA_GRID)
    p.add_argument("--theta-lambda", type=float, default=1.5, help="theta = theta_lambda / lambda per cell")
    p.add_argument("--jobs", type=int, default=1, help="grid cells trained concurrently")

    p = command("bench", "training time and coefficient memory against unlabeled-pool size")
    _add_data_flags(p, 500)
    _add_train_flags(p)
    p.add_argument("--unlabeled-sizes", type=_int_list, default=[1000, 10000, 100000])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--csv-out", default="bench.csv")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse twice: the first pass finds ``--config`` so its values become defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_PARSE, f"cannot read config {args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise CliError(EXIT_CONFIG, f"config {args.config} must hold a JSON object")
        overrides = {key.replace("-", "_"): value for key, value in overrides.items()}
        if "lambda" in overrides:
            overrides["lam"] = overrides.pop("lambda")
        unknown = sorted(set(overrides) - set(vars(args)))
        if unknown:
            raise CliError(EXIT_CONFIG, f"unknown config keys: {', '.join(unknown)}")
        parser.subcommands[args.command].set_defaults(**overrides)
        args = parser.parse_args(argv)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    return args


def effective_config(args) -> dict:
    out = {k: v for k, v in vars(args).items() if k != "config"}
    if isinstance(out.get("gamma"), tuple):
        out["gamma"] = list(out["gamma"])
    return out


def emit(args, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": effective_config(args),
           **payload}
    text = json.dumps(doc, indent=2, sort_keys=True, default=float)
    print(text)
    if getattr(args, "json_out", None):
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def train_config(args, k: int | None = None) -> TrainConfig:
    theta = args.theta if args.theta is not None else 1.5 / args.lam
    cfg = TrainConfig(lam=args.lam, theta=theta, gamma=args.gamma, m=args.m, t_max=args.iters,
                      batch=args.batch, master_seed=args.seed, sigma=args.sigma,
                      threshold_margin=args.threshold_margin)
    cfg.validate(k)
    return cfg


def load_split(args) -> SemiSupervisedSplit:
    if not args.data:
        return separable_fixture(args.seed)
    ds = load_dataset(args.data, args.format)
    n_labeled = args.n_labeled if args.n_labeled is not None else min(500, ds.n)
    try:
        return make_semi_split(ds, n_labeled, args.seed)
    except ValidationError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


# ---------------------------------------------------------------- grid search

def stratified_folds(labels, n_folds: int, rng: np.random.Generator, max_tries: int = 100) -> np.ndarray:
    """Fold id per labeled row, dealt round-robin within each shuffled class.

    A draw where some training part misses a class is redrawn from the same
    generator.
    """
    labels = np.asarray(labels)
    k = int(labels.max())
    if n_folds < 2 or n_folds > labels.size:
        raise ConfigError(f"folds must be in 2..{labels.size}, got {n_folds}")
    for _ in range(max_tries):
        fold = np.empty(labels.size, dtype=np.int64)
        offset = int(rng.integers(n_folds))
        for c in range(1, k + 1):
            rows = rng.permutation(np.flatnonzero(labels == c))
            fold[rows] = (np.arange(rows.size) + offset) % n_folds
            offset = (offset + rows.size) % n_folds
        if all(np.unique(labels[fold != f]).size == k for f in range(n_folds)):
            return fold
    raise ConfigError(f"cannot form {n_folds} folds that keep every class in training")


def cross_validate(split: SemiSupervisedSplit, config: TrainConfig, folds: np.ndarray) -> dict:
    """Mean validation overall-AUC; the unlabeled pool joins every fold's training."""
    lab = split.labeled
    aucs = []
    for f in range(int(folds.max()) + 1):
        train_rows = np.flatnonzero(folds != f)
        valid_rows = np.flatnonzero(folds == f)
        fold_split = SemiSupervisedSplit(lab.subset(train_rows), split.unlabeled_features, split.split_seed)
        try:
            trainer = Trainer(fold_split, config)
            trainer.run()
            scores = trainer.scores(lab.features[valid_rows])
        except NumericError:
            return {"mean_auc": float("nan"), "fold_auc": [], "error": "numeric"}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            auc = overall_auc(scores, lab.labels[valid_rows], lab.k) if np.all(np.isfinite(scores)) else np.nan
        aucs.append(float(auc))
    return {"mean_auc": float(np.mean(aucs)), "fold_auc": aucs, "error": None}


def grid_search(split: SemiSupervisedSplit, base: TrainConfig, lambdas, sigmas, gammas,
                n_folds: int = 5, seed: int = 0, jobs: int = 1, theta_lambda: float = 1.5):
    """Return ``(best_config, table)``; ties on mean AUC go to the larger lambda, then the earlier cell."""
    if not (len(lambdas) and len(sigmas) and len(gammas)):
        raise ConfigError("every grid needs at least one value")
    folds = stratified_folds(split.labeled.labels, n_folds, np.random.default_rng([seed, 0xF01D]))
    cells = [replace(base, lam=lam, theta=theta_lambda / lam, sigma=sig, gamma=g)
             for lam, sig, g in itertools.product(lambdas, sigmas, gammas)]
    for cfg in cells:
        cfg.validate(split.k)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda cfg: cross_validate(split, cfg, folds), cells))
    table = [{"cell": i, "lambda": cfg.lam, "sigma": cfg.sigma, "gamma": cfg.gamma, **res}
             for i, (cfg, res) in enumerate(zip(cells, results))]
    valid = [row for row in table if np.isfinite(row["mean_auc"])]
    if not valid:
        raise NumericError(0, "every grid cell failed numerically")
    best = max(valid, key=lambda row: (row["mean_auc"], row["lambda"], -row["cell"]))
    return cells[best["cell"]], table


# ---------------------------------------------------------------- commands

def cmd_discretize(args) -> dict:
    X = load_features(args.input, "csv")
    if X.shape[1] < 1:
        raise CliError(EXIT_PARSE, f"{args.input}: no columns")
    col = args.target_col % X.shape[1]
    labels = discretize_equal_frequency(X[:, col], args.k)
    features = np.delete(X, col, axis=1)
    if args.normalize:
        features = min_max_scale(features)
    write_csv(args.out, features, labels)
    return {"rows": int(X.shape[0]), "k": args.k, "counts": np.bincount(labels)[1:].tolist()}


def cmd_train(args) -> dict:
    split = load_split(args)
    cfg = train_config(args, split.k)
    records = []
    trainer = Trainer(split, cfg, records.append)
    trainer.run()
    model = trainer.model()
    save_model(model, args.model_out)
    if args.curve_out:
        with open(args.curve_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("i,eta,surrogate_risk,elapsed_ns\n")
            for r in records:
                fh.write(f"{r['i']},{float(r['eta'])!r},{float(r['surrogate_risk'])!r},{r['elapsed_ns']}\n")
    metrics = evaluate_model(model, split.labeled, trainer.train_ns)
    return {"train_config": cfg.to_dict(), "n_labeled": split.labeled.n,
            "n_unlabeled": split.n_unlabeled, "labeled_metrics": metrics.to_dict(),
            "thresholds": model.thresholds.b.tolist()}


def cmd_predict(args) -> dict:
    model = load_model(args.model)
    X = load_features(args.input, args.format, drop_last=args.has_labels, d=model.spec.d)
    if X.shape[0] and X.shape[1] != model.spec.d:
        raise CliError(EXIT_PARSE, f"{args.input}: rows have {X.shape[1]} features, model expects {model.spec.d}")
    if args.mode == "labels":
        values = [str(int(v)) for v in predict_labels(model, X)]
    else:
        values = [repr(float(v)) for v in predict_scores(model, X)]
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(v + "\n" for v in values)
    return {"rows": len(values), "mode": args.mode}


def cmd_eval(args) -> dict:
    model = load_model(args.model)
    ds = load_dataset(args.data, args.format, k=model.k)
    metrics = evaluate_model(model, ds)
    return {"metrics": metrics.to_dict(), "model": {"k": model.k, "d": model.spec.d, "m": model.m,
                                                    "t": model.t, "sigma": model.spec.sigma}}


def cmd_grid_search(args) -> dict:
    split = load_split(args)
    base = train_config(args, split.k)
    best, table = grid_search(split, base, args.lambda_grid, args.sigma_grid, args.gamma_grid,
                              args.folds, args.seed, args.jobs, args.theta_lambda)
    best_row = next(r for r in table if r["lambda"] == best.lam and r["sigma"] == best.sigma
                    and r["gamma"] == best.gamma)
    return {"best": {**best.to_dict(), "mean_auc": best_row["mean_auc"]}, "table": table}


def cmd_bench(args) -> dict:
    if args.data:
        ds = load_dataset(args.data, args.format)
        try:
            split = make_semi_split(ds, min(args.n_labeled, ds.n), args.seed)
        except ValidationError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
        labeled, pool = split.labeled, split.unlabeled_features
        if pool.shape[0] == 0:
            raise CliError(EXIT_CONFIG, "no rows left for the unlabeled pool")
    else:
        per = [args.n_labeled // 3 + (c < args.n_labeled % 3) for c in range(3)]
        labeled = make_ordinal_blobs(per, seed=args.seed)
        pool = make_ordinal_blobs(max(1, max(args.unlabeled_sizes) // 3 + 1), seed=args.seed + 1).features
    base = train_config(args, labeled.k)
    table = bench_scaling(labeled, pool, base, args.unlabeled_sizes, args.repeats, args.seed)
    write_bench_csv(args.csv_out, table)
    return {"table": table}


COMMANDS = {"discretize": cmd_discretize, "train": cmd_train, "predict": cmd_predict,
            "eval": cmd_eval, "grid-search": cmd_grid_search, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        emit(args, COMMANDS[args.command](args))
        return EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelFileError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
