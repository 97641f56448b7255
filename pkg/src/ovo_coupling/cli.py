"""Command-line entry point.

Exit codes: 0 on success, 1 for invalid input or arguments, 2 when the
numerics fail (degenerate calibration fit or coupling system).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import formats
from .classifiers import (
    LogisticHyper,
    RefineHyper,
    load_external_scores,
    refine_ova_to_ovo,
    score_batch,
    train_multioutput,
    train_pairwise_suite,
)
from .core import NumericalError, OvoError, ProbabilityVector, ValidationError, pair_indices
from .coupling import threshold_labels
from .evaluation import (
    BenchmarkConfig,
    evaluate_predictions,
    run_benchmark,
    stratified_split,
    sub_seed,
)
from .pipeline import Prediction, fit_record_calibration, fit_suite_calibration, predict_matrices

logger = logging.getLogger("ovo_coupling")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _add_common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for pairs, samples and seeds (default: all cores)")
    p.add_argument("--log", choices=sorted(LOG_LEVELS),
                   help="log level; overrides the OVO_LOG environment variable")


def _add_labeling(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float,
                   help="multi-label mode: emit every class with p >= THRESHOLD")
    g.add_argument("--multilabel", action="store_true",
                   help="multi-label mode with threshold 1/K")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ovo", description="Pairwise-coupled multiclass classification: train, "
                     "calibrate, couple, predict, evaluate, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train pair classifiers or a one-vs-all model from a CSV")
    p.add_argument("--input", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="suite or model JSON to write")
    p.add_argument("--mode", choices=["pairwise", "ova", "refine"], default="pairwise")
    p.add_argument("--epochs", type=int, default=LogisticHyper.epochs)
    p.add_argument("--lr", type=float, default=LogisticHyper.lr)
    p.add_argument("--l2", type=float, default=LogisticHyper.l2)
    p.add_argument("--refine-epochs", type=int, default=RefineHyper.epochs)
    p.add_argument("--refine-lr", type=float, default=RefineHyper.lr)
    p.add_argument("--base-out", help="refine mode: also write the one-vs-all base model")
    p.add_argument("--calib-out", help="also fit calibration and write it here")
    p.add_argument("--holdout", type=float, default=0.0,
                   help="fraction held out of training and used only for --calib-out")
    _add_common(p)

    p = sub.add_parser("calibrate", help="fit per-pair sigmoid calibration")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", help="suite JSON (requires --input)")
    src.add_argument("--scores", help="external score JSON with true labels")
    p.add_argument("--input", help="labeled CSV scored by --suite")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("couple", help="couple external pairwise scores into class probabilities")
    p.add_argument("--scores", required=True, help="external score JSON")
    p.add_argument("--calib", help="calibration JSON; without it raw scores are used as is")
    p.add_argument("--out", required=True)
    _add_labeling(p)
    _add_common(p)

    p = sub.add_parser("predict", help="label a CSV with a trained suite and calibration")
    p.add_argument("--suite", required=True, help="suite JSON (or one-vs-all model JSON)")
    p.add_argument("--calib", help="calibration JSON (required for suites)")
    p.add_argument("--input", required=True, help="CSV of feature rows")
    p.add_argument("--out", required=True)
    _add_labeling(p)
    _add_common(p)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="predictions JSON")
    p.add_argument("--truth", required=True, help="labeled CSV or external score JSON")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("benchmark", help="compare strategies on synthetic data")
    p.add_argument("--config", help="JSON config; flags below override it")
    p.add_argument("--K", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--strategies", help="comma list of proposed,voting,ova,refined")
    p.add_argument("--n-seeds", type=int, help="use seeds SEED .. SEED+N-1")
    p.add_argument("--out", required=True)
    _add_common(p)
    return parser


def _setup_logging(level_name):
    name = level_name or os.environ.get("OVO_LOG", "warn")
    level = LOG_LEVELS.get(name.lower())
    if level is None:
        raise ValidationError(f"log level {name!r} not one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def _theta(args, K):
    if getattr(args, "multilabel", False):
        return 1.0 / K
    return getattr(args, "threshold", None)


def _hyper(args, name):
    return LogisticHyper(args.lr, args.epochs, args.l2, sub_seed(args.seed, name))


def cmd_train(args):
    if not 0 <= args.holdout < 1:
        raise ValidationError(f"--holdout must be in [0, 1), got {args.holdout}")
    if args.holdout and not args.calib_out:
        raise ValidationError("--holdout only applies together with --calib-out")
    ds = formats.read_dataset(args.input)
    train, calib_ds = ds, ds
    if args.holdout:
        train, calib_ds = stratified_split(ds, 1.0 - args.holdout, sub_seed(args.seed, "holdout"))
    if args.mode == "ova":
        if args.calib_out:
            raise ValidationError("--calib-out needs a pairwise or refine suite, not --mode ova")
        model = train_multioutput(train, _hyper(args, "train.ova"))
        formats.write_json_atomic(args.out, formats.model_to_json(model, ds.class_set))
        return
    if args.mode == "pairwise":
        suite = train_pairwise_suite(train, _hyper(args, "train.pairwise"), threads=args.threads)
    else:
        model = train_multioutput(train, _hyper(args, "train.ova"))
        if args.base_out:
            formats.write_json_atomic(args.base_out, formats.model_to_json(model, ds.class_set))
        suite = refine_ova_to_ovo(model, train,
                                  RefineHyper(args.refine_lr, args.refine_epochs,
                                              sub_seed(args.seed, "train.refine")),
                                  threads=args.threads)
    formats.write_json_atomic(args.out, formats.suite_to_json(suite))
    if args.calib_out:
        calib = fit_suite_calibration(suite, calib_ds, threads=args.threads)
        formats.write_json_atomic(args.calib_out, formats.calibration_to_json(calib))


def _load_suite(path):
    kind, obj = formats.load_model(path)
    if kind != "suite":
        raise ValidationError(f"suite: {path} holds a one-vs-all model, not a pair suite")
    return obj


def cmd_calibrate(args):
    if args.suite:
        if not args.input:
            raise ValidationError("--input is required with --suite")
        suite = _load_suite(args.suite)
        ds = formats.read_dataset(args.input, classes=suite.classes)
        calib = fit_suite_calibration(suite, ds, threads=args.threads)
    else:
        classes, records = load_external_scores(args.scores)
        calib = fit_record_calibration(classes.K, records)
    formats.write_json_atomic(args.out, formats.calibration_to_json(calib))


def _check_calib(calib, K, path):
    missing = [p for p in pair_indices(K) if p not in calib]
    if missing:
        raise ValidationError(f"calib: {path} lacks pairs {[formats.pair_key(p) for p in missing]}")


def cmd_couple(args):
    classes, records = load_external_scores(args.scores)
    calib = None
    if args.calib:
        calib = formats.load_calibration(args.calib)
        _check_calib(calib, classes.K, args.calib)
    preds = predict_matrices([r.matrix for r in records], calib, [r.id for r in records],
                             _theta(args, classes.K), threads=args.threads)
    formats.write_json_atomic(args.out, formats.predictions_to_json(preds, classes))


def cmd_predict(args):
    kind, obj = formats.load_model(args.suite)
    if kind == "ova":
        model, classes = obj
        ds = formats.read_dataset(args.input, classes=classes, require_labels=False)
        out = model.outputs(ds.features)
        theta = _theta(args, classes.K)
        preds = []
        for sid, o in zip(ds.ids, out):
            p = ProbabilityVector.from_unnormalized(o)
            labels = None
            if theta is not None:
                labels = threshold_labels(p, theta)
            preds.append(Prediction(sid, p.values, int(np.argmax(o)), None, "ova", labels))
    else:
        suite = obj
        if not args.calib:
            raise ValidationError("--calib is required when predicting with a pair suite")
        calib = formats.load_calibration(args.calib)
        _check_calib(calib, suite.K, args.calib)
        classes = suite.classes
        ds = formats.read_dataset(args.input, classes=classes, require_labels=False)
        if ds.dim != suite.dim:
            raise ValidationError(f"input: {ds.dim} feature columns, suite expects {suite.dim}")
        mats = score_batch(suite, ds.features)
        preds = predict_matrices(mats, calib, ds.ids, _theta(args, classes.K),
                                 threads=args.threads)
    formats.write_json_atomic(args.out, formats.predictions_to_json(preds, classes))


def cmd_evaluate(args):
    classes, ids, pred_sets, multi = formats.load_predictions(args.pred)
    if args.truth.endswith(".json"):
        tclasses, records = load_external_scores(args.truth)
        truth = {r.id: r.labels for r in records if r.labels is not None}
    else:
        ds = formats.read_dataset(args.truth, classes=classes)
        tclasses = classes
        truth = dict(zip(ds.ids, ds.labels))
    if tclasses != classes:
        raise ValidationError(f"truth: classes {list(tclasses.labels)} differ from "
                              f"predictions {list(classes.labels)}")
    missing = [i for i in ids if i not in truth]
    if missing:
        raise ValidationError(f"truth: no label for prediction ids {missing[:5]}")
    truth_sets = [truth[i] for i in ids]
    single = not multi and all(len(s) == 1 for s in truth_sets)
    report = evaluate_predictions(pred_sets, truth_sets, classes, single)
    report["classes"] = list(classes.labels)
    formats.write_json_atomic(args.out, report)


def cmd_benchmark(args):
    cfg = {}
    if args.config:
        cfg = formats.read_json(args.config, "config")
        if not isinstance(cfg, dict):
            raise ValidationError("config: expected a JSON object")
    for flag, key in [("K", "K"), ("per_class", "per_class"), ("dim", "dim"),
                      ("separation", "separation"), ("train_fraction", "train_fraction")]:
        v = getattr(args, flag)
        if v is not None:
            cfg[key] = v
    if args.strategies:
        cfg["strategies"] = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if args.n_seeds is not None:
        if args.n_seeds < 1:
            raise ValidationError("--n-seeds must be >= 1")
        cfg["seeds"] = list(range(args.seed, args.seed + args.n_seeds))
    elif "seeds" not in cfg:
        cfg["seeds"] = [args.seed]
    cfg["threads"] = args.threads
    try:
        config = BenchmarkConfig(**cfg)
    except TypeError as exc:
        raise ValidationError(f"config: {exc}") from None
    formats.write_json_atomic(args.out, run_benchmark(config))


COMMANDS = {"train": cmd_train, "calibrate": cmd_calibrate, "couple": cmd_couple,
            "predict": cmd_predict, "evaluate": cmd_evaluate, "benchmark": cmd_benchmark}


def dispatch(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
        _setup_logging(args.log)
        COMMANDS[args.command](args)
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)
    except NumericalError as exc:
        print(f"ovo: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (OvoError, OSError) as exc:
        print(f"ovo: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
