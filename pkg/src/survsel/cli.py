"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
import argparse
import json
import os
import sys
import warnings

import pandas as pd

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _load_manifest(path):
    from .harness import ExperimentManifest
    if not os.path.exists(path):
        raise UsageError(f"manifest {path} not found")
    try:
        return ExperimentManifest.load(path)
    except (ValueError, TypeError, KeyError) as err:
        raise UsageError(f"invalid manifest {path}: {err}")


def _emit(frame, out):
    if out:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        frame.to_csv(out, index=False)
        print(f"wrote {out}")
    else:
        print(frame.to_string(index=False))


def _normalized_for(d, normalization):
    """Features of ``d`` standardized with stored statistics."""
    from .exceptions import DataError
    if d.normalized:
        return d.X
    if normalization is None:
        raise DataError("checkpoint has no normalization parameters and data is unnormalized")
    if list(normalization.names) != d.feature_names:
        raise DataError("data features do not match the model's normalization parameters")
    return normalization.apply(d.X)


# ---------------------------------------------------------------------------
# Commands

def cmd_prepare(args):
    from .dataset import impute, load_csv, one_hot_encode, read_schema, save_dataset
    d = one_hot_encode(impute(load_csv(args.input, read_schema(args.schema))))
    save_dataset(d, args.out)
    print(f"prepared {d.n_records} records x {d.n_features} features -> {args.out}")


def cmd_augment(args):
    from .dataset import augment_synthetic, load_dataset, save_dataset
    d, norm = load_dataset(args.input)
    if args.synth < 0:
        raise UsageError("--synth must be nonnegative")
    out = args.out or f"{args.input.rstrip(os.sep)}_synth{args.synth}"
    d = augment_synthetic(d, args.synth, args.seed)
    save_dataset(d, out, norm)
    print(f"added {args.synth} synthetic features -> {out}")


def cmd_train(args):
    from .harness import train_variant
    manifest = _load_manifest(args.manifest)
    out = args.out or manifest.output_dir or "."
    model, fd, grid = train_variant(manifest, args.variant, args.fold)
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, f"{args.variant}_fold{args.fold}.npz")
    model.save(ckpt, fd.normalization, {"variant": args.variant, "fold": args.fold})
    model.training_log_.to_csv(os.path.join(out, f"{args.variant}_fold{args.fold}_log.csv"),
                               index=False)
    grid.to_frame().to_csv(os.path.join(out, f"{args.variant}_fold{args.fold}_test.csv"),
                           index=False)
    print(grid.to_frame().to_string(index=False))
    print(f"mean C-index {grid.mean:.4f} (best epoch {model.best_epoch_}); checkpoint {ckpt}")


def cmd_search(args):
    from .harness import run_experiment
    manifest = _load_manifest(args.manifest)
    out = args.out or manifest.output_dir
    if out is None:
        raise UsageError("no output directory: set output_dir in the manifest or pass --out")
    result = run_experiment(manifest, out)
    print(result.summary().to_string(index=False))
    print(f"results in {out}")


def cmd_evaluate(args):
    from .dataset import load_dataset
    from .estimator import CompetingRisksNet
    from .evaluation import evaluate
    model, norm = CompetingRisksNet.load(args.model)
    d, _ = load_dataset(args.data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grid = evaluate(model, _normalized_for(d, norm), d.y, args.horizons)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(grid.to_frame(), args.out)
    print(f"mean C-index over defined cells: {grid.mean:.4f}")


def cmd_rank_features(args):
    from .dataset import load_dataset, normalize
    from .filters import rank_features, ranking_order
    if args.method == "permutation" and not args.model:
        raise UsageError("--method permutation needs --model")
    d, _ = load_dataset(args.data)
    names = d.feature_names
    if args.method == "permutation":
        from .estimator import CompetingRisksNet
        from .evaluation import permutation_importances
        model, norm = CompetingRisksNet.load(args.model)
        reports = permutation_importances(model, _normalized_for(d, norm), d.y, args.repeats,
                                          args.horizons, args.seed, names)
        scores = [r.importances for r in reports]
    else:
        X = d.X if d.normalized else normalize(d)[0].X
        rankings = rank_features(X, d.y, args.method, args.horizons, d.num_events, args.seed,
                                 names)
        scores = [r.averaged for r in rankings]
    rows = []
    for k, s in enumerate(scores, start=1):
        for rank, j in enumerate(ranking_order(s)):
            rows.append({"event": k, "rank": rank + 1, "feature": names[j],
                         "score": float(s[j])})
    frame = pd.DataFrame(rows)
    if args.top:
        frame = frame[frame["rank"] <= args.top]
    _emit(frame, args.out)


def cmd_degradation(args):
    from .harness import ExperimentManifest, degradation_study
    if args.manifest:
        manifest = _load_manifest(args.manifest)
    else:
        manifest = ExperimentManifest(data={"toy": {"n_noise": 0}}, variants=args.variants)
    out = args.out or manifest.output_dir
    curve, _ = degradation_study(manifest, args.counts, args.variants, out)
    print(curve.to_string(index=False))


# ---------------------------------------------------------------------------

def build_parser():
    from .filters import DEFAULT_HORIZONS
    from .harness import VARIANTS

    parser = _Parser(prog="survsel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    horizons = ",".join(f"{h:g}" for h in DEFAULT_HORIZONS)

    p = sub.add_parser("prepare", help="load a CSV with a schema, impute and encode")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("augment", help="append synthetic binary noise features")
    p.add_argument("--input", required=True, help="prepared dataset directory")
    p.add_argument("--synth", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="default: <input>_synth<N>")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train one variant on one fold")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="fold-0 random search, then cross-validate")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="C-index grid of a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--horizons", type=_floats, default=_floats(horizons))
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank-features", help="per-event feature ranking report")
    p.add_argument("--method", choices=("anova", "svm", "relieff", "permutation"),
                   required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="checkpoint (permutation only)")
    p.add_argument("--horizons", type=_floats, default=_floats(horizons))
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank_features)

    p = sub.add_parser("degradation", help="C-index against synthetic feature count")
    p.add_argument("--counts", type=_ints, default=[0, 20, 40, 60, 80, 100])
    p.add_argument("--variants", type=_names, default=["plain", "sparse"])
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_degradation)
    return parser


def main(argv=None):
    from .exceptions import DataError, DegenerateLabelsError, NumericalError, PipelineOrderError

    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, DegenerateLabelsError, PipelineOrderError, FileNotFoundError,
            pd.errors.ParserError, json.JSONDecodeError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
