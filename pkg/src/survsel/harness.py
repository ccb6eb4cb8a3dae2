"""Cross-validated experiments, variant comparison and degradation curves.

Every random draw is seeded from the manifest's master seed through
``derive_seed(master, purpose, ...)``:

==========================  ============================================
purpose tags                used for
==========================  ============================================
``toy``                     toy data generation (unless the toy settings set a seed)
``synthetic``               synthetic-feature augmentation
``split``                   fold assignment and fit/validation split
``rank, method, fold``      filter scores on a fold's fit subset
``hybrid, fold``            all-feature model feeding permutation importance
``importance, fold``        permutation draws
``search, stage``           sampler and per-trial seeds of a search stage
``final, variant, fold``    model trained for a fold's test evaluation
==========================  ============================================
"""
import json
import os
import platform
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd

from . import __version__
from ._random import derive_seed
from .dataset import (augment_synthetic, generate_toy_dataset, impute, kfold_split,
                      load_csv, load_dataset, normalize, one_hot_encode, read_schema)
from .evaluation import evaluate_predictions, permutation_importances, results_table
from .exceptions import DataError
from .filters import DEFAULT_HORIZONS, rank_features
from .search import SearchSpace, make_model, run_search

VARIANTS = ("plain", "filter-anova", "filter-svm", "filter-relieff", "sparse", "hybrid")
BASELINE = "plain"
_MANIFEST_KEYS = {"data", "synthetic", "variants", "horizons", "folds", "validation_fraction",
                  "seed", "model", "search", "filter", "importance_repeats", "output_dir"}


@dataclass
class ExperimentManifest:
    """Everything needed to rerun an experiment bit for bit.

    ``data`` is one of ``{"toy": {...generator kwargs}}``,
    ``{"prepared": dir}`` or ``{"csv": path, "schema": path}``.
    ``model`` holds fixed :class:`CompetingRisksNet` parameters (plus
    ``n_selected`` for filter-type variants); ``search`` holds
    ``iterations`` (per variant), ``ranking_iterations`` (the β/σ stage) and
    an optional ``space`` overriding grid entries.
    """

    data: dict
    variants: tuple = ("plain",)
    synthetic: int = 0
    horizons: tuple = DEFAULT_HORIZONS
    folds: int = 5
    validation_fraction: float = 0.2
    seed: int = 0
    model: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    filter: dict = field(default_factory=dict)
    importance_repeats: int = 10
    output_dir: str = None

    def __post_init__(self):
        self.variants = tuple(self.variants)
        self.horizons = tuple(float(h) for h in self.horizons)
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ValueError(f"unknown variant(s) {unknown}; choose from {VARIANTS}")
        if not self.variants:
            raise ValueError("manifest lists no variants")
        sources = {"toy", "prepared", "csv"} & set(self.data)
        if len(sources) != 1:
            raise ValueError("data must name exactly one of 'toy', 'prepared', 'csv'")
        if "csv" in self.data and "schema" not in self.data:
            raise ValueError("csv data needs a schema")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.synthetic < 0:
            raise ValueError("synthetic feature count must be nonnegative")
        for key in ("iterations", "ranking_iterations"):
            if int(self.search.get(key, 0)) < 0:
                raise ValueError(f"search.{key} must be nonnegative")

    @classmethod
    def from_dict(cls, data, base_dir=None):
        unknown = set(data) - _MANIFEST_KEYS
        if unknown:
            raise ValueError(f"unknown manifest key(s): {sorted(unknown)}")
        data = dict(data)
        if base_dir is not None:
            src = dict(data.get("data", {}))
            for key in ("prepared", "csv", "schema"):
                if key in src and not os.path.isabs(src[key]):
                    src[key] = os.path.join(base_dir, src[key])
            data["data"] = src
            out = data.get("output_dir")
            if out is not None and not os.path.isabs(out):
                data["output_dir"] = os.path.join(base_dir, out)
        return cls(**data)

    @classmethod
    def load(cls, path):
        """Read a JSON or TOML manifest; relative paths resolve against its folder."""
        data = read_schema(path)
        return cls.from_dict(data, os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        out = asdict(self)
        out["variants"] = list(self.variants)
        out["horizons"] = list(self.horizons)
        return out


@dataclass
class ExperimentResult:
    manifest: ExperimentManifest
    grids: dict            # variant -> per-fold CIndexGrid list
    base_params: dict      # fixed parameters after the β/σ stage
    best_params: dict      # variant -> fold-0 argmax sampled parameters
    search_log: pd.DataFrame
    rankings: pd.DataFrame
    timings: dict
    n_search_trials: int = 0
    n_final_trainings: int = 0
    failure: dict = None

    def grids_frame(self):
        frames = []
        for variant, grids in self.grids.items():
            for fold, grid in enumerate(grids):
                frame = grid.to_frame()
                frame.insert(0, "fold", fold)
                frame.insert(0, "variant", variant)
                frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=["variant", "fold", "event", "horizon", "value",
                                         "concordant", "comparable", "defined"])
        return pd.concat(frames, ignore_index=True)

    def summary(self):
        complete = {v: g for v, g in self.grids.items() if g}
        if not complete:
            return pd.DataFrame()
        return results_table(complete, BASELINE if BASELINE in complete else None)

    def event_scores(self, variant, k):
        """Per-fold mean C-index of event ``k`` over defined horizons."""
        return np.array([g.event_mean(k) for g in self.grids[variant]])


# ---------------------------------------------------------------------------
# Data

def load_manifest_data(manifest):
    """Build the (unnormalized) dataset a manifest describes."""
    src = manifest.data
    if "toy" in src:
        settings = dict(src["toy"])
        settings.setdefault("seed", derive_seed(manifest.seed, "toy"))
        d, _ = generate_toy_dataset(**settings)
    elif "prepared" in src:
        d, _ = load_dataset(src["prepared"])
    else:
        d = load_csv(src["csv"], read_schema(src["schema"]))
    if d.normalized:
        raise DataError("experiments normalize per fold; supply unnormalized data")
    if not d.imputed:
        d = impute(d)
    if not d.encoded:
        d = one_hot_encode(d)
    if manifest.synthetic:
        d = augment_synthetic(d, manifest.synthetic, derive_seed(manifest.seed, "synthetic"))
    return d


@dataclass
class FoldData:
    X_fit: np.ndarray
    y_fit: tuple
    X_val: np.ndarray
    y_val: tuple
    X_test: np.ndarray
    y_test: tuple
    normalization: object


def fold_data(d, plan, fold):
    """Normalize with statistics of the fold's training side only."""
    fit, val = plan.fit_validation(fold)
    test = plan.test_indices(fold)
    _, params = normalize(d.subset(plan.train_indices(fold)))
    X = params.apply(d.X)
    y = (d.time, d.event)
    return FoldData(X[fit], (y[0][fit], y[1][fit]), X[val], (y[0][val], y[1][val]),
                    X[test], (y[0][test], y[1][test]), params)


# ---------------------------------------------------------------------------
# Protocol

def _variant_space(variant, manifest):
    kind = "filter" if variant.startswith("filter") else variant
    space = SearchSpace.for_variant(kind)
    overrides = manifest.search.get("space", {})
    for name, values in overrides.items():
        if name in space.choices or name in ("beta", "sigma"):
            space.choices[name] = list(values)
    return space


def _ranking_space(manifest):
    space = SearchSpace.ranking()
    for name in ("beta", "sigma"):
        if name in manifest.search.get("space", {}):
            space.choices[name] = list(manifest.search["space"][name])
    return space


class _Experiment:
    def __init__(self, manifest):
        self.m = manifest
        self.timings = {}
        self.search_logs = []
        self.ranking_rows = []
        self.grids = {v: [] for v in manifest.variants}
        self.best = {}
        self.n_trials = 0
        self.n_final = 0
        self.stage = "setup"

    def _timed(self, key, fn, *args):
        start = time.perf_counter()
        out = fn(*args)
        self.timings[key] = self.timings.get(key, 0.0) + time.perf_counter() - start
        return out

    def base_model_params(self):
        params = {k: v for k, v in self.m.model.items() if k != "n_selected"}
        params["horizons"] = self.m.horizons
        params["num_events"] = self.d.num_events
        return params

    def rankings(self, variant, fold, fd):
        """Per-event score vectors feeding a filter-type variant, or None."""
        if variant.startswith("filter-"):
            method = variant[len("filter-"):]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ranks = rank_features(fd.X_fit, fd.y_fit, method, self.m.horizons,
                                      self.d.num_events,
                                      derive_seed(self.m.seed, "rank", method, fold),
                                      self.d.feature_names, **self.m.filter.get(method, {}))
            scores = [r.averaged for r in ranks]
        elif variant == "hybrid":
            model = make_model(self.base, {}, None, fd.X_fit.shape[1],
                               derive_seed(self.m.seed, "hybrid", fold))
            model.fit(fd.X_fit, fd.y_fit, fd.X_val, fd.y_val)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                reports = permutation_importances(
                    model, fd.X_val, fd.y_val, self.m.importance_repeats, self.m.horizons,
                    derive_seed(self.m.seed, "importance", fold))
            scores = [r.importances for r in reports]
        else:
            return None
        names = self.d.feature_names
        for k, s in enumerate(scores, start=1):
            for rank, j in enumerate(np.lexsort((np.arange(s.size), -s))):
                self.ranking_rows.append({"fold": fold, "variant": variant, "event": k,
                                          "rank": rank + 1, "feature": names[j],
                                          "score": float(s[j])})
        return scores

    def _search(self, stage, space, iterations, trial):
        result = run_search(space, trial, iterations, derive_seed(self.m.seed, "search", stage),
                            self.d.num_events, stage)
        self.n_trials += iterations
        self.search_logs.append(result.log)
        return result.best_params

    def run(self):
        self.stage = "data"
        self.d = self._timed("data", load_manifest_data, self.m)
        plan = kfold_split(self.d, self.m.folds, self.m.validation_fraction,
                           derive_seed(self.m.seed, "split"))
        self.base = self.base_model_params()
        fd0 = fold_data(self.d, plan, 0)
        D = fd0.X_fit.shape[1]

        n_rank = int(self.m.search.get("ranking_iterations", 0))
        if n_rank:
            self.stage = "search:ranking"

            def ranking_trial(params, seed):
                model = make_model(dict(self.base, variant="plain"), params, None, D, seed)
                return model.fit(fd0.X_fit, fd0.y_fit, fd0.X_val, fd0.y_val).validation_score_

            self.base.update(self._timed("search", self._search, "ranking",
                                         _ranking_space(self.m), n_rank, ranking_trial))

        n_iter = int(self.m.search.get("iterations", 0))
        fold_rankings = {}
        for variant in self.m.variants:
            self.stage = f"rank:{variant}:0"
            fold_rankings[(variant, 0)] = self._timed("ranking", self.rankings, variant, 0, fd0)
            fixed = self.fixed_params(variant)
            if n_iter:
                self.stage = f"search:{variant}"
                ranks = fold_rankings[(variant, 0)]

                def trial(params, seed, fixed=fixed, ranks=ranks):
                    model = make_model(fixed, params, ranks, D, seed)
                    return model.fit(fd0.X_fit, fd0.y_fit, fd0.X_val,
                                     fd0.y_val).validation_score_

                self.best[variant] = self._timed("search", self._search, variant,
                                                 _variant_space(variant, self.m), n_iter, trial)
            else:
                self.best[variant] = {}

        for fold in range(self.m.folds):
            fd = fd0 if fold == 0 else fold_data(self.d, plan, fold)
            for variant in self.m.variants:
                if (variant, fold) not in fold_rankings:
                    self.stage = f"rank:{variant}:{fold}"
                    fold_rankings[(variant, fold)] = self._timed("ranking", self.rankings,
                                                                 variant, fold, fd)
                self.stage = f"train:{variant}:{fold}"
                model = make_model(self.fixed_params(variant), self.best[variant],
                                   fold_rankings[(variant, fold)], D,
                                   derive_seed(self.m.seed, "final", variant, fold))
                self._timed("training", model.fit, fd.X_fit, fd.y_fit, fd.X_val, fd.y_val)
                self.n_final += 1
                grid = evaluate_predictions(model.predict_joint(fd.X_test), fd.y_test,
                                            model.config_, self.m.horizons)
                self.grids[variant].append(grid)
        self.stage = "done"

    def fixed_params(self, variant):
        params = dict(self.base)
        if variant == "sparse":
            params["variant"] = "sparse"
        elif variant.startswith("filter") or variant == "hybrid":
            params["n_selected"] = self.m.model.get("n_selected", 20)
        else:
            params["variant"] = "plain"
        return params

    def result(self, failure=None):
        log = (pd.concat(self.search_logs, ignore_index=True) if self.search_logs
               else pd.DataFrame(columns=["stage", "trial", "params", "statistic", "status"]))
        ranks = pd.DataFrame(self.ranking_rows,
                             columns=["fold", "variant", "event", "rank", "feature", "score"])
        return ExperimentResult(self.m, self.grids, dict(getattr(self, "base", {})), self.best,
                                log, ranks, dict(self.timings), self.n_trials, self.n_final,
                                failure)


def train_variant(manifest, variant, fold=0, params=None):
    """Train one variant on one fold with fixed hyperparameters (no search).

    Returns ``(model, fold_data, test_grid)``; ``params`` overrides the
    manifest's model settings.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if not 0 <= fold < manifest.folds:
        raise ValueError(f"fold must lie in [0, {manifest.folds})")
    exp = _Experiment(manifest)
    exp.d = load_manifest_data(manifest)
    exp.base = exp.base_model_params()
    plan = kfold_split(exp.d, manifest.folds, manifest.validation_fraction,
                       derive_seed(manifest.seed, "split"))
    fd = fold_data(exp.d, plan, fold)
    ranks = exp.rankings(variant, fold, fd)
    model = make_model(exp.fixed_params(variant), dict(params or {}), ranks,
                       fd.X_fit.shape[1], derive_seed(manifest.seed, "final", variant, fold))
    model.fit(fd.X_fit, fd.y_fit, fd.X_val, fd.y_val)
    grid = evaluate_predictions(model.predict_joint(fd.X_test), fd.y_test, model.config_,
                                manifest.horizons)
    return model, fd, grid


def run_experiment(manifest, output_dir=None):
    """Search on fold 0, then train and test every variant on every fold.

    The β/σ stage (if requested) runs on the plain model; its winner is fixed
    for the per-variant stage. Fold-0 winners are reused on all folds.
    Outputs are written to ``output_dir`` (default: the manifest's); on
    failure everything computed so far is written with a failure record and
    the error is re-raised.
    """
    output_dir = output_dir or manifest.output_dir
    exp = _Experiment(manifest)
    start = time.perf_counter()
    try:
        exp.run()
    except Exception as err:
        exp.timings["total"] = time.perf_counter() - start
        failure = {"stage": exp.stage, "type": type(err).__name__, "message": str(err)}
        if output_dir:
            write_outputs(exp.result(failure), output_dir)
        raise
    exp.timings["total"] = time.perf_counter() - start
    result = exp.result()
    if output_dir:
        write_outputs(result, output_dir)
    return result


def _versions():
    import scipy
    import sklearn
    return {"survsel": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__,
            "scikit-learn": sklearn.__version__}


def write_outputs(result, output_dir):
    """CSV outputs (deterministic) plus ``run_metadata.json`` (timings, versions)."""
    os.makedirs(output_dir, exist_ok=True)

    def csv(frame, name):
        frame.to_csv(os.path.join(output_dir, name), index=False)

    csv(result.grids_frame(), "grids.csv")
    csv(result.summary(), "summary.csv")
    csv(result.search_log, "search_log.csv")
    csv(result.rankings, "rankings.csv")
    rows = [{"variant": v, "name": k, "value": json.dumps(val)}
            for v, params in result.best_params.items()
            for k, val in sorted(dict(result.base_params, **params).items())
            if k not in ("horizons",)]
    csv(pd.DataFrame(rows, columns=["variant", "name", "value"]), "hyperparameters.csv")
    m = result.manifest
    meta = {
        "status": "failed" if result.failure else "ok",
        "failure": result.failure,
        "manifest": m.to_dict(),
        "versions": _versions(),
        "seeds": {"master": m.seed, "split": derive_seed(m.seed, "split"),
                  "synthetic": derive_seed(m.seed, "synthetic"),
                  "toy": m.data.get("toy", {}).get("seed", derive_seed(m.seed, "toy"))
                  if "toy" in m.data else None},
        "timings_seconds": result.timings,
        "search_trials": result.n_search_trials,
        "final_trainings": result.n_final_trainings,
        "folds_completed": {v: len(g) for v, g in result.grids.items()},
    }
    with open(os.path.join(output_dir, "run_metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=str)


# ---------------------------------------------------------------------------
# Degradation curves

def degradation_study(manifest, counts, variants=None, output_dir=None):
    """Rerun the protocol for each synthetic-feature count.

    Returns ``(curve, results)``: ``curve`` has one row per
    (count, variant, event) with the mean and sample SD over folds of the
    per-fold event C-index (averaged over horizons); ``results`` maps each
    count to its :class:`ExperimentResult`.
    """
    counts = [int(c) for c in counts]
    if any(b < a for a, b in zip(counts, counts[1:])):
        raise ValueError("synthetic counts must be nondecreasing")
    variants = tuple(variants or manifest.variants)
    output_dir = output_dir or manifest.output_dir
    rows, results = [], {}
    for count in counts:
        sub = replace(manifest, synthetic=count, variants=variants, output_dir=None)
        out = os.path.join(output_dir, f"synth{count}") if output_dir else None
        result = run_experiment(sub, out)
        results[count] = result
        K = max(c.event for c in result.grids[variants[0]][0].cells)
        for variant in variants:
            for k in range(1, K + 1):
                vals = result.event_scores(variant, k)
                vals = vals[np.isfinite(vals)]
                rows.append({"count": count, "variant": variant, "event": k,
                             "mean": float(vals.mean()) if vals.size else float("nan"),
                             "sd": float(vals.std(ddof=1)) if vals.size > 1 else float("nan")})
    curve = pd.DataFrame(rows, columns=["count", "variant", "event", "mean", "sd"])
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        curve.to_csv(os.path.join(output_dir, "degradation.csv"), index=False)
    return curve, results
