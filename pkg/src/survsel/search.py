"""Random hyperparameter search over discrete grids."""
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._random import derive_seed, make_rng
from .exceptions import NumericalError

RANKING_GRID = {"beta": [0.1, 0.3, 1, 3, 10], "sigma": [0.1, 0.3, 1, 3, 10]}
PLAIN_GRID = {
    "n_shared_layers": [1, 2, 3], "shared_width": [50, 100, 200],
    "n_cause_layers": [1, 2, 3], "cause_width": [50, 100, 200],
}
EXTENSION_GRID = {
    "n_shared_layers": [1, 2], "shared_width": [50, 100],
    "n_cause_layers": [1, 2], "cause_width": [50, 100],
}
SELECTION_GRID = {"n_selected": [20, 40, 60]}
SPARSITY_GRID = {"gamma": [1e-5, 1e-4, 1e-3]}
PER_EVENT = frozenset({"n_selected", "gamma"})


@dataclass
class SearchSpace:
    """Discrete choice sets; names in ``per_event`` are drawn once per event."""

    choices: dict
    per_event: frozenset = field(default=PER_EVENT)

    def __post_init__(self):
        for name, values in self.choices.items():
            if len(values) == 0:
                raise ValueError(f"empty choice set for {name!r}")

    def sample(self, rng, num_events=1):
        out = {}
        for name, values in self.choices.items():
            if name in self.per_event:
                out[name] = [values[int(i)] for i in rng.integers(len(values), size=num_events)]
            else:
                out[name] = values[int(rng.integers(len(values)))]
        return out

    @classmethod
    def ranking(cls):
        return cls(dict(RANKING_GRID))

    @classmethod
    def for_variant(cls, variant):
        """Architecture grid (plus selection size or L1 weights) for a variant."""
        if variant == "plain":
            return cls(dict(PLAIN_GRID))
        choices = dict(EXTENSION_GRID)
        if variant == "sparse":
            choices.update(SPARSITY_GRID)
        elif variant.startswith("filter") or variant == "hybrid":
            choices.update(SELECTION_GRID)
        else:
            raise ValueError(f"unknown variant {variant!r}")
        return cls(choices)


@dataclass
class SearchResult:
    best_params: dict
    best_score: float
    best_trial: int
    log: pd.DataFrame


def run_search(space, trial_fn, iterations, seed, num_events=1, stage="search"):
    """Evaluate ``iterations`` independent draws; highest score wins.

    ``trial_fn(params, trial_seed)`` returns the validation statistic. Trials
    that raise :class:`NumericalError` are logged as failed and skipped.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = make_rng(seed, "search", stage)
    rows = []
    best = (-math.inf, None, None)
    for trial in range(iterations):
        params = space.sample(rng, num_events)
        trial_seed = derive_seed(seed, "trial", stage, trial)
        try:
            score = float(trial_fn(params, trial_seed))
            status = "ok" if math.isfinite(score) else "undefined"
        except NumericalError as err:
            warnings.warn(f"trial {trial} failed: {err}")
            score, status = float("nan"), "failed"
        rows.append({"stage": stage, "trial": trial,
                     "params": json.dumps(params, sort_keys=True),
                     "statistic": score, "status": status})
        if status == "ok" and score > best[0]:
            best = (score, trial, params)
    if best[2] is None:
        raise NumericalError(f"every trial of stage {stage!r} failed")
    return SearchResult(best[2], best[0], best[1], pd.DataFrame(rows))


def random_search(space, X_fit, y_fit, X_val, y_val, iterations, seed=0, base_params=None,
                  rankings=None, num_events=None):
    """Search ``space`` by training :class:`CompetingRisksNet` on ``(X_fit, y_fit)``.

    ``base_params`` fixes everything not searched. For filter-type variants
    pass the per-event ``rankings``; a sampled ``n_selected`` then picks the
    top features per event.
    """
    from ._validation import check_survival_target

    K = num_events or int(max(check_survival_target(y_fit)[1].max(),
                              check_survival_target(y_val)[1].max()))

    def trial(params, trial_seed):
        model = make_model(base_params, params, rankings, X_fit.shape[1], trial_seed)
        model.fit(X_fit, y_fit, X_val, y_val)
        return model.validation_score_

    return run_search(space, trial, iterations, seed, K)


def make_model(base_params, sampled, rankings, n_features, random_state):
    """Build an unfitted estimator from fixed and sampled hyperparameters."""
    from .estimator import CompetingRisksNet
    from .filters import select_features

    params = dict(base_params or {})
    params.update(sampled)
    n_selected = params.pop("n_selected", None)
    if rankings is not None:
        sizes = n_selected if n_selected is not None else 20
        if np.isscalar(sizes):
            sizes = [sizes] * len(rankings)
        sizes = [min(int(s), n_features) for s in sizes]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params["selection"] = select_features(rankings, sizes)
        params["variant"] = "filter"
    if isinstance(params.get("gamma"), list):
        params["gamma"] = tuple(params["gamma"])
    params["random_state"] = random_state
    return CompetingRisksNet(**params)
