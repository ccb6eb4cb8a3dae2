"""Cause-specific time-dependent C-index and permutation importance."""
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._random import derive_seed, make_rng
from ._validation import check_survival_target
from .filters import DEFAULT_HORIZONS, ranking_order
from .network import cif_curves, map_horizon_to_bin


@dataclass
class CIndexResult:
    event: int
    horizon: float
    concordant: float
    comparable: int
    value: float

    @property
    def defined(self):
        return self.comparable > 0


def c_index(risk, y, k, horizon):
    """Estimate ``P(F(h|x_i) > F(h|x_j) | t_i < t_j, event_i = k, t_i < h)``.

    ``risk`` holds each record's predicted CIF of event ``k`` at the horizon.
    Prediction ties earn half credit. With no comparable pair the value is
    NaN and ``defined`` is False.
    """
    risk = np.asarray(risk, dtype=float)
    time, event = check_survival_target(y)
    anchors = np.flatnonzero((event == k) & (time < horizon))
    twice_concordant = 0
    comparable = 0
    for start in range(0, anchors.size, 1024):
        i = anchors[start:start + 1024]
        later = time[None, :] > time[i][:, None]
        higher = risk[i][:, None] > risk[None, :]
        tied = risk[i][:, None] == risk[None, :]
        twice_concordant += 2 * int((later & higher).sum()) + int((later & tied).sum())
        comparable += int(later.sum())
    if comparable == 0:
        return CIndexResult(int(k), float(horizon), 0.0, 0, float("nan"))
    concordant = twice_concordant / 2
    return CIndexResult(int(k), float(horizon), concordant, comparable,
                        concordant / comparable)


@dataclass
class CIndexGrid:
    cells: list  # CIndexResult, events outer, horizons inner

    @property
    def mean(self):
        """Mean over defined cells (NaN when none is defined)."""
        values = [c.value for c in self.cells if c.defined]
        return float(np.mean(values)) if values else float("nan")

    @property
    def n_undefined(self):
        return sum(not c.defined for c in self.cells)

    def value(self, k, horizon):
        for c in self.cells:
            if c.event == k and c.horizon == horizon:
                return c.value
        raise KeyError((k, horizon))

    def event_mean(self, k):
        values = [c.value for c in self.cells if c.event == k and c.defined]
        return float(np.mean(values)) if values else float("nan")

    def to_frame(self):
        return pd.DataFrame([{"event": c.event, "horizon": c.horizon, "value": c.value,
                              "concordant": c.concordant, "comparable": c.comparable,
                              "defined": c.defined} for c in self.cells])


def risk_at_horizons(P, config, horizons):
    """Predicted CIFs at each horizon, shape ``(N, K, H)``."""
    curves = cif_curves(P)
    bins = [map_horizon_to_bin(h, config)[0] for h in horizons]
    return curves[:, :, bins]


def evaluate_predictions(P, y, config, horizons=DEFAULT_HORIZONS):
    risks = risk_at_horizons(P, config, horizons)
    return _grid_from_risks(risks, y, horizons)


def _grid_from_risks(risks, y, horizons):
    cells = []
    for k in range(1, risks.shape[1] + 1):
        for h, horizon in enumerate(horizons):
            cells.append(c_index(risks[:, k - 1, h], y, k, horizon))
    return CIndexGrid(cells)


def evaluate(model, X, y, horizons=DEFAULT_HORIZONS):
    """C-index for every event and horizon plus the mean over defined cells."""
    grid = evaluate_predictions(model.predict_joint(X), y, model.config_, horizons)
    if grid.n_undefined:
        warnings.warn(f"{grid.n_undefined} C-index cell(s) undefined; excluded from the mean")
    return grid


# ---------------------------------------------------------------------------
# Permutation importance

def _permutation(n, seed, feature, repeat):
    return make_rng(derive_seed(seed, "permutation", feature, repeat)).permutation(n)


def _importance_all_events(model, X, y, feature, n_repeats, horizons, seed,
                           permutations=None):
    """Importance of one feature for every event: array of shape ``(K,)``."""
    X = np.asarray(X, dtype=float)
    base = risk_at_horizons(model.predict_joint(X), model.config_, horizons)
    K = base.shape[1]
    base_grid = _grid_from_risks(base, y, horizons)
    diffs = [[[] for _ in horizons] for _ in range(K)]
    column = X[:, feature]
    for r in range(n_repeats):
        perm = (permutations[r] if permutations is not None
                else _permutation(X.shape[0], seed, feature, r))
        shuffled = column[perm]
        if np.array_equal(shuffled, column):
            for k in range(K):
                for h in range(len(horizons)):
                    diffs[k][h].append(0.0)
            continue
        Xp = X.copy()
        Xp[:, feature] = shuffled
        grid = _grid_from_risks(risk_at_horizons(model.predict_joint(Xp), model.config_,
                                                 horizons), y, horizons)
        for k in range(1, K + 1):
            for h, horizon in enumerate(horizons):
                before = base_grid.value(k, horizon)
                after = grid.value(k, horizon)
                if np.isfinite(before) and np.isfinite(after):
                    diffs[k - 1][h].append(before - after)
    out = np.zeros(K)
    for k in range(K):
        kept = [np.mean(d) for d in diffs[k] if d]
        if len(kept) < len(horizons):
            warnings.warn(f"event {k + 1}: {len(horizons) - len(kept)} horizon(s) with "
                          "undefined C-index excluded from the importance")
        out[k] = np.mean(kept) if kept else 0.0
    return out


def permutation_importance(model, X, y, feature, n_repeats=10, horizons=DEFAULT_HORIZONS,
                           k=1, seed=0, permutations=None):
    """Mean drop in event-``k`` C-index when one column is shuffled.

    Averages ``baseline - permuted`` over horizons and ``n_repeats`` seeded
    permutations. ``permutations`` overrides the seeded draws.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    if permutations is not None:
        n_repeats = len(permutations)
    return float(_importance_all_events(model, X, y, feature, n_repeats, horizons, seed,
                                        permutations)[k - 1])


@dataclass
class ImportanceReport:
    event: int
    n_repeats: int
    importances: np.ndarray
    feature_names: list = None

    def order(self):
        return ranking_order(self.importances)

    def to_frame(self):
        names = self.feature_names or [f"x{j}" for j in range(self.importances.size)]
        return pd.DataFrame([{"feature": names[j], "importance": self.importances[j]}
                             for j in self.order()])


def permutation_importances(model, X, y, n_repeats=10, horizons=DEFAULT_HORIZONS, seed=0,
                            feature_names=None):
    """One :class:`ImportanceReport` per event covering every feature."""
    X = np.asarray(X, dtype=float)
    table = np.vstack([_importance_all_events(model, X, y, j, n_repeats, horizons, seed)
                       for j in range(X.shape[1])])
    return [ImportanceReport(k + 1, n_repeats, table[:, k], feature_names)
            for k in range(table.shape[1])]


def hybrid_select(model, X, y, m, n_repeats=10, horizons=DEFAULT_HORIZONS, seed=0):
    """Select the top ``m_k`` features per event by permutation importance.

    Returns ``(selection, reports)``; the selection feeds a filter-variant
    retrain.
    """
    from .filters import select_features

    reports = permutation_importances(model, X, y, n_repeats, horizons, seed)
    return select_features([r.importances for r in reports], m), reports


# ---------------------------------------------------------------------------
# Reporting

def grids_frame(grids, variant=None, fold=None):
    frames = []
    for f, grid in enumerate(grids):
        frame = grid.to_frame()
        frame.insert(0, "fold", f if fold is None else fold)
        if variant is not None:
            frame.insert(0, "variant", variant)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def results_table(per_variant, baseline=None):
    """Mean, sample SD over folds and difference to ``baseline`` per cell.

    ``per_variant`` maps a variant name to its list of per-fold grids.
    """
    rows = []
    means = {}
    for variant, grids in per_variant.items():
        frame = grids_frame(grids)
        for (horizon, event), cell in frame.groupby(["horizon", "event"]):
            vals = cell["value"].to_numpy(float)
            vals = vals[np.isfinite(vals)]
            mean = float(vals.mean()) if vals.size else float("nan")
            sd = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
            means[(variant, horizon, event)] = mean
            rows.append({"horizon": horizon, "variant": variant, "event": event,
                         "mean": mean, "sd": sd, "n_folds": int(vals.size)})
    table = pd.DataFrame(rows)
    if baseline is not None and baseline in per_variant:
        table["delta"] = [r["mean"] - means[(baseline, r["horizon"], r["event"])]
                          for _, r in table.iterrows()]
    wide = table.pivot_table(index=["horizon", "variant"], columns="event",
                             values=[c for c in ("mean", "sd", "delta") if c in table],
                             dropna=False)
    stats = ("mean", "sd", "delta")
    wide.columns = [f"event{e}_{stat}" for stat, e in wide.columns]
    ordered = sorted(wide.columns, key=lambda c: (int(c[5:c.index("_")]),
                                                  stats.index(c[c.index("_") + 1:])))
    wide = wide[ordered].reset_index()
    rank = {v: i for i, v in enumerate(per_variant)}
    wide["_order"] = wide["variant"].map(rank)
    return wide.sort_values(["horizon", "_order"]).drop(columns="_order").reset_index(drop=True)
