"""Filter feature scoring on time-fixed, cause-specific binary labels."""
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._random import make_rng
from ._validation import check_survival_target
from .exceptions import DegenerateLabelsError, NotNormalizedError

DEFAULT_HORIZONS = (12, 36, 60, 120)
PERFECT_SEPARATION_F = 1e300
METHODS = ("anova", "svm", "relieff")


@dataclass
class TimeFixedLabels:
    event: int
    horizon: float
    labels: np.ndarray

    @property
    def degenerate(self):
        return np.unique(self.labels).size < 2


def time_fixed_labels(y, k, horizon):
    """Label 1 iff the record had event ``k`` strictly before ``horizon``.

    ``y`` is a dataset, a structured ``(time, event)`` array or a 2-tuple.
    Censored records always get 0.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    time, event = check_survival_target(y)
    labels = ((time < horizon) & (event == k)).astype(np.int64)
    return TimeFixedLabels(int(k), float(horizon), labels)


def _labels_array(labels):
    lab = labels.labels if isinstance(labels, TimeFixedLabels) else np.asarray(labels)
    lab = lab.astype(np.int64)
    if np.unique(lab).size < 2:
        raise DegenerateLabelsError("time-fixed labels contain a single class")
    return lab


def _design(X):
    if hasattr(X, "X") and hasattr(X, "features"):
        return X.X
    return check_array(X, dtype=float)


def anova_score(X, labels):
    """Two-group one-way ANOVA F statistic and p-value for every feature.

    Zero within-group variance with nonzero between-group variance gets the
    finite sentinel ``PERFECT_SEPARATION_F``; constant features score 0.
    """
    X = _design(X)
    lab = _labels_array(labels)
    n = X.shape[0]
    grand = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for g in (0, 1):
        Xg = X[lab == g]
        mg = Xg.mean(axis=0)
        between += Xg.shape[0] * (mg - grand) ** 2
        within += ((Xg - mg) ** 2).sum(axis=0)
    ms_between = between / 1.0
    ms_within = within / (n - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = ms_between / ms_within
    constant = ~(between > 0)
    perfect = (within <= 0) & ~constant
    F = np.where(constant, 0.0, F)
    F = np.where(perfect, PERFECT_SEPARATION_F, F)
    pvalues = stats.f.sf(F, 1, n - 2)
    pvalues = np.where(constant, 1.0, pvalues)
    pvalues = np.where(perfect, 0.0, pvalues)
    return F, pvalues


def _check_standardized(X, tol=0.5):
    std = X.std(axis=0)
    live = std > 0
    if np.any(np.abs(X.mean(axis=0)) > tol) or np.any(
            (std[live] < 1 - tol) | (std[live] > 1 + 3 * tol)):
        raise NotNormalizedError("svm_score needs standardized features")


def svm_score(X, labels, reg=1e-4, epochs=100, seed=0, batch_size=32):
    """Absolute weights of a linear soft-margin SVM.

    Trained by mini-batch Pegasos subgradient steps with step size
    ``1 / (reg * t)`` and projection onto the ball of radius
    ``1 / sqrt(reg)``. The intercept is a constant input column. The
    returned weights are the average iterate over the second half of
    training.
    """
    X = _design(X)
    lab = _labels_array(labels)
    _check_standardized(X)
    y = np.where(lab == 1, 1.0, -1.0)
    n, p = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = make_rng(seed, "svm")
    w = np.zeros(p + 1)
    radius = 1.0 / np.sqrt(reg)
    n_steps = epochs * -(-n // batch_size)
    w_sum = np.zeros(p + 1)
    n_avg = 0
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            t += 1
            eta = 1.0 / (reg * t)
            active = y[idx] * (Xa[idx] @ w) < 1
            w = (1.0 - eta * reg) * w
            if active.any():
                w += eta * (y[idx][active] @ Xa[idx][active]) / idx.size
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            if 2 * t > n_steps:
                w_sum += w
                n_avg += 1
    return np.abs(w_sum[:p] / n_avg)


def relieff_score(X, labels, k_neighbors=10, sample_count=None, seed=0):
    """ReliefF weights for a binary target.

    For each sampled record the ``k`` nearest hits and misses (Euclidean,
    ties to the lower record index) move each weight by
    ``(diff(miss) - diff(hit)) / (m * k)`` with ``diff = |a - b| / range``.
    """
    X = _design(X)
    lab = _labels_array(labels)
    n, p = X.shape
    m = min(n, 1000) if sample_count is None else int(sample_count)
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if not 1 <= m <= n:
        raise ValueError("sample_count must lie in 1..n_records")
    span = X.max(axis=0) - X.min(axis=0)
    inv_span = np.divide(1.0, span, out=np.zeros(p), where=span > 0)

    counts = np.bincount(lab, minlength=2)
    k_hit = {c: min(k_neighbors, counts[c] - 1) for c in (0, 1)}
    k_miss = {c: min(k_neighbors, counts[1 - c]) for c in (0, 1)}
    for c in (0, 1):
        if k_hit[c] < k_neighbors or k_miss[c] < k_neighbors:
            warnings.warn(f"class {c}: fewer than {k_neighbors} neighbours available; "
                          f"using {k_hit[c]} hits and {k_miss[c]} misses")

    sampled = make_rng(seed, "relieff").permutation(n)[:m]
    sq = (X ** 2).sum(axis=1)
    weights = np.zeros(p)
    for start in range(0, m, 512):
        rows = sampled[start:start + 512]
        # rounding collapses float noise so equal distances tie-break by index
        dist = np.round(sq[rows, None] + sq[None, :] - 2.0 * (X[rows] @ X.T), 9)
        dist[np.arange(rows.size), rows] = np.inf
        for c in (0, 1):
            sel = lab[rows] == c
            if not sel.any():
                continue
            r = rows[sel]
            for target, k, sign in ((c, k_hit[c], -1.0), (1 - c, k_miss[c], 1.0)):
                if k <= 0:
                    continue
                dd = np.where(lab[None, :] == target, dist[sel], np.inf)
                nn = _nearest(dd, k)
                diff = np.abs(X[nn] - X[r][:, None, :]) * inv_span
                weights += sign * diff.sum(axis=(0, 1)) / (m * k)
    return weights


def _nearest(dist, k):
    """Column indices of the ``k`` smallest entries per row, ties to lower index."""
    thr = np.partition(dist, k - 1, axis=1)[:, k - 1:k]
    below = dist < thr
    equal = dist == thr
    need = k - below.sum(axis=1, keepdims=True)
    take = below | (equal & (np.cumsum(equal, axis=1) <= need))
    return np.nonzero(take)[1].reshape(dist.shape[0], k)


def score_features(X, labels, method, seed=0, **kwargs):
    """Dispatch to one filter; returns ``(scores, pvalues or None)``."""
    if method == "anova":
        return anova_score(X, labels)
    if method == "svm":
        return svm_score(X, labels, seed=seed, **kwargs), None
    if method == "relieff":
        return relieff_score(X, labels, seed=seed, **kwargs), None
    raise ValueError(f"unknown filter method {method!r}")


def average_over_horizons(scores, degenerate=None):
    """Mean score per feature over the non-degenerate horizons."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if degenerate is None:
        degenerate = np.zeros(scores.shape[0], dtype=bool)
    degenerate = np.asarray(degenerate, dtype=bool)
    if degenerate.all():
        raise DegenerateLabelsError("every horizon is degenerate")
    if degenerate.any():
        warnings.warn(f"excluding {int(degenerate.sum())} degenerate horizon(s) from the mean")
    return scores[~degenerate].mean(axis=0)


@dataclass
class FeatureRanking:
    """Per-horizon and horizon-averaged scores of one method for one event."""

    method: str
    event: int
    horizons: tuple
    per_horizon: np.ndarray   # (H, D); NaN rows for degenerate horizons
    averaged: np.ndarray      # (D,)
    pvalues: np.ndarray = None
    feature_names: list = None

    def order(self):
        return ranking_order(self.averaged)

    def to_frame(self):
        names = self.feature_names or [f"x{j}" for j in range(self.averaged.size)]
        order = self.order()
        rows = []
        for rank, j in enumerate(order, start=1):
            row = {"rank": rank, "feature": names[j], "method": self.method,
                   "event": self.event}
            for h, s in zip(self.horizons, self.per_horizon[:, j]):
                row[f"score_{h:g}"] = s
            row["averaged_score"] = self.averaged[j]
            if self.pvalues is not None:
                row["p_value"] = np.nanmean(self.pvalues[:, j])
            rows.append(row)
        return pd.DataFrame(rows)


def ranking_order(scores):
    """Indices by descending score, ties to the lower index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(scores.size), -scores))


def rank_features(X, y, method, horizons=DEFAULT_HORIZONS, num_events=None, seed=0,
                  feature_names=None, **kwargs):
    """Score features for every event over ``horizons``; one ranking per event."""
    Xd = _design(X)
    time, event = check_survival_target(y)
    if num_events is None:
        num_events = int(event.max())
    rankings = []
    for k in range(1, num_events + 1):
        per_h = np.full((len(horizons), Xd.shape[1]), np.nan)
        pvals = np.full_like(per_h, np.nan) if method == "anova" else None
        degenerate = np.zeros(len(horizons), dtype=bool)
        for h, horizon in enumerate(horizons):
            labels = time_fixed_labels((time, event), k, horizon)
            if labels.degenerate:
                degenerate[h] = True
                continue
            scores, p = score_features(Xd, labels, method, seed=seed, **kwargs)
            per_h[h] = scores
            if pvals is not None:
                pvals[h] = p
        averaged = average_over_horizons(np.nan_to_num(per_h), degenerate)
        rankings.append(FeatureRanking(method, k, tuple(horizons), per_h, averaged,
                                       pvals, feature_names))
    return rankings


@dataclass
class FeatureSelection:
    per_event: tuple  # sorted index arrays v_k
    shared: np.ndarray  # sorted intersection v_s
    n_selected: tuple

    @property
    def shared_absent(self):
        return self.shared.size == 0

    @property
    def num_events(self):
        return len(self.per_event)

    def union(self):
        return np.unique(np.concatenate(self.per_event))

    def to_dict(self):
        return {"per_event": [v.tolist() for v in self.per_event],
                "shared": self.shared.tolist(), "n_selected": list(self.n_selected)}

    @classmethod
    def from_dict(cls, data):
        per_event = tuple(np.asarray(v, dtype=np.int64) for v in data["per_event"])
        return cls(per_event, np.asarray(data["shared"], dtype=np.int64),
                   tuple(data["n_selected"]))

    @classmethod
    def from_sets(cls, per_event):
        per_event = tuple(np.unique(np.asarray(v, dtype=np.int64)) for v in per_event)
        shared = per_event[0]
        for v in per_event[1:]:
            shared = np.intersect1d(shared, v)
        return cls(per_event, shared, tuple(v.size for v in per_event))


def select_features(rankings, m):
    """Top-``m_k`` features per event and their shared intersection.

    ``rankings`` holds one score vector (or :class:`FeatureRanking`) per event;
    ``m`` is an int or one size per event.
    """
    scores = [r.averaged if isinstance(r, FeatureRanking) else np.asarray(r, dtype=float)
              for r in rankings]
    sizes = [int(m)] * len(scores) if np.isscalar(m) else [int(v) for v in m]
    if len(sizes) != len(scores):
        raise ValueError("need one selection size per event")
    per_event = []
    for s, mk in zip(scores, sizes):
        if not 0 <= mk <= s.size:
            raise ValueError(f"cannot select {mk} of {s.size} features")
        per_event.append(np.sort(ranking_order(s)[:mk]))
    selection = FeatureSelection.from_sets(per_event)
    if selection.shared_absent:
        warnings.warn("no feature is selected for every event; the shared sub-network is dropped")
    return selection


class FilterSelector(SelectorMixin, BaseEstimator):
    """Per-event filter feature selection for competing-risks targets.

    ``transform`` keeps the union of the per-event selections; the per-event
    sets themselves are in ``selection_``.
    """

    def __init__(self, method="anova", n_select=20, horizons=DEFAULT_HORIZONS,
                 num_events=None, random_state=0, method_params=None):
        self.method = method
        self.n_select = n_select
        self.horizons = horizons
        self.num_events = num_events
        self.random_state = random_state
        self.method_params = method_params

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        self.n_features_in_ = X.shape[1]
        self.rankings_ = rank_features(X, y, self.method, self.horizons, self.num_events,
                                       seed=self.random_state, **(self.method_params or {}))
        self.scores_ = np.vstack([r.averaged for r in self.rankings_])
        sizes = self.n_select
        if np.isscalar(sizes):
            sizes = min(int(sizes), X.shape[1])
        self.selection_ = select_features(self.rankings_, sizes)
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selection_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selection_.union()] = True
        return mask
