"""Competing-risks survival data: loading, preprocessing, splitting, synthesis.

Censoring is encoded as ``event == 0``; events are labelled ``1..K``.
Preprocessing must run in the order impute -> one_hot_encode -> normalize.
"""
import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from ._random import make_rng
from .exceptions import DataError, PipelineOrderError

KINDS = ("numeric", "binary", "categorical")
ORIGINS = ("original", "one-hot-derived", "synthetic")


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: str = "numeric"
    origin: str = "original"
    parent: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown feature origin {self.origin!r}")
        if self.origin == "one-hot-derived" and not self.parent:
            raise ValueError(f"one-hot feature {self.name!r} needs a parent")

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "origin": self.origin,
                "parent": self.parent}


@dataclass(frozen=True)
class SurvivalRecord:
    covariates: np.ndarray
    time: float
    event: int


@dataclass
class SurvivalDataset:
    """Covariates plus per-record ``(time, event)`` and feature metadata.

    ``frame`` holds one column per feature. Before encoding, categorical
    columns hold strings and missing cells are NaN/None.
    """

    frame: pd.DataFrame
    time: np.ndarray
    event: np.ndarray
    features: list
    num_events: int
    imputed: bool = False
    encoded: bool = False
    normalized: bool = False
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=np.int64)
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if list(self.frame.columns) != names:
            raise DataError("frame columns do not match feature metadata")
        n = len(self.frame)
        if self.time.shape != (n,) or self.event.shape != (n,):
            raise DataError("time/event length does not match record count")
        if n and (np.any(~np.isfinite(self.time)) or np.any(self.time < 0)):
            raise DataError("times must be finite and nonnegative")
        if n and (self.event.min() < 0 or self.event.max() > self.num_events):
            raise DataError(f"event labels must lie in 0..{self.num_events}")

    @property
    def n_records(self):
        return len(self.frame)

    @property
    def n_features(self):
        return len(self.features)

    @property
    def feature_names(self):
        return [f.name for f in self.features]

    @property
    def X(self):
        if any(f.kind == "categorical" for f in self.features):
            raise PipelineOrderError("categorical features must be one-hot encoded first")
        return self.frame.to_numpy(dtype=float)

    @property
    def y(self):
        return make_target(self.time, self.event)

    def record(self, i):
        return SurvivalRecord(self.X[i], float(self.time[i]), int(self.event[i]))

    def missing_mask(self):
        return self.frame.isna().to_numpy()

    def subset(self, indices):
        indices = np.asarray(indices)
        return replace(
            self,
            frame=self.frame.iloc[indices].reset_index(drop=True),
            time=self.time[indices],
            event=self.event[indices],
            notes=list(self.notes),
        )


def make_target(time, event):
    """Pack times and event labels into a structured array ``(time, event)``."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=np.int64)
    y = np.empty(time.shape[0], dtype=[("time", "f8"), ("event", "i8")])
    y["time"] = time
    y["event"] = event
    return y


def from_arrays(X, time, event, num_events=None, names=None, kinds=None):
    X = np.asarray(X, dtype=float)
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    if kinds is None:
        kinds = ["numeric"] * X.shape[1]
    event = np.asarray(event, dtype=np.int64)
    if num_events is None:
        num_events = int(event.max()) if event.size else 1
    features = [FeatureMeta(n, k) for n, k in zip(names, kinds)]
    frame = pd.DataFrame(X, columns=list(names))
    return SurvivalDataset(frame, time, event, features, num_events,
                           imputed=not np.isnan(X).any(), encoded=True)


# ---------------------------------------------------------------------------
# CSV ingestion

def read_schema(path):
    """Read a JSON or TOML file (schemas, manifests)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".toml"):
        return _toml_loads(raw.decode("utf-8"))
    return json.loads(raw)


def _toml_loads(text):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


def load_csv(path, schema):
    """Parse a CSV file into a raw (unimputed, unencoded) dataset.

    ``schema`` maps ``columns`` to roles ``numeric | binary | categorical |
    time | event``; ``num_events`` is optional and otherwise inferred.
    """
    if not isinstance(schema, dict):
        schema = read_schema(schema)
    roles = dict(schema.get("columns", {}))
    bad = {r for r in roles.values() if r not in KINDS + ("time", "event")}
    if bad:
        raise DataError(f"unknown column roles: {sorted(bad)}")
    time_cols = [c for c, r in roles.items() if r == "time"]
    event_cols = [c for c, r in roles.items() if r == "event"]
    if len(time_cols) != 1 or len(event_cols) != 1:
        raise DataError("schema needs exactly one time and one event column")
    num_events = schema.get("num_events")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        unnamed = [c for c in header if c not in roles]
        if unnamed:
            raise DataError(f"schema does not name columns {unnamed}")
        missing = [c for c in roles if c not in header]
        if missing:
            raise DataError(f"columns {missing} not found in {path}")
        rows = []
        for row_index, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {row_index}: expected {len(header)} fields, got {len(row)}",
                    row=row_index)
            rows.append(row)

    feature_cols = [c for c in header if roles[c] in KINDS]
    pos = {c: i for i, c in enumerate(header)}
    times = np.empty(len(rows))
    events = np.empty(len(rows), dtype=np.int64)
    data = {c: [] for c in feature_cols}
    for row_index, row in enumerate(rows):
        t_raw = row[pos[time_cols[0]]].strip()
        e_raw = row[pos[event_cols[0]]].strip()
        try:
            times[row_index] = float(t_raw)
        except ValueError:
            raise DataError(f"row {row_index}: bad time {t_raw!r}", row=row_index) from None
        if not math.isfinite(times[row_index]) or times[row_index] < 0:
            raise DataError(f"row {row_index}: time must be nonnegative, got {t_raw}",
                            row=row_index)
        try:
            events[row_index] = int(float(e_raw))
            if float(e_raw) != events[row_index]:
                raise ValueError
        except ValueError:
            raise DataError(f"row {row_index}: bad event label {e_raw!r}",
                            row=row_index) from None
        for c in feature_cols:
            cell = row[pos[c]].strip()
            if cell == "":
                data[c].append(None if roles[c] == "categorical" else np.nan)
            elif roles[c] == "categorical":
                data[c].append(cell)
            else:
                try:
                    data[c].append(float(cell))
                except ValueError:
                    raise DataError(f"row {row_index}: non-numeric value {cell!r} in {c}",
                                    row=row_index, column=c) from None

    if num_events is None:
        num_events = int(events.max()) if len(events) else 1
    for row_index, e in enumerate(events):
        if e < 0 or e > num_events:
            raise DataError(
                f"row {row_index}: event label {e} outside 0..{num_events}", row=row_index)

    frame = pd.DataFrame({c: pd.Series(data[c], dtype=object if roles[c] == "categorical"
                                       else float) for c in feature_cols},
                         columns=feature_cols)
    features = [FeatureMeta(c, roles[c]) for c in feature_cols]
    return SurvivalDataset(frame, times, events, features, int(num_events))


# ---------------------------------------------------------------------------
# Preprocessing

def impute(d):
    """Fill missing cells: mean for numeric, mode for binary/categorical.

    Mode ties go to the lowest value (lexicographically first level).
    """
    if d.imputed:
        raise PipelineOrderError("dataset is already imputed")
    frame = d.frame.copy()
    for f in d.features:
        col = frame[f.name]
        observed = col.dropna()
        if observed.empty:
            raise DataError(f"column {f.name!r} is entirely missing", column=f.name)
        if not col.isna().any():
            continue
        if f.kind == "numeric":
            fill = float(observed.astype(float).mean())
        else:
            counts = observed.value_counts()
            top = counts[counts == counts.max()].index
            fill = sorted(top)[0]
        frame[f.name] = col.where(col.notna(), fill)
        if f.kind != "categorical":
            frame[f.name] = frame[f.name].astype(float)
    return replace(d, frame=frame, imputed=True, notes=list(d.notes))


def one_hot_encode(d):
    """Replace each categorical column by one binary column per level."""
    if not d.imputed:
        raise PipelineOrderError("impute before encoding")
    if d.encoded:
        raise PipelineOrderError("dataset is already encoded")
    columns, features, notes = {}, [], list(d.notes)
    for f in d.features:
        col = d.frame[f.name]
        if f.kind != "categorical":
            columns[f.name] = col.astype(float)
            features.append(f)
            continue
        levels = sorted(col.astype(str).unique())
        if len(levels) == 1:
            msg = f"categorical column {f.name!r} has a single level {levels[0]!r}"
            warnings.warn(msg)
            notes.append(msg)
        for level in levels:
            name = f"{f.name}_{level}"
            columns[name] = (col.astype(str) == level).astype(float)
            features.append(FeatureMeta(name, "binary", "one-hot-derived", f.name))
    names = [f.name for f in features]
    if len(set(names)) != len(names):
        raise DataError("one-hot encoding produced duplicate column names")
    frame = pd.DataFrame(columns, columns=names)
    return replace(d, frame=frame, features=features, encoded=True, notes=notes)


@dataclass
class NormalizationParams:
    names: list
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    def to_dict(self):
        return {"names": list(self.names), "mean": self.mean.tolist(),
                "scale": self.scale.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(list(data["names"]), np.asarray(data["mean"], dtype=float),
                   np.asarray(data["scale"], dtype=float),
                   np.asarray(data["constant"], dtype=bool))

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        return (X - self.mean) / self.scale


def fit_normalization(X, names=None):
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = ~(std > 0)
    scale = np.where(constant, 1.0, std)
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    return NormalizationParams(list(names), mean, scale, constant)


def normalize(d, params=None):
    """Standardize columns with population statistics.

    Pass ``params`` from a training fold to transform a test fold; they are
    never recomputed. Returns ``(dataset, params)``.
    """
    if not (d.imputed and d.encoded):
        raise PipelineOrderError("impute and encode before normalizing")
    if d.normalized:
        raise PipelineOrderError("dataset is already normalized")
    X = d.X
    if params is None:
        params = fit_normalization(X, d.feature_names)
    elif list(params.names) != d.feature_names:
        raise DataError("normalization parameters do not match dataset features")
    frame = pd.DataFrame(params.apply(X), columns=d.feature_names)
    return replace(d, frame=frame, normalized=True, notes=list(d.notes)), params


def augment_synthetic(d, n_synth, seed):
    """Append ``n_synth`` pure-noise binary columns.

    Column ``j`` draws ``p_j ~ U[0, 1]`` and then every record's value
    independently from ``Bernoulli(p_j)``.
    """
    if n_synth < 0:
        raise ValueError("n_synth must be nonnegative")
    if d.normalized:
        raise PipelineOrderError("augment before normalizing")
    if n_synth == 0:
        return d
    rng = make_rng(seed, "synthetic")
    p = rng.uniform(0.0, 1.0, size=n_synth)
    values = (rng.random((d.n_records, n_synth)) < p).astype(float)
    taken = set(d.feature_names)
    names, j = [], 0
    while len(names) < n_synth:
        name = f"synth{j}"
        if name not in taken:
            names.append(name)
        j += 1
    extra = pd.DataFrame(values, columns=names)
    frame = pd.concat([d.frame.reset_index(drop=True), extra], axis=1)
    features = list(d.features) + [FeatureMeta(n, "binary", "synthetic") for n in names]
    return replace(d, frame=frame, features=features, notes=list(d.notes))


# ---------------------------------------------------------------------------
# Splitting

@dataclass
class SplitPlan:
    fold_assignments: np.ndarray
    validation_fraction: float
    seed: int
    n_folds: int

    def test_indices(self, fold):
        return np.flatnonzero(self.fold_assignments == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.fold_assignments != fold)

    def fit_validation(self, fold):
        """Split the training side of ``fold`` into (fit, validation) indices."""
        train = self.train_indices(fold)
        rng = make_rng(self.seed, "validation", fold)
        order = rng.permutation(train.size)
        n_val = int(round(self.validation_fraction * train.size))
        n_val = min(max(n_val, 1), train.size - 1)
        val = np.sort(train[order[:n_val]])
        fit = np.sort(train[order[n_val:]])
        return fit, val


def kfold_split(d, folds, validation_fraction=0.2, seed=0):
    n = d if isinstance(d, (int, np.integer)) else d.n_records
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > n:
        raise ValueError(f"{folds} folds exceed {n} records")
    if not 0 < validation_fraction < 1:
        raise ValueError("validation_fraction must lie in (0, 1)")
    order = make_rng(seed, "folds").permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(order, folds)):
        assignments[chunk] = f
    return SplitPlan(assignments, float(validation_fraction), int(seed), int(folds))


# ---------------------------------------------------------------------------
# Toy data with known ground truth

@dataclass
class ToyGroundTruth:
    relevant: np.ndarray
    coefficients: np.ndarray  # (K, n_relevant), aligned with ``relevant``
    baseline: np.ndarray      # (K,) per-month logits
    time_grid: np.ndarray     # months 1..n_bins
    cif: np.ndarray           # (N, K, n_bins); cif[i, k, m-1] = P(time <= m, event = k+1)


def generate_toy_dataset(n_records=2000, n_relevant=5, n_noise=50, num_events=2,
                         censoring_rate=0.3, seed=0, n_bins=120, effect_size=3.0,
                         baseline=None):
    """Simulate competing-risks data from monthly multinomial-logit hazards.

    Each month a record still at risk experiences event ``k`` with
    probability ``exp(a_k + x_rel @ b_k) / (1 + sum_j exp(a_j + x_rel @ b_j))``;
    anyone still at risk in the final month is assigned an event there.
    Event times are month midpoints. Censoring times are exponential and
    independent, with the rate tuned so the censored fraction matches
    ``censoring_rate``. Returns ``(dataset, ToyGroundTruth)``.
    """
    if n_relevant < 1 or num_events < 1:
        raise ValueError("need n_relevant >= 1 and num_events >= 1")
    if not 0 <= censoring_rate < 1:
        raise ValueError("censoring_rate must lie in [0, 1)")
    rng = make_rng(seed, "toy")
    n_features = n_relevant + n_noise
    X = rng.standard_normal((n_records, n_features))
    relevant = np.sort(rng.permutation(n_features)[:n_relevant])

    if baseline is None:
        baseline = np.array([-4.0 - 0.5 * k for k in range(num_events)])
    baseline = np.asarray(baseline, dtype=float)
    magnitude = rng.uniform(0.5, 1.0, size=(num_events, n_relevant))
    signs = rng.choice([-1.0, 1.0], size=(num_events, n_relevant))
    # competing events get half-strength effects so event 1 dominates
    strength = np.where(np.arange(num_events) == 0, 1.0, 0.5)[:, None]
    coef = effect_size * strength * magnitude * signs / np.sqrt(n_relevant)

    logits = baseline + X[:, relevant] @ coef.T          # (N, K)
    expo = np.exp(logits)
    pi = expo / (1.0 + expo.sum(axis=1, keepdims=True))  # monthly cause probs
    total = pi.sum(axis=1)
    stay = 1.0 - total

    months = np.arange(1, n_bins + 1)
    share = pi / total[:, None]
    cif = share[:, :, None] * (1.0 - stay[:, None, None] ** months[None, None, :])
    cif[:, :, -1] = share

    # event month: geometric with success prob ``total``, truncated at the last month
    month = rng.geometric(total) - 1
    month = np.minimum(month, n_bins - 1)
    u = rng.random(n_records)
    cause = 1 + (u[:, None] > np.cumsum(share, axis=1)).sum(axis=1)
    cause = np.minimum(cause, num_events)
    event_time = month + 0.5

    unit = rng.exponential(1.0, size=n_records)
    time, event = event_time.copy(), cause.astype(np.int64)
    if censoring_rate > 0:
        rate = _censoring_rate_for(unit, event_time, censoring_rate)
        censor_time = unit / rate
        censored = censor_time < event_time
        time[censored] = censor_time[censored]
        event[censored] = 0

    names = [f"x{j}" for j in range(n_features)]
    d = from_arrays(X, time, event, num_events=num_events, names=names)
    truth = ToyGroundTruth(relevant, coef, baseline, months, cif)
    return d, truth


def _censoring_rate_for(unit, event_time, target):
    """Bisect the exponential rate so that mean(unit / rate < event_time) ~ target."""
    lo, hi = 1e-9, 1e3
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        frac = np.mean(unit / mid < event_time)
        if frac < target:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# Persistence

def save_dataset(d, directory, normalization=None):
    """Write ``data.csv`` plus a ``meta.json`` sidecar."""
    os.makedirs(directory, exist_ok=True)
    out = d.frame.copy()
    out["time"] = d.time
    out["event"] = d.event
    out.to_csv(os.path.join(directory, "data.csv"), index=False, float_format="%.17g")
    meta = {
        "num_events": d.num_events,
        "features": [f.to_dict() for f in d.features],
        "imputed": d.imputed,
        "encoded": d.encoded,
        "normalized": d.normalized,
        "notes": d.notes,
        "normalization": normalization.to_dict() if normalization is not None else None,
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)


def load_dataset(directory):
    """Inverse of :func:`save_dataset`; returns ``(dataset, normalization or None)``."""
    meta_path = os.path.join(directory, "meta.json")
    data_path = os.path.join(directory, "data.csv")
    if not (os.path.exists(meta_path) and os.path.exists(data_path)):
        raise DataError(f"{directory} does not contain data.csv and meta.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    features = [FeatureMeta(**f) for f in meta["features"]]
    dtypes = {f.name: (str if f.kind == "categorical" else float) for f in features}
    raw = pd.read_csv(data_path, dtype=dtypes, keep_default_na=True,
                      float_precision="round_trip")
    frame = raw[[f.name for f in features]].reset_index(drop=True)
    d = SurvivalDataset(frame, raw["time"].to_numpy(float), raw["event"].to_numpy(np.int64),
                        features, meta["num_events"], imputed=meta["imputed"],
                        encoded=meta["encoded"], normalized=meta["normalized"],
                        notes=list(meta.get("notes", [])))
    norm = meta.get("normalization")
    return d, (NormalizationParams.from_dict(norm) if norm else None)
