"""Discrete-time competing-risks network with shared and cause-specific parts.

The output is a single softmax over ``K * T`` logits (event x time bin), so
``P[i, k, t]`` estimates the probability that record ``i`` experiences event
``k + 1`` in bin ``t``. Three input schemes are supported:

* ``plain``  - every sub-network sees all features;
* ``filter`` - the shared part sees ``v_s`` and cause ``k`` sees ``v_k``;
  with an empty ``v_s`` there is no shared part;
* ``sparse`` - as ``plain`` but each sub-network input is first multiplied
  elementwise by a learned weight vector (initialised to ones).

Cause-specific inputs are the shared representation concatenated with the
sub-network's own features.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng
from .filters import FeatureSelection

VARIANTS = ("plain", "filter", "sparse")
CHECKPOINT_FORMAT = "survsel-checkpoint/1"


@dataclass
class NetworkConfig:
    num_events: int
    num_bins: int
    bin_width: float = 1.0
    n_shared_layers: int = 1
    shared_width: int = 50
    n_cause_layers: int = 1
    cause_width: int = 50
    variant: str = "plain"
    selection: FeatureSelection = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.num_events < 1 or self.num_bins < 1 or self.bin_width <= 0:
            raise ValueError("num_events, num_bins and bin_width must be positive")
        if min(self.n_shared_layers, self.n_cause_layers) < 1:
            raise ValueError("every sub-network needs at least one hidden layer")
        if self.variant == "filter":
            if self.selection is None:
                raise ValueError("the filter variant needs a feature selection")
            if self.selection.num_events != self.num_events:
                raise ValueError("selection has the wrong number of events")
        elif self.selection is not None:
            raise ValueError(f"the {self.variant} variant takes no feature selection")

    @property
    def has_shared(self):
        return not (self.variant == "filter" and self.selection.shared_absent)

    @property
    def sparse(self):
        return self.variant == "sparse"

    def input_dims(self, input_dim):
        """``(shared_dim, [cause_dim_k])`` of raw features fed to each part."""
        if self.variant == "filter":
            return (self.selection.shared.size,
                    [v.size for v in self.selection.per_event])
        return input_dim, [input_dim] * self.num_events

    def to_dict(self):
        return {
            "num_events": self.num_events, "num_bins": self.num_bins,
            "bin_width": self.bin_width, "n_shared_layers": self.n_shared_layers,
            "shared_width": self.shared_width, "n_cause_layers": self.n_cause_layers,
            "cause_width": self.cause_width, "variant": self.variant,
            "selection": self.selection.to_dict() if self.selection is not None else None,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        sel = data.pop("selection", None)
        return cls(selection=FeatureSelection.from_dict(sel) if sel else None, **data)


def default_num_bins(times, bin_width=1.0):
    """Bins needed so every observed time falls strictly before the last bin.

    The last bin is kept free as a tail cell for mass beyond the data.
    """
    return int(math.floor(float(np.max(times)) / bin_width)) + 2


def time_to_bin(times, bin_width, num_bins):
    """Bin index of each time; returns ``(bins, n_clamped)``."""
    bins = np.floor(np.asarray(times, dtype=float) / bin_width + 1e-9).astype(np.int64)
    clamped = bins > num_bins - 1
    return np.minimum(bins, num_bins - 1), int(clamped.sum())


def map_horizon_to_bin(horizon, config):
    """Largest bin whose right edge is <= ``horizon``; returns ``(bin, clamped)``.

    The CIF summed through this bin is the probability of the event strictly
    before the horizon.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    b = int(math.floor(horizon / config.bin_width + 1e-9)) - 1
    if b > config.num_bins - 1:
        return config.num_bins - 1, True
    return max(b, 0), False


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def build(config, input_dim, seed=0):
    """Initialise parameters as an ordered dict of named arrays."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = make_rng(seed, "init")
    shared_dim, cause_dims = config.input_dims(input_dim)
    params = {}
    if config.has_shared:
        if config.sparse:
            params["shared.sparse"] = np.ones(shared_dim)
        fan_in = shared_dim
        for l in range(config.n_shared_layers):
            params[f"shared.W{l}"] = _glorot(rng, fan_in, config.shared_width)
            params[f"shared.b{l}"] = np.zeros(config.shared_width)
            fan_in = config.shared_width
    for k in range(config.num_events):
        fan_in = cause_dims[k] + (config.shared_width if config.has_shared else 0)
        if config.sparse:
            params[f"cause{k}.sparse"] = np.ones(fan_in)
        for l in range(config.n_cause_layers):
            params[f"cause{k}.W{l}"] = _glorot(rng, fan_in, config.cause_width)
            params[f"cause{k}.b{l}"] = np.zeros(config.cause_width)
            fan_in = config.cause_width
        params[f"cause{k}.Wout"] = _glorot(rng, fan_in, config.num_bins)
        params[f"cause{k}.bout"] = np.zeros(config.num_bins)
    return params


def _split_inputs(config, X):
    if config.variant == "filter":
        sel = config.selection
        xs = X[:, sel.shared] if config.has_shared else None
        return xs, [X[:, v] for v in sel.per_event]
    return X, [X] * config.num_events


def _dense_stack(params, prefix, a, n_layers, cache):
    for l in range(n_layers):
        z = a @ params[f"{prefix}.W{l}"] + params[f"{prefix}.b{l}"]
        cache.append((a, z))
        a = np.maximum(z, 0.0)
    return a


def forward(params, config, X, return_cache=False):
    """Joint event/time probabilities ``P`` of shape ``(N, K, T)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    expected = _expected_input_dim(params, config)
    if expected is not None and X.shape[1] < expected:
        raise ValueError(f"expected {expected} features, got {X.shape[1]}")
    if config.variant != "filter" and X.shape[1] != expected:
        raise ValueError(f"expected {expected} features, got {X.shape[1]}")
    xs, xk = _split_inputs(config, X)
    cache = {"shared": [], "cause": []}
    fs = None
    if config.has_shared:
        a = xs * params["shared.sparse"] if config.sparse else xs
        cache["shared_in"] = xs
        fs = _dense_stack(params, "shared", a, config.n_shared_layers, cache["shared"])
    logits = np.empty((X.shape[0], config.num_events, config.num_bins))
    for k in range(config.num_events):
        z = np.hstack([fs, xk[k]]) if config.has_shared else xk[k]
        a = z * params[f"cause{k}.sparse"] if config.sparse else z
        layers = []
        h = _dense_stack(params, f"cause{k}", a, config.n_cause_layers, layers)
        logits[:, k, :] = h @ params[f"cause{k}.Wout"] + params[f"cause{k}.bout"]
        cache["cause"].append({"z": z, "layers": layers, "h": h})
    flat = logits.reshape(X.shape[0], -1)
    flat = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(flat)
    P = (e / e.sum(axis=1, keepdims=True)).reshape(logits.shape)
    if return_cache:
        cache["P"] = P
        return P, cache
    return P


def _expected_input_dim(params, config):
    if config.variant == "filter":
        sel = config.selection
        used = np.concatenate(sel.per_event + (sel.shared,))
        return int(used.max()) + 1 if used.size else None
    if config.has_shared:
        key = "shared.W0"
        width = params[key].shape[0]
        return width
    return None


def backward(params, config, cache, dP):
    """Gradients of a scalar loss w.r.t. every parameter, given ``dL/dP``."""
    P = cache["P"]
    n = P.shape[0]
    flatP = P.reshape(n, -1)
    g = dP.reshape(n, -1)
    dlogits = (flatP * (g - (g * flatP).sum(axis=1, keepdims=True))).reshape(P.shape)
    grads = {}
    dfs = None
    if config.has_shared:
        dfs = np.zeros((n, config.shared_width))
    for k in range(config.num_events):
        c = cache["cause"][k]
        dh = dlogits[:, k, :]
        grads[f"cause{k}.Wout"] = c["h"].T @ dh
        grads[f"cause{k}.bout"] = dh.sum(axis=0)
        da = dh @ params[f"cause{k}.Wout"].T
        da = _dense_backward(params, f"cause{k}", c["layers"], da, grads)
        if config.sparse:
            grads[f"cause{k}.sparse"] = (da * c["z"]).sum(axis=0)
            dz = da * params[f"cause{k}.sparse"]
        else:
            dz = da
        if config.has_shared:
            dfs += dz[:, :config.shared_width]
    if config.has_shared:
        da = _dense_backward(params, "shared", cache["shared"], dfs, grads)
        if config.sparse:
            grads["shared.sparse"] = (da * cache["shared_in"]).sum(axis=0)
    return {name: grads[name] for name in params}


def _dense_backward(params, prefix, layers, da, grads):
    for l in reversed(range(len(layers))):
        a_in, z = layers[l]
        dz = da * (z > 0)
        grads[f"{prefix}.W{l}"] = a_in.T @ dz
        grads[f"{prefix}.b{l}"] = dz.sum(axis=0)
        da = dz @ params[f"{prefix}.W{l}"].T
    return da


def cif(P, k, t_bin):
    """Cumulative incidence of event ``k`` (1-based) through bin ``t_bin``."""
    P = np.asarray(P)
    if not 1 <= k <= P.shape[-2]:
        raise ValueError("event index out of range")
    if not 0 <= t_bin < P.shape[-1]:
        raise ValueError("time bin out of range")
    return P[..., k - 1, :t_bin + 1].sum(axis=-1)


def cif_curves(P):
    """All cumulative incidence curves, same shape as ``P``."""
    return np.cumsum(P, axis=-1)


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path, config, params, normalization=None, extra=None):
    """Write a single ``.npz`` holding config, selection, normalization and tensors."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "normalization": normalization.to_dict() if normalization is not None else None,
        "param_names": list(params),
        "extra": extra or {},
    }
    arrays = {f"param/{name}": value for name, value in params.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Return ``(config, params, normalization or None, extra)``."""
    from .dataset import NormalizationParams

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(data["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        params = {name: data[f"param/{name}"].copy() for name in meta["param_names"]}
    config = NetworkConfig.from_dict(meta["config"])
    norm = meta.get("normalization")
    norm = NormalizationParams.from_dict(norm) if norm else None
    return config, params, norm, meta.get("extra", {})
