"""Gradient computation and mini-batch training with C-index early stopping."""
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._random import make_rng
from ._validation import check_survival_target
from .evaluation import evaluate_predictions
from .exceptions import NumericalError
from .filters import DEFAULT_HORIZONS
from .losses import LossConfig, total_loss
from .network import backward, forward, time_to_bin


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if self.patience < 0:
            raise ValueError("patience must be nonnegative")


def gradients(params, config, X, y, loss_config):
    """Total loss on a batch and its exact gradient for every parameter.

    Returns ``(LossBreakdown, grads)`` where ``grads`` mirrors ``params``.
    The L1 subgradient uses ``sign(0) = 0``.
    """
    time, event = check_survival_target(y)
    bins, n_clamped = time_to_bin(time, config.bin_width, config.num_bins)
    P, cache = forward(params, config, X, return_cache=True)
    breakdown, dP, l1_grads = total_loss(P, bins, time, event, params, config.num_events,
                                         loss_config, return_grad=True)
    breakdown.n_clamped = n_clamped
    grads = backward(params, config, cache, dP)
    for name, g in l1_grads.items():
        grads[name] = grads[name] + g
    return breakdown, grads


def batch_loss(params, config, X, y, loss_config):
    time, event = check_survival_target(y)
    bins, n_clamped = time_to_bin(time, config.bin_width, config.num_bins)
    P = forward(params, config, X)
    breakdown = total_loss(P, bins, time, event, params, config.num_events, loss_config)
    breakdown.n_clamped = n_clamped
    return breakdown


class Adam:
    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in params:
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] ** 2
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2)
                                                                   + self.eps)


@dataclass
class TrainingResult:
    params: dict
    log: pd.DataFrame
    best_epoch: int
    best_statistic: float
    final_statistic: float


def _log_row(epoch, sums, count, grid, statistic, num_events):
    row = {"epoch": epoch}
    if count:
        row["likelihood"] = sums["likelihood"] / count
        for k in range(num_events):
            row[f"ranking_{k + 1}"] = sums["ranking"][k] / count
        row["l1"] = sums["l1"] / count
        row["total"] = sums["total"] / count
    for c in grid.cells:
        row[f"cindex_e{c.event}_h{c.horizon:g}"] = c.value
    row["statistic"] = statistic
    return row


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[s:s + batch_size] for s in range(0, n, batch_size)]


def fit_network(params, config, X_fit, y_fit, X_val, y_val, train_config=None,
                loss_config=None, horizons=DEFAULT_HORIZONS):
    """Train with Adam; keep the parameters with the best validation C-index.

    The stopping statistic is the mean C-index over events and horizons
    (undefined cells excluded). Up to ``patience`` epochs in a row may fail to
    improve it; the next failure stops training. Epoch 0 in the log is the
    untrained network.
    """
    train_config = train_config or TrainConfig()
    loss_config = loss_config or LossConfig()
    X_fit = np.asarray(X_fit, dtype=float)
    X_val = np.asarray(X_val, dtype=float)
    time, event = check_survival_target(y_fit)
    val_target = check_survival_target(y_val)
    params = {k: v.copy() for k, v in params.items()}
    K = config.num_events
    rng = make_rng(train_config.seed, "batches")
    optimizer = Adam(params, train_config.learning_rate)

    def validation_statistic():
        grid = evaluate_predictions(forward(params, config, X_val), val_target, config,
                                    horizons)
        return grid, grid.mean

    def run_epoch(epoch, update):
        sums = {"likelihood": 0.0, "ranking": np.zeros(K), "l1": 0.0, "total": 0.0}
        batches = _epoch_batches(len(time), train_config.batch_size, rng if update else None)
        for b, idx in enumerate(batches):
            target = (time[idx], event[idx])
            if update:
                br, grads = gradients(params, config, X_fit[idx], target, loss_config)
            else:
                br = batch_loss(params, config, X_fit[idx], target, loss_config)
            if not math.isfinite(br.total) or (
                    update and not all(np.all(np.isfinite(g)) for g in grads.values())):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}",
                                     epoch=epoch, batch=b)
            if update:
                optimizer.step(params, grads)
            w = idx.size
            sums["likelihood"] += br.likelihood * w
            sums["ranking"] += br.ranking * w
            sums["l1"] += br.l1 * w
            sums["total"] += br.total * w
        return sums

    sums = run_epoch(0, update=False)
    grid, stat = validation_statistic()
    if not math.isfinite(stat):
        warnings.warn("validation set has no comparable pairs; early stopping is blind")
    rows = [_log_row(0, sums, len(time), grid, stat, K)]
    best_stat = stat if math.isfinite(stat) else -math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch, waited = 0, 0
    for epoch in range(1, train_config.max_epochs + 1):
        sums = run_epoch(epoch, update=True)
        grid, stat = validation_statistic()
        rows.append(_log_row(epoch, sums, len(time), grid, stat, K))
        if math.isfinite(stat) and stat > best_stat:
            best_stat, best_epoch, waited = stat, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            waited += 1
            if waited > train_config.patience:
                break
    return TrainingResult(best_params, pd.DataFrame(rows), best_epoch, best_stat,
                          rows[-1]["statistic"])
