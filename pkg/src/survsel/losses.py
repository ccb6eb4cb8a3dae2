"""Training objective: discrete-time likelihood, pairwise ranking, L1 penalties.

All functions take the joint probabilities ``P`` of shape ``(B, K, T)``
and, where asked, also return ``dL/dP`` so the network can backpropagate.
"""
from dataclasses import dataclass

import numpy as np

FLOOR = 1e-12


@dataclass
class LossConfig:
    """Weights of the loss terms.

    ``gamma`` is one L1 weight per event (or a scalar for all);
    ``gamma_shared`` defaults to the mean of the per-event weights.
    """

    beta: float = 1.0
    sigma: float = 1.0
    gamma: object = 0.0
    gamma_shared: float = None

    def __post_init__(self):
        if self.beta < 0 or self.sigma <= 0:
            raise ValueError("need beta >= 0 and sigma > 0")
        if np.any(np.asarray(self.gamma) < 0) or (
                self.gamma_shared is not None and self.gamma_shared < 0):
            raise ValueError("L1 weights must be nonnegative")

    def gamma_events(self, num_events):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim == 0:
            return np.full(num_events, float(g))
        if g.shape != (num_events,):
            raise ValueError(f"need {num_events} per-event L1 weights")
        return g

    def gamma_s(self, num_events):
        if self.gamma_shared is not None:
            return float(self.gamma_shared)
        return float(self.gamma_events(num_events).mean())


@dataclass
class LossBreakdown:
    likelihood: float
    ranking: np.ndarray  # one term per event, unweighted
    l1: float
    total: float
    n_clamped: int = 0


def likelihood_loss(P, bins, events, return_grad=False):
    """Mean negative log-likelihood.

    Event ``k`` in bin ``t`` contributes ``-log P[k, t]``; a record censored
    in bin ``t`` contributes ``-log(1 - sum_k F_k(t))``, the mass beyond bin
    ``t``. Probabilities are floored at ``FLOOR`` before the log.
    """
    B = P.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    rows = np.arange(B)
    uncensored = events > 0
    k_idx = np.where(uncensored, events - 1, 0)
    p_event = P[rows, k_idx, bins]
    # survival beyond bin t is the tail mass; summing it avoids 1 - (~1) cancellation
    tail = np.cumsum(P[:, :, ::-1].sum(axis=1), axis=1)[:, ::-1]
    T = P.shape[2]
    after = np.where(bins + 1 < T, tail[rows, np.minimum(bins + 1, T - 1)], 0.0)
    prob = np.where(uncensored, p_event, after)
    loss = -np.log(np.maximum(prob, FLOOR)).mean()
    if not return_grad:
        return loss
    grad = np.zeros_like(P)
    live = prob > FLOOR
    u = uncensored & live
    grad[rows[u], k_idx[u], bins[u]] = -1.0 / (prob[u] * B)
    c = ~uncensored & live
    if c.any():
        beyond = np.arange(T)[None, :] > bins[c][:, None]
        grad[c] = (-beyond.astype(float) / (prob[c][:, None] * B))[:, None, :]
    return loss, grad


def ranking_loss(P, bins, times, events, sigma, k, return_grad=False):
    """Mean of ``exp(-(F_k(t_i | x_i) - F_k(t_i | x_j)) / sigma)`` over pairs.

    A pair ``(i, j)`` is acceptable when ``i`` had event ``k`` and
    ``times[i] < times[j]``; ``j`` may be censored or have any event.
    Returns 0 when the batch holds no acceptable pair.
    """
    acceptable = (events == k)[:, None] & (times[:, None] < times[None, :])
    n_pairs = int(acceptable.sum())
    if n_pairs == 0:
        return (0.0, np.zeros_like(P)) if return_grad else 0.0
    C = np.cumsum(P[:, k - 1, :], axis=1)
    M = C[:, bins].T                  # M[i, j] = F_k(t_i | x_j)
    own = np.diagonal(M)
    E = np.where(acceptable, np.exp(-(own[:, None] - M) / sigma), 0.0)
    loss = E.sum() / n_pairs
    if not return_grad:
        return loss
    dM = E / (sigma * n_pairs)
    d_own = -dM.sum(axis=1)
    onehot = np.zeros((P.shape[0], P.shape[2]))
    onehot[np.arange(P.shape[0]), bins] = 1.0
    dC = dM.T @ onehot + d_own[:, None] * onehot
    grad = np.zeros_like(P)
    grad[:, k - 1, :] = np.cumsum(dC[:, ::-1], axis=1)[:, ::-1]
    return loss, grad


def l1_penalty(params, num_events, loss_config, return_grad=False):
    """``gamma_s * |w_s|_1 + sum_k gamma_k * |w_k|_1`` over the sparse input weights."""
    gk = loss_config.gamma_events(num_events)
    terms = [("shared.sparse", loss_config.gamma_s(num_events))]
    terms += [(f"cause{k}.sparse", gk[k]) for k in range(num_events)]
    total, grads = 0.0, {}
    for name, weight in terms:
        if name in params:
            total += weight * np.abs(params[name]).sum()
            grads[name] = weight * np.sign(params[name])
    return (total, grads) if return_grad else total


def total_loss(P, bins, times, events, params, num_events, loss_config, return_grad=False):
    """Likelihood + beta * sum of ranking terms + L1 penalties."""
    lik = likelihood_loss(P, bins, events, return_grad)
    rank = [ranking_loss(P, bins, times, events, loss_config.sigma, k, return_grad)
            for k in range(1, num_events + 1)]
    l1 = l1_penalty(params, num_events, loss_config, return_grad)
    if not return_grad:
        ranking = np.array(rank, dtype=float)
        total = lik + loss_config.beta * ranking.sum() + l1
        return LossBreakdown(lik, ranking, l1, total)
    ranking = np.array([r[0] for r in rank], dtype=float)
    total = lik[0] + loss_config.beta * ranking.sum() + l1[0]
    dP = lik[1] + loss_config.beta * sum(r[1] for r in rank)
    return LossBreakdown(lik[0], ranking, l1[0], total), dP, l1[1]
