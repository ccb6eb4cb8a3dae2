"""scikit-learn style estimator around the competing-risks network."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._random import derive_seed, make_rng
from ._validation import check_consistent_rows, check_survival_target
from .evaluation import evaluate_predictions, risk_at_horizons
from .filters import DEFAULT_HORIZONS
from .losses import LossConfig
from .network import (NetworkConfig, build, default_num_bins, forward, load_checkpoint,
                      save_checkpoint)
from .training import TrainConfig, fit_network


class CompetingRisksNet(BaseEstimator):
    """Discrete-time neural competing-risks model.

    Parameters
    ----------
    variant : {"plain", "filter", "sparse"}
        Input scheme. ``filter`` needs ``selection``; ``sparse`` adds
        L1-penalised elementwise input weights to every sub-network.
    beta, sigma : float
        Ranking-loss weight and kernel scale.
    gamma : float or sequence of float
        Per-event L1 weights (sparse variant only). ``gamma_shared`` defaults
        to their mean.
    num_bins : int, optional
        Time grid size; defaults to one bin past the largest training time.
    horizons : sequence of float
        Months at which the validation C-index is computed for early stopping
        and at which ``predict`` reports CIFs.

    ``fit`` accepts explicit validation data; otherwise it holds out
    ``validation_fraction`` of the training records.
    """

    def __init__(self, variant="plain", n_shared_layers=1, shared_width=50,
                 n_cause_layers=1, cause_width=50, beta=1.0, sigma=1.0, gamma=1e-4,
                 gamma_shared=None, selection=None, learning_rate=1e-3, batch_size=64,
                 max_epochs=200, patience=10, bin_width=1.0, num_bins=None,
                 num_events=None, horizons=DEFAULT_HORIZONS, validation_fraction=0.2,
                 random_state=0):
        self.variant = variant
        self.n_shared_layers = n_shared_layers
        self.shared_width = shared_width
        self.n_cause_layers = n_cause_layers
        self.cause_width = cause_width
        self.beta = beta
        self.sigma = sigma
        self.gamma = gamma
        self.gamma_shared = gamma_shared
        self.selection = selection
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.bin_width = bin_width
        self.num_bins = num_bins
        self.num_events = num_events
        self.horizons = horizons
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _loss_config(self):
        if self.variant == "sparse":
            return LossConfig(self.beta, self.sigma, self.gamma, self.gamma_shared)
        return LossConfig(self.beta, self.sigma, 0.0, 0.0)

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_array(X, dtype=float)
        time, event = check_survival_target(y)
        check_consistent_rows(X, time)
        if X_val is None:
            rng = make_rng(self.random_state, "holdout")
            order = rng.permutation(X.shape[0])
            n_val = max(1, int(round(self.validation_fraction * X.shape[0])))
            val, fit = np.sort(order[:n_val]), np.sort(order[n_val:])
            X, X_val = X[fit], X[val]
            (time, event), y_val = (time[fit], event[fit]), (time[val], event[val])
        else:
            X_val = check_array(X_val, dtype=float)
            y_val = check_survival_target(y_val)
            check_consistent_rows(X_val, y_val[0])
        K = self.num_events or int(max(event.max(), y_val[1].max()))
        num_bins = self.num_bins or default_num_bins(
            np.concatenate([time, y_val[0]]), self.bin_width)
        config = NetworkConfig(K, num_bins, self.bin_width, self.n_shared_layers,
                               self.shared_width, self.n_cause_layers, self.cause_width,
                               self.variant,
                               self.selection if self.variant == "filter" else None)
        params = build(config, X.shape[1], seed=derive_seed(self.random_state, "init"))
        train_config = TrainConfig(self.learning_rate, self.batch_size, self.max_epochs,
                                   self.patience, derive_seed(self.random_state, "train"))
        result = fit_network(params, config, X, (time, event), X_val, y_val, train_config,
                             self._loss_config(), self.horizons)
        self.config_ = config
        self.params_ = result.params
        self.training_log_ = result.log
        self.best_epoch_ = result.best_epoch
        self.validation_score_ = result.best_statistic
        self.n_features_in_ = X.shape[1]
        return self

    def predict_joint(self, X):
        """Joint probabilities of shape ``(n, K, T)``."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.params_, self.config_, X)

    def predict_cif(self, X, horizons=None):
        """CIF of every event at each horizon, shape ``(n, K, H)``."""
        horizons = self.horizons if horizons is None else horizons
        return risk_at_horizons(self.predict_joint(X), self.config_, horizons)

    def predict(self, X):
        return self.predict_cif(X)

    def score(self, X, y):
        """Mean C-index over events and horizons (defined cells only)."""
        return evaluate_predictions(self.predict_joint(X), y, self.config_,
                                    self.horizons).mean

    def sparse_weights(self):
        """L1-penalised input weights by sub-network name (sparse variant)."""
        check_is_fitted(self, "params_")
        return {k[:-len(".sparse")]: v for k, v in self.params_.items()
                if k.endswith(".sparse")}

    def save(self, path, normalization=None, extra=None):
        check_is_fitted(self, "params_")
        meta = {"estimator_params": _jsonable(self.get_params()),
                "n_features_in": self.n_features_in_}
        meta.update(extra or {})
        save_checkpoint(path, self.config_, self.params_, normalization, meta)

    @classmethod
    def load(cls, path):
        """Return ``(model, normalization)`` from a checkpoint."""
        config, params, normalization, extra = load_checkpoint(path)
        kwargs = dict(extra.get("estimator_params", {}))
        kwargs.pop("selection", None)
        if "horizons" in kwargs:
            kwargs["horizons"] = tuple(kwargs["horizons"])
        model = cls(**kwargs, selection=config.selection)
        model.config_ = config
        model.params_ = params
        model.n_features_in_ = int(extra.get("n_features_in", 0))
        return model, normalization


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if k == "selection":
            continue
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = list(v)
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out
