import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survsel.filters import FeatureSelection
from survsel.network import (NetworkConfig, backward, build, cif, cif_curves, default_num_bins,
                             forward, load_checkpoint, map_horizon_to_bin, save_checkpoint,
                             time_to_bin)

from conftest import random_network


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(2, 10, variant="filter")
    with pytest.raises(ValueError):
        NetworkConfig(2, 10, variant="deep")
    with pytest.raises(ValueError):
        NetworkConfig(0, 10)
    sel = FeatureSelection.from_sets([[0, 1]])
    with pytest.raises(ValueError, match="wrong number"):
        NetworkConfig(2, 10, variant="filter", selection=sel)
    with pytest.raises(ValueError):
        NetworkConfig(1, 10, variant="plain", selection=sel)


def test_time_grid_helpers():
    assert default_num_bins([0.5, 119.5]) == 121
    assert default_num_bins([12.0], bin_width=6) == 4
    bins, clamped = time_to_bin(np.array([0.0, 0.99, 1.0, 7.5, 50.0]), 1.0, 10)
    np.testing.assert_array_equal(bins, [0, 0, 1, 7, 9])
    assert clamped == 1
    config = NetworkConfig(1, 130)
    assert map_horizon_to_bin(12, config) == (11, False)
    assert map_horizon_to_bin(0.5, config) == (0, False)
    assert map_horizon_to_bin(500, config) == (129, True)
    # a record in bin 11 (time in [11, 12)) is counted before the 12-month horizon
    assert time_to_bin([11.5], 1.0, 130)[0][0] <= map_horizon_to_bin(12, config)[0]
    assert time_to_bin([12.0], 1.0, 130)[0][0] > map_horizon_to_bin(12, config)[0]


def test_parameter_layout():
    config = NetworkConfig(2, 5, 1.0, 2, 4, 1, 3, "sparse")
    params = build(config, 6, seed=0)
    assert params["shared.sparse"].shape == (6,)
    assert params["cause0.sparse"].shape == (4 + 6,)
    np.testing.assert_array_equal(params["cause1.sparse"], 1.0)
    assert params["shared.W1"].shape == (4, 4)
    assert params["cause1.W0"].shape == (10, 3)
    assert params["cause1.Wout"].shape == (3, 5)
    np.testing.assert_array_equal(build(config, 6, seed=0)["shared.W0"], params["shared.W0"])


def test_filter_without_shared_features_drops_the_shared_network():
    sel = FeatureSelection.from_sets([[0], [1]])
    config = NetworkConfig(2, 4, variant="filter", selection=sel)
    params = build(config, 3)
    assert not config.has_shared
    assert not any(k.startswith("shared") for k in params)
    assert forward(params, config, np.ones((2, 3))).shape == (2, 2, 4)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["plain", "filter", "sparse"]), st.integers(0, 10_000),
       st.integers(1, 3), st.integers(2, 9))
def test_forward_is_a_distribution_with_monotone_cif(variant, seed, K, T):
    config, params = random_network(variant, seed, D=5, K=K, T=T)
    X = np.random.default_rng(seed).normal(scale=3.0, size=(20, 5))
    P = forward(params, config, X)
    assert P.shape == (20, K, T)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=(1, 2)), 1.0, atol=1e-12)
    assert np.all(np.diff(cif_curves(P), axis=2) >= 0)


def test_cif_matches_partial_sums():
    P = np.array([[[0.1, 0.2, 0.1], [0.3, 0.2, 0.1]]])
    assert cif(P, 1, 1)[0] == pytest.approx(0.3)
    assert cif(P, 2, 2)[0] == pytest.approx(0.6)
    with pytest.raises(ValueError):
        cif(P, 3, 0)


def test_filter_variant_ignores_unselected_features():
    config, params = random_network("filter", 3, D=8)
    unused = np.setdiff1d(np.arange(8), config.selection.union())
    assert unused.size
    X = np.random.default_rng(0).normal(size=(30, 8))
    Xp = X.copy()
    Xp[:, unused] = 1e6
    np.testing.assert_array_equal(forward(params, config, X), forward(params, config, Xp))


def test_zero_sparse_weight_removes_a_feature():
    config, params = random_network("sparse", 1, D=4)
    params["shared.sparse"][2] = 0.0
    for k in range(config.num_events):
        params[f"cause{k}.sparse"][config.shared_width + 2] = 0.0
    X = np.random.default_rng(1).normal(size=(10, 4))
    Xp = X.copy()
    Xp[:, 2] += 5.0
    np.testing.assert_array_equal(forward(params, config, X), forward(params, config, Xp))


def test_wrong_feature_count_rejected():
    config, params = random_network("plain", 0, D=4)
    with pytest.raises(ValueError, match="expected 4"):
        forward(params, config, np.zeros((2, 5)))


@pytest.mark.parametrize("variant", ["plain", "filter", "sparse"])
def test_backward_matches_finite_differences_of_a_linear_functional(variant):
    config, params = random_network(variant, 11, D=5, n_shared=2, n_cause=2)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(4, 5))
    G = rng.normal(size=(4, config.num_events, config.num_bins))
    _, cache = forward(params, config, X, return_cache=True)
    grads = backward(params, config, cache, G)
    eps = 1e-6
    for name, value in params.items():
        flat = value.reshape(-1)
        for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + eps
            up = (forward(params, config, X) * G).sum()
            flat[i] = old - eps
            down = (forward(params, config, X) * G).sum()
            flat[i] = old
            fd = (up - down) / (2 * eps)
            assert grads[name].reshape(-1)[i] == pytest.approx(fd, rel=1e-5, abs=1e-8), name


def test_checkpoint_roundtrip(tmp_path):
    from survsel.dataset import fit_normalization
    config, params = random_network("filter", 4, D=6)
    norm = fit_normalization(np.random.default_rng(0).normal(size=(5, 6)))
    path = tmp_path / "model.npz"
    save_checkpoint(path, config, params, norm, {"note": "x"})
    config2, params2, norm2, extra = load_checkpoint(path)
    X = np.random.default_rng(1).normal(size=(7, 6))
    np.testing.assert_array_equal(forward(params, config, X), forward(params2, config2, X))
    np.testing.assert_array_equal(config2.selection.shared, config.selection.shared)
    np.testing.assert_array_equal(norm2.scale, norm.scale)
    assert extra == {"note": "x"}
