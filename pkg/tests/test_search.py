import json

import numpy as np
import pytest

from survsel._random import make_rng
from survsel.exceptions import NumericalError
from survsel.search import SearchSpace, make_model, random_search, run_search


def test_grids_for_each_variant():
    assert SearchSpace.ranking().choices == {"beta": [0.1, 0.3, 1, 3, 10],
                                             "sigma": [0.1, 0.3, 1, 3, 10]}
    plain = SearchSpace.for_variant("plain").choices
    assert plain["n_shared_layers"] == [1, 2, 3] and plain["cause_width"] == [50, 100, 200]
    sparse = SearchSpace.for_variant("sparse").choices
    assert sparse["gamma"] == [1e-5, 1e-4, 1e-3] and sparse["shared_width"] == [50, 100]
    assert SearchSpace.for_variant("filter").choices["n_selected"] == [20, 40, 60]
    assert "n_selected" in SearchSpace.for_variant("hybrid").choices
    with pytest.raises(ValueError):
        SearchSpace.for_variant("mystery")
    with pytest.raises(ValueError, match="empty"):
        SearchSpace({"beta": []})


def test_per_event_parameters_are_drawn_per_event():
    draw = SearchSpace.for_variant("sparse").sample(make_rng(0), num_events=3)
    assert len(draw["gamma"]) == 3
    assert isinstance(draw["n_shared_layers"], int)


def test_single_point_space_is_returned_after_one_trial():
    space = SearchSpace({"beta": [3], "sigma": [0.1]})
    result = run_search(space, lambda params, seed: 0.7, 1, seed=0)
    assert result.best_params == {"beta": 3, "sigma": 0.1}
    assert len(result.log) == 1 and result.best_trial == 0


def test_dominant_point_is_selected():
    space = SearchSpace({"width": [50, 100]})
    result = run_search(space, lambda p, seed: 0.9 if p["width"] == 100 else 0.6, 12, seed=2)
    assert result.best_params == {"width": 100}
    assert result.best_score == 0.9


def test_failed_trials_are_logged_and_skipped():
    calls = []

    def trial(params, seed):
        calls.append(seed)
        if len(calls) % 2:
            raise NumericalError("nan")
        return params["x"]

    with pytest.warns(UserWarning, match="failed"):
        result = run_search(SearchSpace({"x": [1, 2, 3]}), trial, 6, seed=1)
    assert list(result.log["status"]) == ["failed", "ok"] * 3
    assert len(set(calls)) == 6
    with pytest.raises(NumericalError):
        with pytest.warns(UserWarning):
            run_search(SearchSpace({"x": [1]}), lambda p, s: (_ for _ in ()).throw(
                NumericalError("nan")), 2, seed=0)


def test_search_is_reproducible_and_logs_json_params():
    space = SearchSpace.for_variant("plain")
    a = run_search(space, lambda p, s: s % 1000 / 1000, 5, seed=9)
    b = run_search(space, lambda p, s: s % 1000 / 1000, 5, seed=9)
    assert a.log.equals(b.log)
    assert set(json.loads(a.log["params"][0])) == set(space.choices)
    with pytest.raises(ValueError):
        run_search(space, lambda p, s: 0.0, 0, seed=0)


def test_make_model_applies_selection_and_gamma():
    model = make_model({"beta": 2.0}, {"n_selected": [2, 1]},
                       [np.array([0.0, 3.0, 2.0]), np.array([1.0, 0.0, 0.0])], 3, 7)
    assert model.variant == "filter" and model.beta == 2.0 and model.random_state == 7
    np.testing.assert_array_equal(model.selection.per_event[0], [1, 2])
    assert make_model({"variant": "sparse"}, {"gamma": [1e-3, 1e-4]}, None, 3, 0).gamma == (
        1e-3, 1e-4)


def test_random_search_trains_models(toy_normalized):
    d = toy_normalized
    X, t, e = d.X, d.time, d.event
    space = SearchSpace({"beta": [0.1, 1], "sigma": [1]})
    result = random_search(space, X[:400], (t[:400], e[:400]), X[400:], (t[400:], e[400:]),
                           2, seed=0, base_params={"max_epochs": 2, "shared_width": 8,
                                                   "cause_width": 8})
    assert len(result.log) == 2
    assert result.best_score == result.log["statistic"].max()
