import numpy as np
import pytest

from survsel import generate_toy_dataset, normalize
from survsel.filters import FeatureSelection
from survsel.network import NetworkConfig, build

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy():
    d, truth = generate_toy_dataset(n_records=600, n_noise=10, seed=7)
    return d, truth


@pytest.fixture(scope="session")
def toy_normalized(toy):
    d, _ = toy
    return normalize(d)[0]


def random_network(variant, seed, D=6, K=2, T=7, n_shared=1, n_cause=1, width=5):
    """Small network with perturbed parameters (sparse weights away from 0)."""
    rng = np.random.default_rng(seed)
    selection = None
    if variant == "filter":
        per_event = [np.sort(rng.choice(D, size=rng.integers(1, D), replace=False))
                     for _ in range(K)]
        selection = FeatureSelection.from_sets(per_event)
    config = NetworkConfig(K, T, 1.0, n_shared, width, n_cause, width, variant, selection)
    params = build(config, D, seed)
    for name in params:
        if name.endswith(".sparse"):
            params[name] = rng.normal(size=params[name].shape)
        else:
            params[name] = params[name] + 0.1 * rng.normal(size=params[name].shape)
    return config, params
