import numpy as np
import pytest

from finslerforms import builtins as bi


@pytest.fixture(scope="session")
def euclidean():
    return bi.get_metric("euclidean")


@pytest.fixture(scope="session")
def randers():
    return bi.get_metric("randers-torus")


@pytest.fixture(scope="session")
def riemannian_torus():
    return bi.get_metric("riemannian-torus")


@pytest.fixture(scope="session")
def sphere():
    return bi.get_metric("riemannian-sphere")


@pytest.fixture(scope="session")
def quartic():
    return bi.get_metric("quartic-torus")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240722)


def sample_points(s, count, seed=11):
    return bi.random_chart_points(np.random.default_rng(seed), s, count)
