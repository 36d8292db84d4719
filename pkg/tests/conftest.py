from __future__ import annotations

import numpy as np
import pytest

from fenelab.config_space import build_basis


@pytest.fixture(scope="session")
def basis_k1():
    return build_basis(1.0, 16, 16)


@pytest.fixture(scope="session")
def basis_factory():
    cache = {}

    def make(k: float, n_r: int = 16, n_theta: int = 16):
        key = (k, n_r, n_theta)
        if key not in cache:
            cache[key] = build_basis(k, n_r, n_theta)
        return cache[key]

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
