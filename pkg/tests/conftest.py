# tests/conftest.py
from __future__ import annotations

import numpy as np
import pytest

from ritzkit.domain import NetworkParams, SCALING_PLAIN, TRAINABLE_OUTER
from ritzkit.geometry import time_slab, unit_square


def central_difference(fun, x: np.ndarray, axis: int, h: float = 1e-5) -> float:
    e = np.zeros_like(x)
    e[axis] = h
    return (fun(x + e) - fun(x - e)) / (2.0 * h)


def numerical_gradient(fun, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fun(theta + e) - fun(theta - e)) / (2.0 * h)
    return g


def make_params(
    rng: np.random.Generator,
    m: int,
    d: int,
    scaling: str = SCALING_PLAIN,
    trainable: str = TRAINABLE_OUTER,
    a_scale: float = 1.0,
) -> NetworkParams:
    return NetworkParams(
        a=a_scale * rng.standard_normal(m),
        w=rng.standard_normal((m, d)),
        b=rng.standard_normal(m),
        scaling=scaling,
        trainable=trainable,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def slab():
    return time_slab()
