"""Shared fixtures: solved stationary densities are expensive, so solve once per session."""
from __future__ import annotations

import numpy as np
import pytest

from fragdeconv.kernels import h1, h2
from fragdeconv.stationary import solve_stationary

ALPHA = 0.7
RATE = 1.0


@pytest.fixture(scope="session")
def kernel_h1():
    return h1()


@pytest.fixture(scope="session")
def kernel_h2():
    return h2()


@pytest.fixture(scope="session")
def N_h1(kernel_h1):
    return solve_stationary(kernel_h1, ALPHA, RATE)


@pytest.fixture(scope="session")
def N_h2(kernel_h2):
    return solve_stationary(kernel_h2, ALPHA, RATE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
