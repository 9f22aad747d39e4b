"""Shared helpers for the test suite."""
import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)


def make_rng(seed):
    return np.random.default_rng(seed)
