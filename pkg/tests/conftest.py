import numpy as np
import pytest


class CountingGenerator:
    """Wraps a generator and counts evaluate() calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    @property
    def descriptor(self):
        return self.inner.descriptor

    def evaluate(self, z):
        self.calls += 1
        return self.inner.evaluate(z)


@pytest.fixture
def counting():
    return CountingGenerator


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
