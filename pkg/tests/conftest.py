from __future__ import annotations

import numpy as np
import pytest

from sfdlab import UniformGrid


def gaussian(x, *rest):
    r2 = x * x + sum(y * y for y in rest)
    return np.exp(-r2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line():
    """A small 1D truncated grid."""
    return UniformGrid(1, 8.0, 64)
