"""Shared fixtures: one-time kernel warmup and small graph builders."""

import numpy as np
import pytest

from nodedp import _kernels
from nodedp.graph import Graph


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the jitted kernels once so timed tests measure steady state."""
    _kernels.warmup()


def make_graph(n, edges, d=3, num_classes=2, seed=0):
    """Small dense-id graph with deterministic features and labels."""
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, d))
    labels = rng.integers(0, num_classes, size=n)
    return Graph.from_arrays(
        feats, labels, np.asarray(edges, dtype=np.int64).reshape(-1, 2), num_classes
    )


@pytest.fixture
def line_graph():
    """0 -> 1 -> 2 -> 3 plus a chord 0 -> 2."""
    return make_graph(4, [(0, 1), (1, 2), (2, 3), (0, 2)])
