from __future__ import annotations

import numpy as np
import pytest

from assortgen.graph import Graph, from_edge_list


def random_simple_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    """Plain G(n,p) helper used across oracle tests."""
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return from_edge_list(n, pairs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def path_graph(n: int) -> Graph:
    return from_edge_list(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n: int) -> Graph:
    return from_edge_list(n, [(0, i) for i in range(1, n)])


def cycle_graph(n: int) -> Graph:
    return from_edge_list(n, [(i, (i + 1) % n) for i in range(n)])
