"""Staged action masks for the factorized policy.

Strict masks admit only rewirings that are valid *and* change K (moves with
dK = 0 cannot steer assortativity); when a strict mask comes up empty at some
stage it is recomputed with the dK requirement dropped. A graph whose relaxed
first-stage mask is empty has no valid rewiring at all.

Exact first-stage admissibility costs O(E^2), so above ``exact_threshold``
edges a sampled completion check is used instead: each edge is probed against
random partner edges (both modes per probe, up to ``probes`` rounds) and
marked by the first witness found. Probes only under-approximate, so a
strict-marked edge always has a genuine completion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FrozenGraphError
from ..graph import Graph
from ..rewire import batch_eval, sorted_edge_codes

__all__ = ["MaskConfig", "GraphArrays", "e1_mask", "e2_mask", "mode_mask"]

DEFAULT_PROBES = 32
DEFAULT_EXACT_THRESHOLD = 500


@dataclass(frozen=True)
class MaskConfig:
    probes: int = DEFAULT_PROBES
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    force_exact: bool = False

    def use_exact(self, num_edges: int) -> bool:
        return self.force_exact or num_edges <= self.exact_threshold


class GraphArrays:
    """Array snapshot of a graph for vectorized mask evaluation."""

    def __init__(self, g: Graph):
        self.n = g.n
        self.eu, self.ev = g.edge_arrays()
        self.deg = g.degree_array()
        self.codes = sorted_edge_codes(g)
        self.num_edges = len(self.eu)

    def eval(self, i, j, b):
        return batch_eval(self.eu, self.ev, self.deg, self.codes, self.n, i, j, b)


def e1_mask(
    arrays: GraphArrays, rng: np.random.Generator, cfg: MaskConfig = MaskConfig()
) -> tuple[np.ndarray, bool]:
    """(mask over first-edge slots, relaxed flag).

    Raises ``FrozenGraphError`` when no edge has any valid completion.
    """
    m = arrays.num_edges
    if m < 2:
        raise FrozenGraphError("graph has fewer than two edges")
    if cfg.use_exact(m):
        strict, valid = _exact_admissible(arrays)
    else:
        strict, valid = _probe_admissible(arrays, rng, cfg.probes)
    if strict.any():
        return strict, False
    if valid.any():
        return valid, True
    raise FrozenGraphError("no valid rewiring exists from any edge")


def _exact_admissible(arrays: GraphArrays) -> tuple[np.ndarray, np.ndarray]:
    m = arrays.num_edges
    i = np.repeat(np.arange(m), m)
    j = np.tile(np.arange(m), m)
    strict = np.zeros(m, dtype=bool)
    valid_any = np.zeros(m, dtype=bool)
    for b in (0, 1):
        valid, dk = arrays.eval(i, j, np.full(m * m, b))
        np.logical_or.at(valid_any, i, valid)
        np.logical_or.at(strict, i, valid & (dk != 0))
    return strict, valid_any


def _probe_admissible(
    arrays: GraphArrays, rng: np.random.Generator, probes: int, width: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    m = arrays.num_edges
    strict = np.zeros(m, dtype=bool)
    valid_any = np.zeros(m, dtype=bool)
    pending = np.arange(m)
    # `width` partners per round keeps the number of vectorized passes small;
    # the probe budget counts partners, not rounds.
    for _ in range(max(1, probes // width)):
        i = np.repeat(pending, width)
        j = rng.integers(0, m, size=len(i))
        for b in (0, 1):
            valid, dk = arrays.eval(i, j, np.full(len(i), b))
            valid_any[i[valid]] = True
            strict[i[valid & (dk != 0)]] = True
        pending = pending[~strict[pending]]
        if len(pending) == 0:
            break
    return strict, valid_any


def e2_mask(arrays: GraphArrays, e1: int) -> tuple[np.ndarray, bool]:
    """(mask over partner slots for a chosen first edge, relaxed flag).

    Exact (one vectorized O(E) pass per mode). Raises ``FrozenGraphError``
    when the chosen edge participates in no valid rewiring, which can only
    happen if the first-stage mask over-approximated.
    """
    m = arrays.num_edges
    i = np.full(m, e1)
    j = np.arange(m)
    v0, dk0 = arrays.eval(i, j, np.zeros(m, dtype=np.int64))
    v1, dk1 = arrays.eval(i, j, np.ones(m, dtype=np.int64))
    strict = (v0 & (dk0 != 0)) | (v1 & (dk1 != 0))
    if strict.any():
        return strict, False
    valid = v0 | v1
    if valid.any():
        return valid, True
    raise FrozenGraphError(f"edge {e1} has no valid completion")


def mode_mask(arrays: GraphArrays, e1: int, e2: int) -> tuple[np.ndarray, bool]:
    """(mask over the two pairing modes, relaxed flag)."""
    i = np.array([e1, e1])
    j = np.array([e2, e2])
    valid, dk = arrays.eval(i, j, np.array([0, 1]))
    strict = valid & (dk != 0)
    if strict.any():
        return strict, False
    if valid.any():
        return valid, True
    raise FrozenGraphError(f"edge pair ({e1}, {e2}) has no valid pairing")
