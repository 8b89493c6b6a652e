"""Deterministic random-stream derivation.

All stochastic code in the package draws from ``numpy.random.Generator``
instances created here. Streams are derived from a 64-bit master seed plus an
arbitrary integer key path, so independent jobs (chains, episodes, workers)
get independent, reproducible streams regardless of scheduling order.
"""

from __future__ import annotations

import numpy as np

Seed = int


def stream(seed: Seed, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``; same inputs, same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)])))


def child_seed(seed: Seed, *key: int) -> int:
    """Derive a 63-bit child seed, for APIs that take a seed rather than a stream."""
    ss = np.random.SeedSequence([int(seed), *map(int, key)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
