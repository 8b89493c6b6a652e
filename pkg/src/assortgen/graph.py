"""Simple undirected graph with degree-preserving mutation support.

The representation is tuned for long rewiring loops: edges live in two
parallel endpoint lists (each slot stores ``u < v``), degrees in a list, and
adjacency in per-node sets for O(1) membership. Rewiring replaces edge slots
in place, so edge indices stay stable except for the two slots touched by a
move.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import MultiEdgeError, NodeIndexError, SelfLoopError
from .rng import Seed, stream

__all__ = [
    "Graph",
    "from_edge_list",
    "read_edge_list",
    "write_edge_list",
    "randomize_configuration",
]


class Graph:
    """Simple undirected graph.

    Invariants (established by :func:`from_edge_list`, preserved by every
    mutation in this package):

    - no self-loops, no multiedges;
    - each edge slot ``i`` stores endpoints with ``eu[i] < ev[i]``;
    - ``deg[i]`` equals the number of incident edges of node ``i``;
    - ``adj[u]`` is exactly the neighbor set of ``u``.
    """

    __slots__ = ("n", "eu", "ev", "deg", "adj")

    def __init__(self, n: int, eu: list[int], ev: list[int], deg: list[int], adj: list[set[int]]):
        self.n = n
        self.eu = eu
        self.ev = ev
        self.deg = deg
        self.adj = adj

    # -- queries ---------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self.eu)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def edges(self) -> Iterator[tuple[int, int]]:
        """Iterate edges in current slot order (canonical u < v per slot)."""
        return zip(self.eu, self.ev)

    def to_edge_list(self) -> list[tuple[int, int]]:
        """Canonical edge list: u < v within each pair, lexicographically sorted."""
        return sorted(zip(self.eu, self.ev))

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays in slot order, as int64 numpy arrays (copies)."""
        return np.asarray(self.eu, dtype=np.int64), np.asarray(self.ev, dtype=np.int64)

    def degree_array(self) -> np.ndarray:
        return np.asarray(self.deg, dtype=np.int64)

    def degree_sequence(self) -> tuple[int, ...]:
        return tuple(self.deg)

    def edge_hash(self) -> str:
        """SHA-1 of the canonical edge list; identifies a topology exactly."""
        h = hashlib.sha1()
        h.update(f"{self.n}:".encode())
        arr = np.asarray(self.to_edge_list(), dtype=np.int64)
        h.update(arr.tobytes())
        return h.hexdigest()

    def copy(self) -> "Graph":
        return Graph(
            self.n,
            list(self.eu),
            list(self.ev),
            list(self.deg),
            [set(s) for s in self.adj],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and sorted(zip(self.eu, self.ev)) == sorted(zip(other.eu, other.ev))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.num_edges})"

    def check(self) -> None:
        """Verify all structural invariants; raises AssertionError on violation.

        Meant for tests and drift guards, not hot loops.
        """
        seen = set()
        deg = [0] * self.n
        for u, v in zip(self.eu, self.ev):
            assert 0 <= u < v < self.n, f"bad edge ({u},{v})"
            assert (u, v) not in seen, f"duplicate edge ({u},{v})"
            seen.add((u, v))
            deg[u] += 1
            deg[v] += 1
            assert v in self.adj[u] and u in self.adj[v], f"adjacency missing ({u},{v})"
        assert deg == self.deg, "degree array out of sync"
        assert sum(len(s) for s in self.adj) == 2 * len(self.eu), "adjacency size mismatch"


def from_edge_list(n: int, pairs: Iterable[Sequence[int]]) -> Graph:
    """Build a validated :class:`Graph` from undirected node pairs.

    Raises
    ------
    NodeIndexError
        if an endpoint lies outside ``[0, n)``.
    SelfLoopError
        if a pair (u, u) is present.
    MultiEdgeError
        if an unordered pair appears more than once.
    """
    if n < 0:
        raise NodeIndexError(f"node count must be nonnegative, got {n}")
    eu: list[int] = []
    ev: list[int] = []
    deg = [0] * n
    adj: list[set[int]] = [set() for _ in range(n)]
    for p in pairs:
        u, v = int(p[0]), int(p[1])
        if not (0 <= u < n and 0 <= v < n):
            raise NodeIndexError(f"edge ({u},{v}) out of range for n={n}")
        if u == v:
            raise SelfLoopError(f"self-loop at node {u}")
        if u > v:
            u, v = v, u
        if v in adj[u]:
            raise MultiEdgeError(f"duplicate edge ({u},{v})")
        adj[u].add(v)
        adj[v].add(u)
        deg[u] += 1
        deg[v] += 1
        eu.append(u)
        ev.append(v)
    return Graph(n, eu, ev, deg, adj)


# -- edge-list text format ------------------------------------------------
#
# First line "N E", then E lines "u v", 0-based, newline-terminated.
# Lines starting with '#' are comments.


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{g.n} {g.num_edges}\n")
        for u, v in g.to_edge_list():
            fh.write(f"{u} {v}\n")


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="ascii") as fh:
        header = None
        pairs: list[tuple[int, int]] = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"expected header 'N E', got {line!r}")
                header = (int(parts[0]), int(parts[1]))
                continue
            a, b = line.split()
            pairs.append((int(a), int(b)))
    if header is None:
        raise ValueError("empty edge-list file")
    n, m = header
    if len(pairs) != m:
        raise ValueError(f"header promises {m} edges, file has {len(pairs)}")
    return from_edge_list(n, pairs)


# -- configuration-model randomization ------------------------------------


def randomize_configuration(g: Graph, seed: Seed, swap_budget: int | None = None) -> Graph:
    """Randomize topology with uniform degree-preserving double-edge swaps.

    Runs until ``swap_budget`` swaps have been *accepted* (invalid proposals
    are skipped, not counted), or until 100x the budget in proposals has been
    spent, whichever comes first. The input graph is not modified.

    Default budget is ``20 * E`` accepted swaps, enough to forget the initial
    topology for the graph sizes this package targets.
    """
    out = g.copy()
    m = out.num_edges
    if m < 2:
        return out
    if swap_budget is None:
        swap_budget = 20 * m
    if swap_budget < 1:
        raise ValueError(f"swap_budget must be >= 1, got {swap_budget}")
    rng = stream(seed, 0xC0F)
    eu, ev, adj = out.eu, out.ev, out.adj

    accepted = 0
    attempts = 0
    cap = 100 * swap_budget
    chunk = 4096
    while accepted < swap_budget and attempts < cap:
        take = min(chunk, cap - attempts)
        ii = rng.integers(0, m, size=take).tolist()
        jj = rng.integers(0, m, size=take).tolist()
        bb = rng.integers(0, 2, size=take).tolist()
        for i, j, b in zip(ii, jj, bb):
            attempts += 1
            if i == j:
                continue
            u, v = eu[i], ev[i]
            x0, y0 = eu[j], ev[j]
            x, y = (x0, y0) if b == 0 else (y0, x0)
            # Valid double-edge swaps need 4 distinct endpoints: any shared
            # endpoint makes one pairing a self-loop and the other the
            # identity move.
            if u == x or u == y or v == x or v == y:
                continue
            if x in adj[u] or y in adj[v]:
                continue
            adj[u].discard(v)
            adj[v].discard(u)
            adj[x0].discard(y0)
            adj[y0].discard(x0)
            adj[u].add(x)
            adj[x].add(u)
            adj[v].add(y)
            adj[y].add(v)
            eu[i], ev[i] = (u, x) if u < x else (x, u)
            eu[j], ev[j] = (v, y) if v < y else (y, v)
            accepted += 1
            if accepted >= swap_budget:
                break
    return out
