"""Structural observables and ensemble accumulators.

Everything here reads graphs (or sample records); nothing mutates them except
:func:`feasible_range`, which works on an internal copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDegreeError
from .graph import Graph
from .rewire import DegreeSequenceContext
from .rng import Seed, stream

__all__ = [
    "assortativity",
    "k_sum",
    "clustering",
    "JointDegreeMatrix",
    "joint_degree_matrix",
    "FluxMatrix",
    "flux",
    "EnsembleRecord",
    "dyad_entropy",
    "feasible_range",
    "ensemble_stats",
]


def k_sum(g: Graph) -> int:
    """``K = sum over edges of k_u * k_v`` (integer, exact)."""
    deg = g.deg
    return sum(deg[u] * deg[v] for u, v in zip(g.eu, g.ev))


def assortativity(g: Graph) -> float:
    """Pearson correlation between endpoint degrees over all edges.

    rho = (K/E - mu^2) / (S3/(2E) - mu^2) with mu = S2/(2E), where
    S2 = sum k_i^2 and S3 = sum k_i^3 over nodes; always in [-1, 1].

    Raises ``DegenerateDegreeError`` when all endpoint degrees coincide
    (regular graphs), where the correlation is undefined.
    """
    ctx = DegreeSequenceContext.from_graph(g)
    if ctx.denom <= 0.0:
        raise DegenerateDegreeError("assortativity undefined for regular degree sequence")
    return (k_sum(g) / ctx.num_edges - ctx.mu * ctx.mu) / ctx.denom


def clustering(g: Graph) -> float:
    """Mean local clustering coefficient, nodes of degree < 2 contributing 0."""
    if g.n == 0:
        return 0.0
    adj = g.adj
    total = 0.0
    for u in range(g.n):
        k = g.deg[u]
        if k < 2:
            continue
        nb = list(adj[u])
        t = 0
        for idx in range(len(nb) - 1):
            a_set = adj[nb[idx]]
            for w in nb[idx + 1 :]:
                if w in a_set:
                    t += 1
        total += 2.0 * t / (k * (k - 1))
    return total / g.n


@dataclass
class JointDegreeMatrix:
    """Edge counts between degree classes, keyed by unordered (k1 <= k2)."""

    counts: dict[tuple[int, int], int]
    num_edges: int

    def get(self, k1: int, k2: int) -> int:
        if k1 > k2:
            k1, k2 = k2, k1
        return self.counts.get((k1, k2), 0)

    def copy(self) -> "JointDegreeMatrix":
        return JointDegreeMatrix(dict(self.counts), self.num_edges)

    def max_degree(self) -> int:
        return max((k2 for (_, k2) in self.counts), default=0)

    def dense(self, kmax: int | None = None) -> np.ndarray:
        """Symmetric dense array, for export; index = degree."""
        if kmax is None:
            kmax = self.max_degree()
        out = np.zeros((kmax + 1, kmax + 1), dtype=np.int64)
        for (k1, k2), c in self.counts.items():
            out[k1, k2] += c
            if k1 != k2:
                out[k2, k1] += c
        return out


def joint_degree_matrix(g: Graph) -> JointDegreeMatrix:
    counts: dict[tuple[int, int], int] = {}
    deg = g.deg
    for u, v in zip(g.eu, g.ev):
        a, b = deg[u], deg[v]
        if a > b:
            a, b = b, a
        counts[(a, b)] = counts.get((a, b), 0) + 1
    return JointDegreeMatrix(counts, g.num_edges)


@dataclass
class FluxMatrix:
    """Expected per-step change of the joint-degree matrix at one step index."""

    values: dict[tuple[int, int], float]
    step: int
    num_runs: int

    def l1_norm(self) -> float:
        """Sum of |values| over unordered degree pairs."""
        return float(sum(abs(v) for v in self.values.values()))

    def total(self) -> float:
        """Signed sum over unordered pairs; ~0 for edge-conserving dynamics."""
        return float(sum(self.values.values()))


def flux(trajectories: list[list[JointDegreeMatrix]], t: int) -> FluxMatrix:
    """Average elementwise J(t+1) - J(t) across runs.

    ``trajectories`` holds one per-step JointDegreeMatrix sequence per run;
    every sequence must extend past ``t + 1``.
    """
    if not trajectories:
        raise ValueError("flux requires at least one trajectory")
    for seq in trajectories:
        if len(seq) <= t + 1:
            raise ValueError(f"trajectory of length {len(seq)} too short for step {t}")
    acc: dict[tuple[int, int], float] = {}
    for seq in trajectories:
        before, after = seq[t], seq[t + 1]
        for key in before.counts.keys() | after.counts.keys():
            d = after.counts.get(key, 0) - before.counts.get(key, 0)
            if d:
                acc[key] = acc.get(key, 0.0) + d
    nruns = len(trajectories)
    return FluxMatrix({k: v / nruns for k, v in acc.items()}, t, nruns)


@dataclass
class EnsembleRecord:
    """Accumulator over generated samples of one ensemble.

    Tracks per-sample assortativity, clustering, generation cost T, a
    topology hash, and sparse per-pair presence counts for the dyad entropy.
    Merging two records is associative and commutative.
    """

    num_edges: int
    rho_samples: list[float] = field(default_factory=list)
    clustering_samples: list[float] = field(default_factory=list)
    cost_samples: list[int] = field(default_factory=list)
    hash_samples: list[str] = field(default_factory=list)
    edge_presence: dict[tuple[int, int], int] = field(default_factory=dict)
    num_samples: int = 0

    def add(self, g: Graph, rho: float, cost: int, with_clustering: bool = True) -> None:
        self.rho_samples.append(float(rho))
        self.clustering_samples.append(clustering(g) if with_clustering else math.nan)
        self.cost_samples.append(int(cost))
        self.hash_samples.append(g.edge_hash())
        pres = self.edge_presence
        for e in zip(g.eu, g.ev):
            pres[e] = pres.get(e, 0) + 1
        self.num_samples += 1

    def merge(self, other: "EnsembleRecord") -> "EnsembleRecord":
        if other.num_edges != self.num_edges:
            raise ValueError("cannot merge records with different edge counts")
        self.rho_samples.extend(other.rho_samples)
        self.clustering_samples.extend(other.clustering_samples)
        self.cost_samples.extend(other.cost_samples)
        self.hash_samples.extend(other.hash_samples)
        for k, v in other.edge_presence.items():
            self.edge_presence[k] = self.edge_presence.get(k, 0) + v
        self.num_samples += other.num_samples
        return self


def dyad_entropy(rec: EnsembleRecord) -> float:
    """Dyad-independent entropy of the sampled ensemble.

    S = -(2/E) * sum over node pairs of [p ln p + (1-p) ln(1-p)] with
    p the empirical edge presence frequency and 0 ln 0 = 0. Pairs never
    observed contribute nothing, so the sparse presence map suffices.
    """
    if rec.num_samples < 1:
        raise ValueError("dyad_entropy needs at least one sample")
    if rec.num_edges < 1:
        raise ValueError("dyad_entropy needs E >= 1")
    ns = rec.num_samples
    acc = 0.0
    for c in rec.edge_presence.values():
        p = c / ns
        if 0.0 < p < 1.0:
            acc += p * math.log(p) + (1.0 - p) * math.log(1.0 - p)
    return -2.0 * acc / rec.num_edges


def ensemble_stats(rec: EnsembleRecord) -> tuple[float, float, float]:
    """(mean rho, population sigma rho, mean clustering) over samples."""
    if rec.num_samples < 2:
        raise ValueError("ensemble_stats needs at least two samples")
    rho = np.asarray(rec.rho_samples)
    cs = np.asarray(rec.clustering_samples)
    mean_c = float(np.nanmean(cs)) if np.any(~np.isnan(cs)) else math.nan
    return float(rho.mean()), float(rho.std(ddof=0)), mean_c


def feasible_range(
    g: Graph,
    seed: Seed,
    attempts_per_edge: int = 50,
) -> tuple[float, float]:
    """Empirical feasible assortativity interval of the degree sequence.

    Two greedy hill climbs from ``g``: propose uniform random rewirings for
    ``attempts_per_edge * E`` attempts, accepting only moves that increase
    (respectively decrease) assortativity; the end points estimate the
    extremes. Attempts count proposals, accepted or not.
    """
    ctx = DegreeSequenceContext.from_graph(g)
    if ctx.denom <= 0.0:
        raise DegenerateDegreeError("feasible range undefined for regular degree sequence")
    rho0 = assortativity(g)
    lo = _greedy_extreme(g, ctx, stream(seed, 0xFEA, 0), attempts_per_edge, up=False)
    hi = _greedy_extreme(g, ctx, stream(seed, 0xFEA, 1), attempts_per_edge, up=True)
    return min(lo, rho0), max(hi, rho0)


def _greedy_extreme(
    g: Graph,
    ctx: DegreeSequenceContext,
    rng: np.random.Generator,
    attempts_per_edge: int,
    up: bool,
) -> float:
    work = g.copy()
    m = work.num_edges
    eu, ev, adj, k = work.eu, work.ev, work.adj, work.deg
    dk_total = 0
    budget = attempts_per_edge * m
    done = 0
    chunk = 8192
    while done < budget:
        take = min(chunk, budget - done)
        ii = rng.integers(0, m, size=take).tolist()
        jj = rng.integers(0, m, size=take).tolist()
        bb = rng.integers(0, 2, size=take).tolist()
        for i, j, b in zip(ii, jj, bb):
            done += 1
            if i == j:
                continue
            u, v = eu[i], ev[i]
            x0, y0 = eu[j], ev[j]
            x, y = (x0, y0) if b == 0 else (y0, x0)
            if u == x or u == y or v == x or v == y:
                continue
            dk = (k[u] - k[y]) * (k[x] - k[v])
            if (dk <= 0) if up else (dk >= 0):
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
            dk_total += dk
    base = k_sum(g)
    return ((base + dk_total) / ctx.num_edges - ctx.mu * ctx.mu) / ctx.denom
