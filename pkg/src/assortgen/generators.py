"""Random-graph generators for the seven supported families.

Families: Watts-Strogatz (ws), Erdos-Renyi (er), Barabasi-Albert (ba),
stochastic block model (sbm), random geometric graph (rgg), Chung-Lu (cl),
Holme-Kim (hk). All constructions are standard; parameters are recorded in
the ModelSpec so experiment manifests can reproduce them. Connectivity is
not enforced; metrics must tolerate disconnected output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import Graph, from_edge_list
from .rng import Seed, stream

__all__ = ["FAMILIES", "ModelSpec", "spec_for_mean_degree", "generate"]

FAMILIES = ("ws", "er", "ba", "sbm", "rgg", "cl", "hk")


@dataclass(frozen=True)
class ModelSpec:
    """Family tag, node count, and family-specific parameters.

    Parameter keys per family:

    - ws: ring_k (even), rewire_p
    - er: p, or edges (exact edge count)
    - ba: m
    - sbm: blocks, p_in, p_out
    - rgg: radius (unit torus)
    - cl: weights_exponent, mean_degree
    - hk: m, triad_p
    """

    family: str
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n < 1:
            raise ConfigError(f"node count must be >= 1, got {self.n}")

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            return cls(d["family"], int(d["n"]), dict(d.get("params", {})))
        except KeyError as e:
            raise ConfigError(f"model spec missing key {e.args[0]!r}") from e


def spec_for_mean_degree(
    family: str,
    n: int,
    mean_degree: float,
    *,
    ws_rewire_p: float = 0.1,
    sbm_blocks: int = 4,
    sbm_ratio: float = 10.0,
    cl_exponent: float = 2.5,
    hk_triad_p: float = 0.5,
) -> ModelSpec:
    """Standard parameterization of each family for a target mean degree.

    Discrete families quantize: ws rounds the ring degree to the nearest even
    integer >= 2, ba/hk use m = floor(k/2) >= 1, so their realized mean degree
    can deviate from the target accordingly.
    """
    if mean_degree <= 0 or mean_degree >= n:
        raise ConfigError(f"mean degree {mean_degree} infeasible for n={n}")
    if family == "er":
        return ModelSpec("er", n, {"p": mean_degree / (n - 1)})
    if family == "ws":
        ring = max(2, 2 * round(mean_degree / 2))
        if ring >= n:
            raise ConfigError(f"ws ring degree {ring} must be < n={n}")
        return ModelSpec("ws", n, {"ring_k": ring, "rewire_p": ws_rewire_p})
    if family == "ba":
        return ModelSpec("ba", n, {"m": max(1, int(mean_degree // 2))})
    if family == "hk":
        return ModelSpec("hk", n, {"m": max(1, int(mean_degree // 2)), "triad_p": hk_triad_p})
    if family == "sbm":
        nb = n // sbm_blocks
        p_out = mean_degree / (sbm_ratio * (nb - 1) + (n - nb))
        return ModelSpec(
            "sbm", n, {"blocks": sbm_blocks, "p_in": min(1.0, sbm_ratio * p_out), "p_out": p_out}
        )
    if family == "rgg":
        return ModelSpec("rgg", n, {"radius": math.sqrt(mean_degree / (n * math.pi))})
    if family == "cl":
        return ModelSpec("cl", n, {"weights_exponent": cl_exponent, "mean_degree": mean_degree})
    raise ConfigError(f"unknown family {family!r}")


def generate(spec: ModelSpec, seed: Seed) -> Graph:
    """Generate one graph; deterministic in (spec, seed)."""
    rng = stream(seed, 0x6E9)
    fn = _GENERATORS[spec.family]
    return fn(spec.n, spec.params, rng)


# -- family constructions ---------------------------------------------------


def _gen_er(n: int, params: dict, rng: np.random.Generator) -> Graph:
    if "edges" in params:
        m = int(params["edges"])
        max_m = n * (n - 1) // 2
        if m > max_m:
            raise ConfigError(f"cannot place {m} edges on {n} nodes")
        pairs: set[tuple[int, int]] = set()
        while len(pairs) < m:
            need = m - len(pairs)
            us = rng.integers(0, n, size=2 * need + 8)
            vs = rng.integers(0, n, size=2 * need + 8)
            for u, v in zip(us.tolist(), vs.tolist()):
                if u == v:
                    continue
                e = (u, v) if u < v else (v, u)
                pairs.add(e)
                if len(pairs) == m:
                    break
        return from_edge_list(n, sorted(pairs))
    p = float(params["p"])
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"er p must be in [0,1], got {p}")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return from_edge_list(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


def _gen_ws(n: int, params: dict, rng: np.random.Generator) -> Graph:
    k = int(params["ring_k"])
    p = float(params["rewire_p"])
    if k % 2 != 0 or not 0 < k < n:
        raise ConfigError(f"ws ring_k must be even with 0 < k < n, got {k}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"ws rewire_p must be in [0,1], got {p}")
    edges: set[tuple[int, int]] = set()
    for u in range(n):
        for d in range(1, k // 2 + 1):
            v = (u + d) % n
            edges.add((u, v) if u < v else (v, u))
    # Rewire pass: each lattice edge keeps its lower endpoint and moves the
    # other to a uniform node, skipping self-loops and duplicates.
    for e in sorted(edges):
        if rng.random() >= p:
            continue
        u = e[0]
        for _ in range(64):
            w = int(rng.integers(0, n))
            if w == u:
                continue
            cand = (u, w) if u < w else (w, u)
            if cand in edges:
                continue
            edges.remove(e)
            edges.add(cand)
            break
    return from_edge_list(n, sorted(edges))


def _preferential_targets(rng, repeated: list[int], m: int, exclude: set[int]) -> list[int]:
    """m distinct degree-proportional draws from the stub list."""
    chosen: set[int] = set()
    while len(chosen) < m:
        t = repeated[int(rng.integers(0, len(repeated)))]
        if t not in exclude and t not in chosen:
            chosen.add(t)
    return sorted(chosen)


def _gen_ba(n: int, params: dict, rng: np.random.Generator) -> Graph:
    m = int(params["m"])
    if not 1 <= m < n:
        raise ConfigError(f"ba m must satisfy 1 <= m < n, got m={m}, n={n}")
    # Seed with an (m+1)-clique, then attach each new node to m distinct
    # targets sampled proportionally to degree. E = C(m+1,2) + (n-m-1)*m.
    edges: list[tuple[int, int]] = [(i, j) for i in range(m + 1) for j in range(i + 1, m + 1)]
    repeated: list[int] = []
    for u, v in edges:
        repeated.append(u)
        repeated.append(v)
    for new in range(m + 1, n):
        targets = _preferential_targets(rng, repeated, m, {new})
        for t in targets:
            edges.append((t, new))
            repeated.append(t)
            repeated.append(new)
    return from_edge_list(n, edges)


def _gen_hk(n: int, params: dict, rng: np.random.Generator) -> Graph:
    m = int(params["m"])
    tp = float(params["triad_p"])
    if not 1 <= m < n:
        raise ConfigError(f"hk m must satisfy 1 <= m < n, got m={m}, n={n}")
    if not 0.0 <= tp <= 1.0:
        raise ConfigError(f"hk triad_p must be in [0,1], got {tp}")
    edges: set[tuple[int, int]] = {
        (i, j) for i in range(m + 1) for j in range(i + 1, m + 1)
    }
    adj: list[set[int]] = [set() for _ in range(n)]
    repeated: list[int] = []
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
        repeated.append(u)
        repeated.append(v)

    def link(a: int, b: int) -> None:
        e = (a, b) if a < b else (b, a)
        edges.add(e)
        adj[a].add(b)
        adj[b].add(a)
        repeated.append(a)
        repeated.append(b)

    for new in range(m + 1, n):
        first = _preferential_targets(rng, repeated, 1, {new})[0]
        link(first, new)
        prev = first
        for _ in range(m - 1):
            cands = [w for w in adj[prev] if w != new and w not in adj[new]]
            if cands and rng.random() < tp:
                t = cands[int(rng.integers(0, len(cands)))]
            else:
                t = _preferential_targets(rng, repeated, 1, {new} | adj[new])[0]
            link(t, new)
            prev = t
    return from_edge_list(n, sorted(edges))


def _gen_sbm(n: int, params: dict, rng: np.random.Generator) -> Graph:
    blocks = int(params["blocks"])
    p_in = float(params["p_in"])
    p_out = float(params["p_out"])
    if blocks < 1 or blocks > n:
        raise ConfigError(f"sbm blocks must be in [1, n], got {blocks}")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ConfigError("sbm requires 0 <= p_out <= p_in <= 1")
    label = np.arange(n) * blocks // n  # equal blocks up to rounding
    iu, ju = np.triu_indices(n, k=1)
    same = label[iu] == label[ju]
    p = np.where(same, p_in, p_out)
    keep = rng.random(iu.shape[0]) < p
    return from_edge_list(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


def _gen_rgg(n: int, params: dict, rng: np.random.Generator) -> Graph:
    r = float(params["radius"])
    if not 0.0 < r < 0.5:
        raise ConfigError(f"rgg radius must be in (0, 0.5), got {r}")
    pts = rng.random((n, 2))
    # Cell grid on the unit torus keeps candidate pairs local.
    ncell = max(1, int(1.0 / r))
    cell_of = (pts * ncell).astype(np.int64) % ncell
    buckets: dict[tuple[int, int], list[int]] = {}
    for idx, (cx, cy) in enumerate(cell_of.tolist()):
        buckets.setdefault((cx, cy), []).append(idx)
    r2 = r * r
    edges: list[tuple[int, int]] = []
    for (cx, cy), members in buckets.items():
        neigh: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                neigh.extend(buckets.get(((cx + dx) % ncell, (cy + dy) % ncell), []))
        for u in members:
            pu = pts[u]
            for v in neigh:
                if v <= u:
                    continue
                d = np.abs(pts[v] - pu)
                d = np.minimum(d, 1.0 - d)
                if d[0] * d[0] + d[1] * d[1] <= r2:
                    edges.append((u, v))
    return from_edge_list(n, sorted(set(edges)))


def _gen_cl(n: int, params: dict, rng: np.random.Generator) -> Graph:
    gamma = float(params["weights_exponent"])
    kbar = float(params["mean_degree"])
    if gamma <= 1.0:
        raise ConfigError(f"cl weights_exponent must be > 1, got {gamma}")
    w = np.arange(1, n + 1, dtype=np.float64) ** (-1.0 / (gamma - 1.0))
    w *= n * kbar / w.sum()
    s = w.sum()
    iu, ju = np.triu_indices(n, k=1)
    p = np.minimum(1.0, w[iu] * w[ju] / s)
    keep = rng.random(iu.shape[0]) < p
    return from_edge_list(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


_GENERATORS = {
    "er": _gen_er,
    "ws": _gen_ws,
    "ba": _gen_ba,
    "hk": _gen_hk,
    "sbm": _gen_sbm,
    "rgg": _gen_rgg,
    "cl": _gen_cl,
}
