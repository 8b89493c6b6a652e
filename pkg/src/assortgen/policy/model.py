"""Policy/value network over rewiring actions.

A shared message-passing encoder (sum-aggregation layers with learnable
self-weight, each followed by feature-wise affine modulation generated from a
scalar conditioning input) produces node embeddings. Edge representations
concatenate the two endpoint embeddings in degree-sorted order (ties broken
by lexicographic embedding comparison, which keeps the whole network exactly
permutation-equivariant). Three heads factorize the action distribution
  pi(a | G) = pi1(e1 | G) * pi2(e2 | e1, G) * pib(b | e1, e2, G)
so scoring stays linear in the number of edges, and a value head reads the
sum-pooled embeddings together with the raw target gap.

The policy encoder is conditioned on sign(target - rho) only; the value pass
is conditioned on the full gap.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .. import __version__
from ..errors import CheckpointFormatError, FrozenGraphError
from ..graph import Graph

__all__ = [
    "ArchMeta",
    "GraphBatch",
    "PolicyNet",
    "node_features",
    "encode_graph",
    "policy_heads",
    "value_of",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArchMeta:
    """Architecture hyperparameters stored in every checkpoint."""

    layers: int = 3
    hidden: int = 64

    def validate(self) -> None:
        if self.layers < 1 or self.hidden < 1:
            raise ValueError(f"invalid architecture {self}")


class GraphBatch:
    """Block-diagonal batch of graphs prepared for the network.

    Node indices of graph ``k`` are offset so a single flat embedding tensor
    serves the whole batch; per-edge quantities live in flat arrays plus a
    (B, Emax) padding map used for row-wise masked softmax.
    """

    def __init__(self, graphs: list[tuple[np.ndarray, np.ndarray, np.ndarray]], dtype=torch.float32):
        """``graphs``: list of (eu, ev, deg) integer arrays per graph."""
        b = len(graphs)
        n_counts = [len(d) for _, _, d in graphs]
        e_counts = [len(eu) for eu, _, _ in graphs]
        node_off = np.concatenate(([0], np.cumsum(n_counts)))
        edge_off = np.concatenate(([0], np.cumsum(e_counts)))
        ntot = int(node_off[-1])
        etot = int(edge_off[-1])

        feat = np.empty(ntot, dtype=np.float64)
        node2graph = np.empty(ntot, dtype=np.int64)
        ea = np.empty(etot, dtype=np.int64)
        eb = np.empty(etot, dtype=np.int64)
        edge2graph = np.empty(etot, dtype=np.int64)
        deg_all = np.empty(ntot, dtype=np.int64)
        for k, (eu, ev, deg) in enumerate(graphs):
            o, eo = node_off[k], edge_off[k]
            kmax = deg.max() if len(deg) else 1
            feat[o : o + len(deg)] = deg / max(int(kmax), 1)
            deg_all[o : o + len(deg)] = deg
            node2graph[o : o + len(deg)] = k
            ea[eo : eo + len(eu)] = eu + o
            eb[eo : eo + len(eu)] = ev + o
            edge2graph[eo : eo + len(eu)] = k

        emax = max(e_counts) if e_counts else 0
        pad = np.full((b, emax), -1, dtype=np.int64)
        for k in range(b):
            pad[k, : e_counts[k]] = np.arange(edge_off[k], edge_off[k + 1])

        self.batch_size = b
        self.edge_counts = e_counts
        self.edge_offsets = edge_off
        self.num_nodes = ntot
        self.num_edges = etot
        self.dtype = dtype
        self.feat = torch.from_numpy(feat).to(dtype).unsqueeze(1)
        self.node2graph = torch.from_numpy(node2graph)
        self.edge2graph = torch.from_numpy(edge2graph)
        self.edge_a = torch.from_numpy(ea)
        self.edge_b = torch.from_numpy(eb)
        self.node_deg = torch.from_numpy(deg_all)
        self.deg_a = self.node_deg[self.edge_a]
        self.deg_b = self.node_deg[self.edge_b]
        src = torch.cat([self.edge_a, self.edge_b])
        dst = torch.cat([self.edge_b, self.edge_a])
        self.msg_src = src
        self.msg_dst = dst
        self.pad = torch.from_numpy(pad)
        self.pad_valid = self.pad >= 0
        self.pad_safe = self.pad.clamp(min=0)

    @classmethod
    def from_graphs(cls, graphs: list[Graph], dtype=torch.float32) -> "GraphBatch":
        return cls(
            [(np.asarray(g.eu), np.asarray(g.ev), g.degree_array()) for g in graphs], dtype=dtype
        )


def _ordered_endpoints(
    h: torch.Tensor, a_idx: torch.Tensor, b_idx: torch.Tensor,
    deg_a: torch.Tensor, deg_b: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Endpoint embeddings ordered by (degree, lexicographic embedding), descending.

    Pure relabeling of the nodes permutes embeddings identically, so this
    orientation is label-free and the downstream heads stay equivariant. The
    lexicographic comparison only runs on degree-tied edges; the swap itself
    reorders integer index vectors, so no full-width tensor is rebuilt.
    """
    swap = deg_a < deg_b
    tie = torch.nonzero(deg_a == deg_b).squeeze(1)
    if tie.numel():
        diff = h[a_idx[tie]] - h[b_idx[tie]]
        nz = diff != 0
        width = h.shape[1]
        first = torch.where(nz, torch.arange(width, device=h.device).expand_as(nz), width).min(dim=1)
        has_diff = first.values < width
        lead = torch.gather(diff, 1, first.values.clamp(max=width - 1).unsqueeze(1)).squeeze(1)
        swap = swap.clone()
        swap[tie] = has_diff & (lead < 0)
    ia = torch.where(swap, b_idx, a_idx)
    ib = torch.where(swap, a_idx, b_idx)
    return h[ia], h[ib]


class PolicyNet(nn.Module):
    def __init__(self, meta: ArchMeta = ArchMeta(), dtype=torch.float32):
        super().__init__()
        meta.validate()
        self.meta = meta
        h = meta.hidden
        self.embed = nn.Linear(1, h)
        self.gin_eps = nn.Parameter(torch.zeros(meta.layers))
        self.gin_fc1 = nn.ModuleList(nn.Linear(h, h) for _ in range(meta.layers))
        self.gin_fc2 = nn.ModuleList(nn.Linear(h, h) for _ in range(meta.layers))
        self.film = nn.ModuleList(nn.Linear(1, 2 * h) for _ in range(meta.layers))
        self.edge1_fc1 = nn.Linear(2 * h, h)
        self.edge1_fc2 = nn.Linear(h, 1)
        self.edge2_fc1 = nn.Linear(4 * h, h)
        self.edge2_fc2 = nn.Linear(h, 1)
        self.pair_fc = nn.Linear(2 * h, h)
        self.mode_fc1 = nn.Linear(h, h)
        self.mode_fc2 = nn.Linear(h, 1)
        self.value_fc1 = nn.Linear(h + 1, h)
        self.value_fc2 = nn.Linear(h, 1)
        self._init_weights()
        self.to(dtype)

    def _init_weights(self) -> None:
        for lin in self.film:
            # Start near identity modulation: scale 1, shift 0.
            nn.init.normal_(lin.weight, std=0.1)
            h = lin.out_features // 2
            with torch.no_grad():
                lin.bias[:h] = 1.0
                lin.bias[h:] = 0.0
        for lin in (self.edge1_fc2, self.edge2_fc2, self.mode_fc2, self.value_fc2):
            # Zero-init output layers: uniform initial policy, zero value.
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)

    @property
    def dtype(self) -> torch.dtype:
        return self.embed.weight.dtype

    # -- encoder ----------------------------------------------------------

    def encode(self, batch: GraphBatch, condition: torch.Tensor) -> torch.Tensor:
        """Per-node embeddings; ``condition`` is one scalar per graph."""
        cond_node = condition.to(self.dtype)[batch.node2graph]
        return self._encode(batch.feat, cond_node, batch.msg_src, batch.msg_dst)

    def encode_dual(
        self, batch: GraphBatch, cond_a: torch.Tensor, cond_b: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Embeddings of the same batch under two condition sets.

        One encoder invocation over a doubled node set; halves op-dispatch
        overhead versus two separate passes (the policy conditions on the gap
        sign while the value conditions on the full gap).
        """
        feat = torch.cat([batch.feat, batch.feat])
        cond_node = torch.cat(
            [cond_a.to(self.dtype)[batch.node2graph], cond_b.to(self.dtype)[batch.node2graph]]
        )
        src = torch.cat([batch.msg_src, batch.msg_src + batch.num_nodes])
        dst = torch.cat([batch.msg_dst, batch.msg_dst + batch.num_nodes])
        h = self._encode(feat, cond_node, src, dst)
        return h[: batch.num_nodes], h[batch.num_nodes :]

    def _encode(self, feat, cond_node, src, dst) -> torch.Tensor:
        cond_node = cond_node.unsqueeze(1)
        h = torch.tanh(self.embed(feat))
        width = self.meta.hidden
        for layer in range(self.meta.layers):
            agg = torch.zeros_like(h)
            agg.index_add_(0, dst, h[src])
            m = (1.0 + self.gin_eps[layer]) * h + agg
            m = self.gin_fc2[layer](torch.tanh(self.gin_fc1[layer](m)))
            gb = self.film[layer](cond_node)
            h = torch.tanh(gb[:, :width] * m + gb[:, width:])
        return h

    def _edge_repr(self, h: torch.Tensor, batch: GraphBatch) -> torch.Tensor:
        hi, lo = _ordered_endpoints(h, batch.edge_a, batch.edge_b, batch.deg_a, batch.deg_b)
        return torch.cat([hi, lo], dim=1)

    def _pad_scores(self, flat: torch.Tensor, batch: GraphBatch) -> torch.Tensor:
        """Scatter flat per-edge scores to (B, Emax) rows, padding with -inf."""
        rows = flat[batch.pad_safe]
        return torch.where(batch.pad_valid, rows, torch.full_like(rows, -torch.inf))

    # -- heads --------------------------------------------------------------

    def edge1_scores(self, h: torch.Tensor, batch: GraphBatch) -> tuple[torch.Tensor, torch.Tensor]:
        """(padded (B, Emax) scores, flat edge representations)."""
        z = self._edge_repr(h, batch)
        s = self.edge1_fc2(torch.tanh(self.edge1_fc1(z))).squeeze(1)
        return self._pad_scores(s, batch), z

    def edge2_scores(
        self, z: torch.Tensor, batch: GraphBatch, e1_flat: torch.Tensor
    ) -> torch.Tensor:
        """Padded scores of the second edge given per-graph chosen first edges.

        ``e1_flat`` holds flat edge indices (one per graph).
        """
        z1 = z[e1_flat]
        s = self.edge2_fc2(torch.tanh(self.edge2_fc1(torch.cat([z, z1[batch.edge2graph]], dim=1))))
        return self._pad_scores(s.squeeze(1), batch)

    def mode_scores(
        self, h: torch.Tensor, batch: GraphBatch, e1_flat: torch.Tensor, e2_flat: torch.Tensor
    ) -> torch.Tensor:
        """(B, 2) logits over the two pairings of the chosen edge pair.

        Each candidate mode is represented by its two would-be edges; each
        new edge embeds symmetrically (degree/lex-ordered endpoints) and the
        two are sum-combined, so the score depends only on the outcome.
        """
        u, v = batch.edge_a[e1_flat], batch.edge_b[e1_flat]
        x, y = batch.edge_a[e2_flat], batch.edge_b[e2_flat]
        logits = []
        for mode in (0, 1):
            p, q = (x, y) if mode == 0 else (y, x)
            r1 = self._pair_embed(h, batch, u, p)
            r2 = self._pair_embed(h, batch, v, q)
            s = self.mode_fc2(torch.tanh(self.mode_fc1(r1 + r2))).squeeze(1)
            logits.append(s)
        return torch.stack(logits, dim=1)

    def _pair_embed(
        self, h: torch.Tensor, batch: GraphBatch, a_idx: torch.Tensor, b_idx: torch.Tensor
    ) -> torch.Tensor:
        deg = batch.node_deg
        hi, lo = _ordered_endpoints(h, a_idx, b_idx, deg[a_idx], deg[b_idx])
        return torch.tanh(self.pair_fc(torch.cat([hi, lo], dim=1)))

    def value(self, batch: GraphBatch, gap: torch.Tensor) -> torch.Tensor:
        """State value per graph; encoder conditioned on the full gap."""
        return self.value_from(self.encode(batch, gap), batch, gap)

    def value_from(
        self, h: torch.Tensor, batch: GraphBatch, gap: torch.Tensor
    ) -> torch.Tensor:
        """Value head over precomputed gap-conditioned embeddings."""
        pooled = torch.zeros(batch.batch_size, self.meta.hidden, dtype=h.dtype)
        pooled.index_add_(0, batch.node2graph, h)
        x = torch.cat([pooled, gap.unsqueeze(1).to(h.dtype)], dim=1)
        return self.value_fc2(torch.tanh(self.value_fc1(x))).squeeze(1)


# -- single-graph convenience wrappers ---------------------------------------


def node_features(g: Graph) -> np.ndarray:
    """Degree of each node normalized by the graph's maximum degree."""
    deg = g.degree_array()
    kmax = int(deg.max()) if g.n else 1
    return deg / max(kmax, 1)


def encode_graph(net: PolicyNet, g: Graph, condition: float) -> np.ndarray:
    """Node embeddings of a single graph under one conditioning scalar."""
    batch = GraphBatch.from_graphs([g], dtype=net.dtype)
    with torch.no_grad():
        return net.encode(batch, torch.tensor([condition], dtype=net.dtype)).cpu().numpy()


def policy_heads(net: PolicyNet, g: Graph, sign_gap: float):
    """Stage scores of a single graph: (scores1, scorer2(e1), scorer_mode(e1, e2)).

    Raises on graphs with fewer than two edges, where no action exists.
    """
    if g.num_edges < 2:
        raise FrozenGraphError("policy heads need at least two edges")
    batch = GraphBatch.from_graphs([g], dtype=net.dtype)
    cond = torch.tensor([sign_gap], dtype=net.dtype)
    with torch.no_grad():
        h = net.encode(batch, cond)
        s1, z = net.edge1_scores(h, batch)

    def scorer2(e1: int) -> np.ndarray:
        with torch.no_grad():
            return (
                net.edge2_scores(z, batch, torch.tensor([e1]))[0].cpu().numpy()
            )

    def scorer_mode(e1: int, e2: int) -> np.ndarray:
        with torch.no_grad():
            return (
                net.mode_scores(h, batch, torch.tensor([e1]), torch.tensor([e2]))[0]
                .cpu()
                .numpy()
            )

    return s1[0].cpu().numpy(), scorer2, scorer_mode


def value_of(net: PolicyNet, g: Graph, gap: float) -> float:
    """Scalar value estimate of one graph at the given target gap."""
    batch = GraphBatch.from_graphs([g], dtype=net.dtype)
    with torch.no_grad():
        return float(net.value(batch, torch.tensor([gap], dtype=net.dtype))[0])


def save_checkpoint(path, net: PolicyNet, *, train_config: dict | None = None, seed: int | None = None) -> None:
    """Write parameters plus a manifest to a single ``.npz`` file."""
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": asdict(net.meta),
        "train_config": train_config,
        "seed": seed,
        "library_version": __version__,
    }
    arrays = {name: p.detach().cpu().numpy() for name, p in net.state_dict().items()}
    np.savez(path, __manifest__=np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path, dtype=torch.float32) -> tuple[PolicyNet, dict]:
    """Load a checkpoint; rejects unknown format versions."""
    with np.load(path) as data:
        if "__manifest__" not in data:
            raise CheckpointFormatError(f"{path}: missing manifest")
        manifest = json.loads(bytes(data["__manifest__"]).decode())
        version = manifest.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointFormatError(
                f"{path}: unsupported checkpoint format version {version!r}"
            )
        meta = ArchMeta(**manifest["arch"])
        net = PolicyNet(meta, dtype=dtype)
        state = {}
        for name in net.state_dict():
            if name not in data:
                raise CheckpointFormatError(f"{path}: missing parameter array {name!r}")
            state[name] = torch.from_numpy(np.array(data[name])).to(dtype)
        net.load_state_dict(state)
    net.eval()
    return net, manifest
