"""Action selection and episode execution for hard-constraint generation.

Two actors drive episodes: a trained policy network (sampling or argmax) and
a training-free greedy baseline that scores a random pool of valid actions.
Episodes rewire a working graph until its assortativity enters the physical
tolerance window around the target or a step cap is hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from ..errors import DegenerateDegreeError, FrozenGraphError
from ..graph import Graph
from ..metrics import assortativity, k_sum
from ..rewire import DegreeSequenceContext, RewiringAction, apply_action
from ..rng import Seed, stream
from .masks import GraphArrays, MaskConfig, e1_mask, e2_mask, mode_mask
from .model import GraphBatch, PolicyNet

__all__ = [
    "epsilon_phys",
    "EpisodeConfig",
    "EpisodeState",
    "EpisodeResult",
    "StageHeads",
    "StageMasks",
    "sample_action",
    "GreedyActor",
    "PolicyActor",
    "Decision",
    "policy_decide",
    "run_episode",
]


def epsilon_phys(epsilon: float, num_edges: int, var_k: float) -> float:
    """Tolerance floor: one rewiring moves rho by a finite amount, so the
    effective window is max(epsilon, 2 / (E * Var(k)))."""
    if num_edges < 1:
        raise ValueError("epsilon_phys needs at least one edge")
    if var_k <= 0.0:
        raise DegenerateDegreeError("epsilon_phys undefined for zero degree variance")
    return max(epsilon, 2.0 / (num_edges * var_k))


@dataclass(frozen=True)
class EpisodeConfig:
    """Target, tolerance and step cap; reward constants matter only when the
    episode feeds training rollouts."""

    rho_target: float
    epsilon: float = 0.001
    step_cap: int | None = None  # None: use 10 * E
    zeta: float = 0.005
    step_penalty: float = 0.001
    success_bonus: float = 100.0
    gamma: float = 0.997

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.step_cap is not None and self.step_cap < 0:
            raise ValueError("step_cap must be >= 0")

    def cap_for(self, g: Graph) -> int:
        return self.step_cap if self.step_cap is not None else 10 * g.num_edges


class EpisodeState:
    """One live episode over a privately owned graph."""

    def __init__(self, g: Graph, cfg: EpisodeConfig, rng: np.random.Generator):
        self.g = g
        self.cfg = cfg
        self.rng = rng
        self.ctx = DegreeSequenceContext.from_graph(g)
        if self.ctx.denom <= 0.0:
            raise DegenerateDegreeError("episodes need a non-degenerate degree sequence")
        self.rho = assortativity(g)
        self.eps = epsilon_phys(cfg.epsilon, g.num_edges, self.ctx.var_k)
        self.steps = 0
        self._arrays: GraphArrays | None = None
        self._since_check = 0
        self.last_move: tuple | None = None

    @property
    def gap(self) -> float:
        return self.cfg.rho_target - self.rho

    @property
    def sign(self) -> float:
        return 1.0 if self.gap >= 0 else -1.0

    @property
    def within_window(self) -> bool:
        return abs(self.gap) <= self.eps

    def arrays(self) -> GraphArrays:
        if self._arrays is None:
            self._arrays = GraphArrays(self.g)
        return self._arrays

    def dk_of(self, a: RewiringAction) -> int:
        u, v = self.g.eu[a.e1], self.g.ev[a.e1]
        x, y = self.g.eu[a.e2], self.g.ev[a.e2]
        if a.mode == 1:
            x, y = y, x
        k = self.g.deg
        return (k[u] - k[y]) * (k[x] - k[v])

    def apply(self, a: RewiringAction) -> None:
        dk = self.dk_of(a)
        u, v = self.g.eu[a.e1], self.g.ev[a.e1]
        x0, y0 = self.g.eu[a.e2], self.g.ev[a.e2]
        x, y = (x0, y0) if a.mode == 0 else (y0, x0)
        self.last_move = ((u, v), (x0, y0), (u, x), (v, y))
        apply_action(self.g, a)
        self.rho += dk / (self.ctx.num_edges * self.ctx.denom)
        self.steps += 1
        self._arrays = None
        self._since_check += 1
        if self._since_check >= 10_000:
            self._since_check = 0
            exact = (
                k_sum(self.g) / self.ctx.num_edges - self.ctx.mu**2
            ) / self.ctx.denom
            if abs(exact - self.rho) > 1e-8:
                raise AssertionError(f"incremental rho drifted: {self.rho} vs {exact}")
            self.rho = exact


# -- single-graph sampling (spec-level op) ----------------------------------


@dataclass
class StageHeads:
    """Score providers for the three factorized stages of one graph."""

    scores1: np.ndarray
    scores2: Callable[[int], np.ndarray]
    scores_mode: Callable[[int, int], np.ndarray]


@dataclass
class StageMasks:
    mask1: np.ndarray
    mask2: Callable[[int], np.ndarray]
    mask_mode: Callable[[int, int], np.ndarray]


def _masked_log_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.full(len(scores), -np.inf)
    s = scores[mask]
    m = s.max()
    logz = m + math.log(np.exp(s - m).sum())
    out[mask] = s - logz
    return out


def _categorical(logp: np.ndarray, rng: np.random.Generator, greedy: bool) -> int:
    if greedy:
        return int(np.argmax(logp))
    p = np.exp(logp)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def sample_action(
    heads: StageHeads, masks: StageMasks, rng: np.random.Generator, *, greedy: bool = False
) -> tuple[RewiringAction, float]:
    """Sample (or argmax) one action stage by stage; returns joint log-prob.

    Masked entries have probability exactly zero; raises ``FrozenGraphError``
    on an empty stage mask.
    """
    if not masks.mask1.any():
        raise FrozenGraphError("empty first-stage mask")
    lp1 = _masked_log_softmax(heads.scores1, masks.mask1)
    e1 = _categorical(lp1, rng, greedy)
    m2 = masks.mask2(e1)
    if not m2.any():
        raise FrozenGraphError("empty second-stage mask")
    lp2 = _masked_log_softmax(heads.scores2(e1), m2)
    e2 = _categorical(lp2, rng, greedy)
    mb = masks.mask_mode(e1, e2)
    if not mb.any():
        raise FrozenGraphError("empty mode mask")
    lpb = _masked_log_softmax(heads.scores_mode(e1, e2), mb)
    b = _categorical(lpb, rng, greedy)
    return RewiringAction(e1, e2, b), float(lp1[e1] + lp2[e2] + lpb[b])


# -- greedy baseline ---------------------------------------------------------


@dataclass
class GreedyActor:
    """Training-free baseline: sample a pool of valid actions, keep the one
    whose rho step lands closest to the target.

    Far from the target this reduces to maximizing sign(gap) * dK; near the
    target it avoids overshooting the tolerance window, which a bare
    max-|dK| rule would oscillate across indefinitely.
    """

    pool_size: int = 64

    def choose(self, state: EpisodeState) -> RewiringAction:
        arrays = state.arrays()
        m = arrays.num_edges
        if m < 2:
            raise FrozenGraphError("graph has fewer than two edges")
        rng = state.rng
        want_dk = state.gap * state.ctx.num_edges * state.ctx.denom
        best: tuple[float, int, int, int] | None = None
        found = 0
        attempts = 0
        cap = 100 * self.pool_size
        while found < self.pool_size and attempts < cap:
            take = min(2 * self.pool_size, cap - attempts)
            i = rng.integers(0, m, size=take)
            j = rng.integers(0, m, size=take)
            b = rng.integers(0, 2, size=take)
            attempts += take
            valid, dk = arrays.eval(i, j, b)
            idx = np.flatnonzero(valid)
            if idx.size == 0:
                continue
            take_n = min(idx.size, self.pool_size - found)
            for t in idx[:take_n].tolist():
                score = abs(want_dk - dk[t])
                if best is None or score < best[0]:
                    best = (score, int(i[t]), int(j[t]), int(b[t]))
            found += take_n
        if best is None:
            raise FrozenGraphError(f"no valid action in {cap} pool draws")
        return RewiringAction(best[1], best[2], best[3])


# -- policy actor ------------------------------------------------------------


@dataclass
class Decision:
    """Outcome of one policy step for one episode."""

    action: RewiringAction
    log_prob: float
    value: float | None
    entropy: float
    mask1: np.ndarray
    mask2: np.ndarray
    mask_mode: np.ndarray


def policy_decide(
    net: PolicyNet,
    states: list[EpisodeState],
    *,
    sample: bool = True,
    need_value: bool = False,
    mask_cfg: MaskConfig = MaskConfig(),
) -> list[Decision]:
    """Run the policy over a batch of live episodes and pick one action each.

    Frozen episodes raise ``FrozenGraphError`` before any tensor work when
    the batch has a single state; in multi-state batches the error propagates
    from mask construction (training maps graphs that cannot freeze).
    """
    arrays = [s.arrays() for s in states]
    masks1 = [e1_mask(arr, s.rng, mask_cfg) for arr, s in zip(arrays, states)]
    graphs = [(arr.eu, arr.ev, arr.deg) for arr in arrays]
    batch = GraphBatch(graphs, dtype=net.dtype)
    cond = torch.tensor([s.sign for s in states], dtype=net.dtype)

    with torch.no_grad():
        h_val = None
        if need_value:
            gaps = torch.tensor([s.gap for s in states], dtype=net.dtype)
            h, h_val = net.encode_dual(batch, cond, gaps)
        else:
            h = net.encode(batch, cond)
        s1_pad, z = net.edge1_scores(h, batch)
        s1 = s1_pad.cpu().numpy()

        e1_pick: list[int] = []
        lp1: list[float] = []
        ent1: list[float] = []
        for k, s in enumerate(states):
            mask = masks1[k][0]
            row = _masked_log_softmax(s1[k, : len(mask)], mask)
            pick = _categorical(row, s.rng, not sample)
            e1_pick.append(pick)
            lp1.append(row[pick])
            ent1.append(_entropy(row))

        e1_flat = torch.tensor(
            [batch.edge_offsets[k] + e1_pick[k] for k in range(len(states))], dtype=torch.int64
        )
        s2_pad = net.edge2_scores(z, batch, e1_flat).cpu().numpy()
        masks2 = [e2_mask(arrays[k], e1_pick[k])[0] for k in range(len(states))]
        e2_pick: list[int] = []
        lp2: list[float] = []
        ent2: list[float] = []
        for k, s in enumerate(states):
            row = _masked_log_softmax(s2_pad[k, : len(masks2[k])], masks2[k])
            pick = _categorical(row, s.rng, not sample)
            e2_pick.append(pick)
            lp2.append(row[pick])
            ent2.append(_entropy(row))

        e2_flat = torch.tensor(
            [batch.edge_offsets[k] + e2_pick[k] for k in range(len(states))], dtype=torch.int64
        )
        sb = net.mode_scores(h, batch, e1_flat, e2_flat).cpu().numpy()
        masksb = [mode_mask(arrays[k], e1_pick[k], e2_pick[k])[0] for k in range(len(states))]
        out: list[Decision] = []
        values: np.ndarray | None = None
        if need_value:
            values = net.value_from(h_val, batch, gaps).cpu().numpy()
        for k, s in enumerate(states):
            row = _masked_log_softmax(sb[k], masksb[k])
            b = _categorical(row, s.rng, not sample)
            out.append(
                Decision(
                    action=RewiringAction(e1_pick[k], e2_pick[k], b),
                    log_prob=float(lp1[k] + lp2[k] + row[b]),
                    value=float(values[k]) if values is not None else None,
                    entropy=float(ent1[k] + ent2[k] + _entropy(row)),
                    mask1=masks1[k][0],
                    mask2=masks2[k],
                    mask_mode=masksb[k],
                )
            )
    return out


def _entropy(logp: np.ndarray) -> float:
    finite = logp > -np.inf
    p = np.exp(logp[finite])
    return float(-(p * logp[finite]).sum())


@dataclass
class PolicyActor:
    """Wraps a trained network as an episode actor."""

    net: PolicyNet
    sample: bool = False  # argmax by default at inference
    mask_cfg: MaskConfig = field(default_factory=MaskConfig)

    def choose(self, state: EpisodeState) -> RewiringAction:
        return policy_decide(
            self.net, [state], sample=self.sample, mask_cfg=self.mask_cfg
        )[0].action


# -- episode loop ------------------------------------------------------------


@dataclass
class EpisodeResult:
    graph: Graph
    steps: int
    success: bool
    trace: np.ndarray  # rho after step t, trace[0] = initial rho
    frozen: bool = False


def run_episode(
    g: Graph,
    cfg: EpisodeConfig,
    actor,
    seed: Seed,
    observer=None,
    keep_trace: bool = True,
) -> EpisodeResult:
    """Rewire a copy of ``g`` until |rho - target| <= eps_phys or the cap.

    A frozen graph mid-episode yields a failed result with partial trace
    rather than an exception. ``observer(t, graph, True)`` fires after every
    applied rewiring.
    """
    state = EpisodeState(g.copy(), cfg, stream(seed, 0xE9))
    cap = cfg.cap_for(g)
    trace = [state.rho] if keep_trace else None
    frozen = False
    while not state.within_window and state.steps < cap:
        try:
            action = actor.choose(state)
        except FrozenGraphError:
            frozen = True
            break
        state.apply(action)
        if trace is not None:
            trace.append(state.rho)
        if observer is not None:
            observer(state.steps - 1, state.g, True, state.last_move)
    return EpisodeResult(
        graph=state.g,
        steps=state.steps,
        success=state.within_window,
        trace=np.asarray(trace if trace is not None else [state.rho]),
        frozen=frozen,
    )
