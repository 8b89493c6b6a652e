"""Canonical-ensemble baseline: Metropolis-Hastings rewiring chain.

The chain proposes a uniformly random (edge, edge, mode) triple each step and
accepts valid proposals with probability min(1, exp(lambda * dK)). Invalid
proposals (self-loop, duplicate, identity) are counted as rejected steps;
this keeps the proposal kernel symmetric, so the stationary distribution on
the reachable component is exactly exp(lambda * K) / Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDegreeError,
    ExhaustedProposalsError,
    InfeasibleTargetError,
    NotConvergedError,
)
from .graph import Graph
from .metrics import assortativity, feasible_range, k_sum
from .rewire import DegreeSequenceContext
from .rng import Seed, stream

__all__ = [
    "MHConfig",
    "Trajectory",
    "TuneResult",
    "mh_step",
    "run_chain",
    "transient_time",
    "tune_lambda",
]

# Consecutive invalid proposals before a graph is declared frozen.
PROPOSAL_CAP = 1000


@dataclass(frozen=True)
class MHConfig:
    lam: float
    max_steps: int
    sample_interval: int = 0  # 0 disables in-chain snapshots
    seed: Seed = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.sample_interval < 0:
            raise ValueError("sample_interval must be >= 0")


@dataclass
class Trajectory:
    """Assortativity after every proposal (accepted or not)."""

    rho_per_step: np.ndarray
    accepted_count: int

    def __len__(self) -> int:
        return len(self.rho_per_step)


@dataclass
class TuneResult:
    lam: float
    rho_hat: float
    iterations: int
    history: list[tuple[int, float, float]] = field(default_factory=list)  # (iter, lam, rho_hat)


class _ChainState:
    """Mutable chain over a graph (copied by default); drives all chain entry points."""

    def __init__(
        self, g: Graph, ctx: DegreeSequenceContext, rng: np.random.Generator, copy: bool = True
    ):
        work = g.copy() if copy else g
        self.g = work
        self.ctx = ctx
        self.rng = rng
        self.rho = (k_sum(work) / ctx.num_edges - ctx.mu**2) / ctx.denom
        self.inv_ed = 1.0 / (ctx.num_edges * ctx.denom)
        self._invalid_run = 0
        self._pos = 0
        self._blk = 0
        self._steps_since_check = 0
        # Degree pairs (removed1, removed2, added1, added2) of the last
        # accepted move; lets observers track the joint-degree matrix in O(1).
        self.last_move: tuple | None = None

    def _draw(self, m: int):
        if self._pos == self._blk:
            size = 8192
            r = self.rng
            self._ii = r.integers(0, m, size=size).tolist()
            self._jj = r.integers(0, m, size=size).tolist()
            self._bb = r.integers(0, 2, size=size).tolist()
            self._uu = r.random(size=size).tolist()
            self._blk = size
            self._pos = 0
        p = self._pos
        self._pos = p + 1
        return self._ii[p], self._jj[p], self._bb[p], self._uu[p]

    def step(self, lam: float) -> bool:
        """One proposal; returns True iff it was accepted and applied."""
        g = self.g
        eu, ev, adj, k = g.eu, g.ev, g.adj, g.deg
        m = len(eu)
        i, j, b, r = self._draw(m)
        accept = False
        valid = False
        if i != j:
            u, v = eu[i], ev[i]
            x0, y0 = eu[j], ev[j]
            x, y = (x0, y0) if b == 0 else (y0, x0)
            if not (u == x or u == y or v == x or v == y) and x not in adj[u] and y not in adj[v]:
                valid = True
                dk = (k[u] - k[y]) * (k[x] - k[v])
                ld = lam * dk
                if ld >= 0.0 or r < math.exp(ld):
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
                    self.rho += dk * self.inv_ed
                    self.last_move = ((u, v), (x0, y0), (u, x), (v, y))
                    accept = True
        # A long run of *invalid* proposals means the graph is (nearly)
        # frozen; rejected-but-valid proposals are normal chain dynamics.
        if valid:
            self._invalid_run = 0
        else:
            self._invalid_run += 1
            if self._invalid_run >= PROPOSAL_CAP:
                raise ExhaustedProposalsError(
                    f"no valid proposal in {PROPOSAL_CAP} consecutive draws"
                )
        # Drift guard: refresh incremental rho from scratch periodically.
        self._steps_since_check += 1
        if self._steps_since_check >= 10_000:
            self._steps_since_check = 0
            exact = (k_sum(g) / self.ctx.num_edges - self.ctx.mu**2) / self.ctx.denom
            if abs(exact - self.rho) > 1e-8:
                raise AssertionError(f"incremental rho drifted: {self.rho} vs {exact}")
            self.rho = exact
        return accept


def mh_step(
    g: Graph, ctx: DegreeSequenceContext, lam: float, rng: np.random.Generator
) -> tuple[bool, float]:
    """Single Metropolis-Hastings step applied in place to ``g``.

    Draws uniform (edge, edge, mode) proposals, resampling invalid ones up to
    ``PROPOSAL_CAP`` times (raising ``ExhaustedProposalsError`` if none is
    valid, e.g. on a star graph), then accepts the valid proposal with
    probability min(1, exp(lam * dK)). Returns (accepted, new assortativity).

    Note: :func:`run_chain` instead counts invalid draws as rejected steps,
    which keeps the proposal kernel symmetric and the stationary distribution
    exactly proportional to exp(lam * K).
    """
    if ctx.denom <= 0.0:
        raise DegenerateDegreeError("MH chain needs a non-degenerate degree sequence")
    eu, ev, adj, k = g.eu, g.ev, g.adj, g.deg
    m = len(eu)
    rho = (k_sum(g) / ctx.num_edges - ctx.mu**2) / ctx.denom
    if m < 2:
        raise ExhaustedProposalsError("graph has fewer than two edges")
    for _ in range(PROPOSAL_CAP):
        i = int(rng.integers(0, m))
        j = int(rng.integers(0, m))
        b = int(rng.integers(0, 2))
        if i == j:
            continue
        u, v = eu[i], ev[i]
        x0, y0 = eu[j], ev[j]
        x, y = (x0, y0) if b == 0 else (y0, x0)
        if u == x or u == y or v == x or v == y:
            continue
        if x in adj[u] or y in adj[v]:
            continue
        dk = (k[u] - k[y]) * (k[x] - k[v])
        ld = lam * dk
        if ld < 0.0 and rng.random() >= math.exp(ld):
            return False, rho
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
        return True, rho + dk / (ctx.num_edges * ctx.denom)
    raise ExhaustedProposalsError(f"no valid proposal in {PROPOSAL_CAP} draws")


def run_chain(g: Graph, cfg: MHConfig, observer=None) -> tuple[Trajectory, list[Graph], Graph]:
    """Run ``cfg.max_steps`` proposals from a copy of ``g``.

    Returns the trajectory, post-transient snapshots (every
    ``sample_interval`` steps, kept only if taken after the detected
    transient; empty if detection fails or the interval is 0), and the final
    graph. Deterministic in (g, cfg).

    ``observer(t, graph, accepted, move)``, if given, is called after every
    proposal with the live chain graph (do not mutate it); ``move`` holds the
    node pairs (removed1, removed2, added1, added2) of an accepted move, else
    None.
    """
    ctx = DegreeSequenceContext.from_graph(g)
    if ctx.denom <= 0.0:
        raise DegenerateDegreeError("MH chain needs a non-degenerate degree sequence")
    state = _ChainState(g, ctx, stream(cfg.seed, 0xE26))
    rho_log = np.empty(cfg.max_steps, dtype=np.float64)
    accepted = 0
    snaps: list[tuple[int, Graph]] = []
    for t in range(cfg.max_steps):
        ok = state.step(cfg.lam)
        if ok:
            accepted += 1
        rho_log[t] = state.rho
        if observer is not None:
            observer(t, state.g, ok, state.last_move if ok else None)
        if cfg.sample_interval and (t + 1) % cfg.sample_interval == 0:
            snaps.append((t, state.g.copy()))
    traj = Trajectory(rho_log, accepted)
    samples: list[Graph] = []
    if snaps:
        try:
            burn = transient_time(traj)
        except NotConvergedError:
            burn = None
        if burn is not None:
            samples = [gr for t, gr in snaps if t >= burn]
    return traj, samples, state.g


def transient_time(
    traj: Trajectory, *, final_fraction: float = 0.25, band_sigmas: float = 4.0
) -> int:
    """First step after which the smoothed trace stays in the steady band.

    The steady state is characterized by the mean and standard deviation of
    the final ``final_fraction`` of the raw trace; the trace is smoothed by a
    centered moving average of window ``max(100, len/200)`` (shrinking at the
    boundaries) and the band is ``mean +- band_sigmas * std``. Raises
    ``NotConvergedError`` if the settle point lands inside the final window
    itself, which means no steady regime was actually reached before it.

    The default multiplier is 4: rewiring chains decorrelate over thousands
    of proposals, so the smoothed equilibrium trace makes occasional 2-3
    sigma excursions that a tighter band would misread as transient.
    """
    rho = np.asarray(traj.rho_per_step, dtype=np.float64)
    nsteps = len(rho)
    if nsteps < 4:
        raise NotConvergedError(f"trajectory too short ({nsteps} steps)")
    tail = rho[int(nsteps * (1.0 - final_fraction)) :]
    m = float(tail.mean())
    s = float(tail.std(ddof=0))
    w = max(100, nsteps // 200)
    half = w // 2
    cs = np.concatenate(([0.0], np.cumsum(rho)))
    lo = np.maximum(0, np.arange(nsteps) - half)
    hi = np.minimum(nsteps, np.arange(nsteps) + half + 1)
    smooth = (cs[hi] - cs[lo]) / (hi - lo)
    outside = np.abs(smooth - m) > band_sigmas * s + 1e-15
    if not outside.any():
        return 0
    settle = int(np.nonzero(outside)[0][-1]) + 1
    if settle >= int(nsteps * (1.0 - final_fraction)):
        raise NotConvergedError(
            f"trace still leaves the steady band at step {settle} of {nsteps}", best=settle
        )
    return settle


def tune_lambda(
    g: Graph,
    rho_target: float,
    seed: Seed,
    *,
    tolerance: float = 0.01,
    pilot_steps_per_edge: int = 20,
    verify_steps_per_edge: int = 60,
    gain_decay_iters: float = 8.0,
    max_iters: int = 60,
    feasibility_margin: float = 0.02,
    probe_lambda: float = 0.05,
) -> TuneResult:
    """Find lambda whose equilibrium mean assortativity matches the target.

    Robbins-Monro iteration ``lam += a_n * (target - rho_hat)`` with
    ``a_n = a0 / (1 + n/gain_decay_iters)``. The base gain ``a0`` is the
    inverse of a slope estimate obtained from two bootstrap pilots (lambda =
    0 and a small probe), because the response slope varies by orders of
    magnitude across degree sequences. Each ``rho_hat`` is the mean over the
    second half of a pilot chain of ``pilot_steps_per_edge * E`` proposals
    that continues from the previous pilot's end state (warm start). A longer
    verification chain at the best lambda must land within ``tolerance`` or a
    ``NotConvergedError`` carrying the best result is raised.
    """
    ctx = DegreeSequenceContext.from_graph(g)
    if ctx.denom <= 0.0:
        raise DegenerateDegreeError("cannot tune lambda for a regular degree sequence")
    lo, hi = feasible_range(g, seed)
    if not (lo + feasibility_margin <= rho_target <= hi - feasibility_margin):
        raise InfeasibleTargetError(
            f"target {rho_target} outside feasible range [{lo:.3f}, {hi:.3f}] with margin"
        )
    m = g.num_edges
    pilot = pilot_steps_per_edge * m
    state = _ChainState(g, ctx, stream(seed, 0x70E))
    history: list[tuple[int, float, float]] = []

    def run_pilot(lam: float, steps: int) -> float:
        acc = 0.0
        kept = 0
        for t in range(steps):
            state.step(lam)
            if 2 * t >= steps:
                acc += state.rho
                kept += 1
        return acc / kept

    # Bootstrap: response at 0 plus a small probe seeds the slope estimate,
    # since the rho(lambda) slope varies by orders of magnitude across graphs
    # and flattens heavily toward the feasibility extremes.
    it = 0
    rho_hat = run_pilot(0.0, pilot)
    history.append((it, 0.0, rho_hat))
    lam = 0.0
    slope = 0.5
    if abs(rho_target - rho_hat) > 0.25 * tolerance:
        probe = math.copysign(probe_lambda, rho_target - rho_hat)
        rho1 = run_pilot(probe, pilot)
        it += 1
        history.append((it, probe, rho1))
        slope = min(max((rho1 - rho_hat) / probe, 0.02), 100.0)
        lam, rho_hat = probe, rho1

    def advance(gap: float) -> None:
        # Robbins-Monro step with a secant-refreshed gain: the local slope is
        # re-estimated from consecutive iterates (EMA-smoothed) so the gain
        # tracks the flattening response near the extremes.
        nonlocal it, lam, rho_hat, slope
        it += 1
        lam_prev, rho_prev = lam, rho_hat
        lam += (1.0 / slope) / (1.0 + it / gain_decay_iters) * gap
        rho_hat = run_pilot(lam, pilot)
        history.append((it, lam, rho_hat))
        if abs(lam - lam_prev) > 1e-9:
            local = (rho_hat - rho_prev) / (lam - lam_prev)
            if 0.0 < local < 1e4:
                slope = min(max(0.5 * slope + 0.5 * local, 0.02), 100.0)

    best: tuple[float, float, float] = (math.inf, lam, math.nan)  # (|verified gap|, lam, rho)
    verify = verify_steps_per_edge * m
    while True:
        settled = 0
        while it < max_iters:
            gap = rho_target - rho_hat
            if abs(gap) <= 0.5 * tolerance:
                settled += 1
                if settled >= 2:
                    break
            else:
                settled = 0
            advance(gap)
        # Long verification chain; its mean is also the best available
        # estimate, so on a miss it feeds back into the iteration.
        rho_v = run_pilot(lam, verify)
        history.append((it, lam, rho_v))
        if abs(rho_target - rho_v) < best[0]:
            best = (abs(rho_target - rho_v), lam, rho_v)
        if abs(rho_target - rho_v) <= tolerance:
            return TuneResult(lam, rho_v, len(history), history)
        if it >= max_iters:
            break
        rho_hat = rho_v
        advance(rho_target - rho_v)

    result = TuneResult(best[1], best[2], len(history), history)
    raise NotConvergedError(
        f"lambda tuning stalled: best rho_hat {best[2]:.4f} vs target {rho_target}",
        best=result,
    )
