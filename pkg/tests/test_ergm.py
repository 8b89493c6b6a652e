from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from assortgen.errors import (
    ExhaustedProposalsError,
    InfeasibleTargetError,
    NotConvergedError,
)
from assortgen.ergm import MHConfig, Trajectory, mh_step, run_chain, transient_time, tune_lambda
from assortgen.graph import Graph, from_edge_list, randomize_configuration
from assortgen.metrics import assortativity, k_sum
from assortgen.rewire import DegreeSequenceContext

from conftest import random_simple_graph, star_graph


def test_mh_step_lambda_zero_accepts_every_valid(rng):
    # At lambda = 0 every valid proposal is accepted, so on a sparse graph
    # (few endpoint/duplicate collisions) the acceptance rate is high.
    g = random_simple_graph(rng, 80, 0.05)
    ctx = DegreeSequenceContext.from_graph(g)
    accepted = sum(mh_step(g, ctx, 0.0, rng)[0] for _ in range(400))
    assert accepted > 300
    g.check()


def test_mh_acceptance_probability_matches_formula(rng):
    # Empirical acceptance of dk = -1 moves at lambda = 2 is exp(-2).
    lam, dk = 2.0, -1
    target = math.exp(lam * dk)
    draws = rng.random(100_000)
    assert np.mean(draws < target) == pytest.approx(target, abs=0.01)
    # and positive dk moves always pass the clamp:
    assert min(1.0, math.exp(1.5 * 2)) == 1.0


def test_mh_step_star_graph_exhausts():
    g = star_graph(4)
    ctx = DegreeSequenceContext.from_graph(g)
    with pytest.raises(ExhaustedProposalsError):
        mh_step(g, ctx, 0.0, np.random.default_rng(0))


def test_run_chain_trajectory_length_and_reproducibility(rng):
    g = random_simple_graph(rng, 50, 0.15)
    cfg = MHConfig(lam=0.3, max_steps=2000, seed=99)
    t1, _, g1 = run_chain(g, cfg)
    t2, _, g2 = run_chain(g, cfg)
    assert len(t1) == 2000
    assert np.array_equal(t1.rho_per_step, t2.rho_per_step)
    assert g1 == g2
    assert t1.accepted_count == t2.accepted_count


def test_run_chain_incremental_rho_consistent(rng):
    g = random_simple_graph(rng, 30, 0.25)
    traj, _, final = run_chain(g, MHConfig(lam=0.5, max_steps=1500, seed=5))
    assert traj.rho_per_step[-1] == pytest.approx(assortativity(final), abs=1e-9)
    final.check()
    assert final.degree_sequence() == g.degree_sequence()


def test_run_chain_neutral_lambda_keeps_rho_near_zero():
    rng = np.random.default_rng(3)
    g = random_simple_graph(rng, 300, 6 / 299)
    g = randomize_configuration(g, seed=1)
    traj, _, _ = run_chain(g, MHConfig(lam=0.0, max_steps=40_000, seed=2))
    assert abs(traj.rho_per_step[-10_000:].mean()) < 0.03


def test_run_chain_positive_lambda_raises_rho():
    rng = np.random.default_rng(4)
    g = random_simple_graph(rng, 200, 6 / 199)
    rho0 = assortativity(g)
    for seed in range(5):
        traj, _, _ = run_chain(g, MHConfig(lam=1.0, max_steps=30_000, seed=seed))
        assert traj.rho_per_step[-5000:].mean() > rho0 + 0.1


def test_acceptance_rate_decreases_with_abs_lambda(rng):
    g = random_simple_graph(rng, 200, 0.06)
    rates = []
    for lam in (0.0, 0.5, 2.0):
        accs = []
        for seed in range(3):
            traj, _, _ = run_chain(g, MHConfig(lam=lam, max_steps=20_000, seed=seed))
            accs.append(traj.accepted_count / len(traj))
        rates.append(np.mean(accs))
    assert rates[0] > rates[1] > rates[2]


def test_run_chain_samples_post_transient(rng):
    g = random_simple_graph(rng, 100, 0.1)
    traj, samples, _ = run_chain(g, MHConfig(lam=0.4, max_steps=30_000, sample_interval=2000, seed=6))
    burn = transient_time(traj)
    assert samples, "expected post-transient snapshots"
    assert len(samples) <= 30_000 // 2000
    for s in samples:
        s.check()
        assert s.degree_sequence() == g.degree_sequence()
    assert burn < 30_000


def test_transient_constant_trace_is_zero():
    traj = Trajectory(np.full(4000, 0.25), 0)
    assert transient_time(traj) == 0


def test_transient_ramp_then_noise():
    rng = np.random.default_rng(8)
    t0, n = 3000, 20_000
    rho = np.concatenate(
        [np.linspace(-1.0, 0.0, t0), rng.normal(0.0, 0.02, size=n - t0)]
    )
    T = transient_time(Trajectory(rho, 0))
    assert abs(T - t0) <= max(150, int(0.1 * t0))


def test_transient_never_settling_errors():
    # Flat tail punctuated by large spikes all the way to the end: the
    # smoothed trace keeps leaving the band, so detection must fail.
    rng = np.random.default_rng(9)
    n = 20_000
    rho = rng.normal(0.0, 0.001, size=n)
    for start in (2_000, 8_000, 14_000, 19_000):
        rho[start : start + 200] += 1.0
    with pytest.raises(NotConvergedError):
        transient_time(Trajectory(rho, 0))


def test_tune_lambda_neutral_target():
    rng = np.random.default_rng(12)
    g = random_simple_graph(rng, 300, 6 / 299)
    res = tune_lambda(g, 0.0, seed=3)
    assert abs(res.rho_hat) <= 0.01
    assert abs(res.lam) < 0.05


def test_tune_lambda_monotone_in_target():
    rng = np.random.default_rng(13)
    g = random_simple_graph(rng, 300, 6 / 299)
    lam0 = tune_lambda(g, 0.0, seed=4).lam
    lam4 = tune_lambda(g, 0.4, seed=4).lam
    assert lam4 > lam0


def test_tune_lambda_infeasible_target():
    rng = np.random.default_rng(14)
    g = random_simple_graph(rng, 100, 0.06)
    with pytest.raises(InfeasibleTargetError):
        tune_lambda(g, 0.99, seed=5)


def enumerate_component(g0: Graph):
    """BFS over the double-edge-swap component of g0; returns {edgeset: K}."""
    from assortgen.rewire import RewiringAction, apply_action, delta_k, is_valid

    def key(g: Graph):
        return frozenset(zip(g.eu, g.ev))

    seen = {key(g0): k_sum(g0)}
    frontier = [g0.copy()]
    while frontier:
        g = frontier.pop()
        m = g.num_edges
        for i, j in itertools.permutations(range(m), 2):
            for b in (0, 1):
                a = RewiringAction(i, j, b)
                if not is_valid(g, a):
                    continue
                h = apply_action(g.copy(), a)
                kk = key(h)
                if kk not in seen:
                    seen[kk] = k_sum(h)
                    frontier.append(h)
    return seen


def test_stationary_distribution_small_space():
    # Short version of the enumeration check (the acceptance suite runs the
    # full N=8 / 1e6-step variant): empirical occupancy of the chain matches
    # exp(lam*K)/Z on the reachable component.
    g = from_edge_list(6, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5)])
    lam = 0.4
    space = enumerate_component(g)
    logw = {k: lam * v for k, v in space.items()}
    mx = max(logw.values())
    z = sum(math.exp(v - mx) for v in logw.values())
    target = {k: math.exp(v - mx) / z for k, v in logw.items()}

    counts: dict = {}

    def observer(t, graph, accepted, move):
        kk = frozenset(zip(graph.eu, graph.ev))
        counts[kk] = counts.get(kk, 0) + 1

    steps = 300_000
    run_chain(g, MHConfig(lam=lam, max_steps=steps, seed=17), observer=observer)
    assert set(counts) <= set(target)
    tv = 0.5 * sum(abs(counts.get(k, 0) / steps - p) for k, p in target.items())
    assert tv <= 0.05, f"TV distance {tv:.3f}"
