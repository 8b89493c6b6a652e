"""Experiment orchestration: ensemble builders, scaling fits, significance
tests, and the CSV/JSON exporters behind the CLI's ``experiment`` kinds.

Every experiment writes plot-ready CSV files plus a ``manifest.json`` that
records the full configuration, seeds, package version and the
design-decision defaults in effect, so a rerun from the manifest reproduces
the outputs byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.stats

from . import __version__
from .errors import ConfigError, InfeasibleTargetError, NotConvergedError
from .generators import ModelSpec, generate, spec_for_mean_degree
from .graph import Graph, from_edge_list, randomize_configuration, read_edge_list
from .metrics import (
    EnsembleRecord,
    FluxMatrix,
    JointDegreeMatrix,
    assortativity,
    clustering,
    dyad_entropy,
    ensemble_stats,
    feasible_range,
    flux,
    joint_degree_matrix,
    k_sum,
)
from .ergm import MHConfig, TuneResult, run_chain, transient_time, tune_lambda
from .policy.actors import EpisodeConfig, GreedyActor, PolicyActor, run_episode
from .policy.model import load_checkpoint
from .rng import Seed, child_seed, stream

__all__ = [
    "ScalingFit",
    "fit_scaling",
    "significance_test",
    "hard_ensemble",
    "ergm_ensemble",
    "run_experiment",
    "EXPERIMENT_KINDS",
]

# Reported for context in cost-scaling manifests; desk-scale runs are not
# expected to reproduce them.
REFERENCE_EXPONENTS = {
    "ergm": {"alpha": 1.51, "alpha_err": 0.08, "beta": 1.14, "beta_err": 0.29},
    "dmgg": {"alpha": 1.56, "alpha_err": 0.26, "beta": 0.86, "beta_err": 0.22},
}


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of log10 T = alpha |rho| + beta log10 N + c."""

    alpha: float
    beta: float
    intercept: float
    stderr_alpha: float
    stderr_beta: float
    stderr_intercept: float
    r_squared: float


def fit_scaling(data: list[tuple[float, float, float]]) -> ScalingFit:
    """Fit generation cost T(rho, N); ``data`` holds (rho, N, T) triples.

    Requires at least three distinct (|rho|, N) combinations and T >= 1;
    raises ``ValueError`` on a rank-deficient design.
    """
    if len(data) < 3:
        raise ValueError("need at least 3 observations")
    rho = np.array([abs(d[0]) for d in data], dtype=np.float64)
    n = np.array([d[1] for d in data], dtype=np.float64)
    t = np.array([d[2] for d in data], dtype=np.float64)
    if np.any(t < 1):
        raise ValueError("generation costs must be >= 1")
    if len({(round(r, 12), round(v, 12)) for r, v in zip(rho, n)}) < 3:
        raise ValueError("need >= 3 distinct (|rho|, N) combinations")
    x = np.column_stack([rho, np.log10(n), np.ones_like(rho)])
    y = np.log10(t)
    if np.linalg.matrix_rank(x) < 3:
        raise ValueError("rank-deficient design (vary both |rho| and N)")
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    dof = len(y) - 3
    sigma2 = rss / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(x.T @ x)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return ScalingFit(
        alpha=float(coef[0]),
        beta=float(coef[1]),
        intercept=float(coef[2]),
        stderr_alpha=float(se[0]),
        stderr_beta=float(se[1]),
        stderr_intercept=float(se[2]),
        r_squared=float(r2),
    )


def significance_test(samples_a: list[float], samples_b: list[float]) -> float:
    """Two-sided Mann-Whitney U p-value (normal approximation, tie-corrected).

    Returns 1.0 when every value in both samples coincides (no discriminating
    information). Requires at least 5 observations per side.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if len(a) < 5 or len(b) < 5:
        raise ValueError("significance_test needs >= 5 samples per side")
    if np.ptp(np.concatenate([a, b])) == 0.0:
        return 1.0
    res = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic")
    return float(min(max(res.pvalue, np.finfo(float).tiny), 1.0))


# -- ensemble builders --------------------------------------------------------


@dataclass
class HardRunSpec:
    """Arguments of one hard-constraint sample (picklable for worker pools)."""

    graph: Graph
    target: float
    epsilon: float
    seed: Seed
    pool_size: int = 64
    checkpoint: str | None = None
    randomize: bool = True
    swaps_per_edge: int = 20
    step_cap: int | None = None


def _hard_sample(spec: HardRunSpec) -> tuple[list[tuple[int, int]], float, int, bool]:
    g = spec.graph
    if spec.randomize:
        g = randomize_configuration(g, child_seed(spec.seed, 1), spec.swaps_per_edge * g.num_edges)
    if spec.checkpoint is None:
        actor = GreedyActor(pool_size=spec.pool_size)
    else:
        net, _ = load_checkpoint(spec.checkpoint)
        actor = PolicyActor(net, sample=True)
    cfg = EpisodeConfig(rho_target=spec.target, epsilon=spec.epsilon, step_cap=spec.step_cap)
    res = run_episode(g, cfg, actor, child_seed(spec.seed, 2), keep_trace=False)
    return list(res.graph.edges()), float(res.trace[-1]), res.steps, res.success


def hard_ensemble(
    g: Graph,
    target: float,
    epsilon: float,
    num_samples: int,
    seed: Seed,
    *,
    pool_size: int = 64,
    checkpoint: str | None = None,
    randomize: bool = True,
    swaps_per_edge: int = 20,
    step_cap: int | None = None,
    threads: int = 1,
) -> tuple[EnsembleRecord, int]:
    """Generate a hard-constrained ensemble; returns (record, failures).

    Each sample independently randomizes the input graph (configuration
    model) and rewires it into the tolerance window. Failed episodes are
    excluded from the record and counted.
    """
    specs = [
        HardRunSpec(
            graph=g,
            target=target,
            epsilon=epsilon,
            seed=child_seed(seed, 0x4A, i),
            pool_size=pool_size,
            checkpoint=checkpoint,
            randomize=randomize,
            swaps_per_edge=swaps_per_edge,
            step_cap=step_cap,
        )
        for i in range(num_samples)
    ]
    rec = EnsembleRecord(num_edges=g.num_edges)
    failures = 0
    for edges, rho, steps, success in _map(_hard_sample, specs, threads):
        if not success:
            failures += 1
            continue
        rec.add(from_edge_list(g.n, edges), rho=rho, cost=steps)
    return rec, failures


@dataclass
class ChainRunSpec:
    graph: Graph
    lam: float
    steps: int
    seed: Seed
    randomize: bool = True
    swaps_per_edge: int = 20


def _chain_sample(spec: ChainRunSpec) -> tuple[list[tuple[int, int]], float, int]:
    g = spec.graph
    if spec.randomize:
        g = randomize_configuration(g, child_seed(spec.seed, 1), spec.swaps_per_edge * g.num_edges)
    traj, _, final = run_chain(g, MHConfig(spec.lam, spec.steps, seed=child_seed(spec.seed, 2)))
    try:
        t_burn = transient_time(traj)
    except NotConvergedError:
        t_burn = -1
    return list(final.edges()), float(traj.rho_per_step[-1]), t_burn


def ergm_ensemble(
    g: Graph,
    lam: float,
    num_samples: int,
    seed: Seed,
    *,
    chain_steps: int | None = None,
    calibration_steps: int | None = None,
    randomize: bool = True,
    swaps_per_edge: int = 20,
    threads: int = 1,
) -> tuple[EnsembleRecord, float]:
    """Equilibrium ensemble at fixed lambda: one sample per independent chain.

    A calibration chain estimates the transient; every sampling chain then
    runs twice that long (at least) and contributes its final graph. Returns
    (record, mean per-chain transient in proposals). Per-sample generation
    cost is each chain's own detected transient.
    """
    m = g.num_edges
    if calibration_steps is None:
        calibration_steps = max(60 * m, 40_000)
    if chain_steps is None:
        g0 = randomize_configuration(g, child_seed(seed, 3), swaps_per_edge * m) if randomize else g
        traj, _, _ = run_chain(g0, MHConfig(lam, calibration_steps, seed=child_seed(seed, 4)))
        t_est = transient_time(traj)
        chain_steps = max(2 * t_est, 10 * m, 2000)
    specs = [
        ChainRunSpec(
            graph=g,
            lam=lam,
            steps=chain_steps,
            seed=child_seed(seed, 0x4B, i),
            randomize=randomize,
            swaps_per_edge=swaps_per_edge,
        )
        for i in range(num_samples)
    ]
    rec = EnsembleRecord(num_edges=m)
    transients = []
    for edges, rho, t_burn in _map(_chain_sample, specs, threads):
        cost = t_burn if t_burn >= 0 else chain_steps
        rec.add(from_edge_list(g.n, edges), rho=rho, cost=cost)
        transients.append(cost)
    return rec, float(np.mean(transients)) if transients else math.nan


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- output helpers -----------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_samples_csv(path, rec: EnsembleRecord) -> None:
    rows = [
        (i, rec.rho_samples[i], rec.clustering_samples[i], rec.cost_samples[i], rec.hash_samples[i])
        for i in range(rec.num_samples)
    ]
    write_csv(path, ["run_id", "rho", "C", "T", "edge_hash"], rows)


def write_matrix_csv(path, values: dict[tuple[int, int], float]) -> None:
    rows = [(k1, k2, v) for (k1, k2), v in sorted(values.items())]
    write_csv(path, ["k1", "k2", "value"], rows)


def _defaults_metadata() -> dict:
    return {
        "randomize_swaps_per_edge": 20,
        "feasible_attempts_per_edge": 50,
        "greedy_pool_size": 64,
        "transient_band_sigmas": 4.0,
        "transient_final_fraction": 0.25,
        "tune_tolerance": 0.01,
        "sigma_formula": "population (divide by n)",
        "mode_semantics": "mode 0 pairs (u,x),(v,y); mode 1 pairs (u,y),(v,x)",
    }


class ExperimentWriter:
    def __init__(self, out_dir: str, kind: str, config: dict, seed: Seed):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.manifest: dict = {
            "schema_version": 1,
            "kind": kind,
            "seed": int(seed),
            "config": config,
            "library_version": __version__,
            "defaults": _defaults_metadata(),
            "outputs": [],
        }

    def path(self, name: str) -> str:
        self.manifest["outputs"].append(name)
        return os.path.join(self.out_dir, name)

    def finish(self, **extra) -> None:
        self.manifest.update(extra)
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- graph sourcing -----------------------------------------------------------


def resolve_graph(params: dict, seed: Seed) -> tuple[Graph, dict]:
    """Build the input graph from ``model``/``edge_list`` config keys."""
    if "edge_list" in params:
        g = read_edge_list(params["edge_list"])
        return g, {"edge_list": params["edge_list"], "n": g.n, "m": g.num_edges}
    if "model" in params:
        spec = ModelSpec.from_dict(params["model"])
        g = generate(spec, child_seed(seed, 0x9E))
        return g, {"model": spec.to_dict(), "n": g.n, "m": g.num_edges}
    raise ConfigError("experiment needs either 'model' or 'edge_list'")


def _require_feasible(g: Graph, targets: list[float], seed: Seed) -> tuple[float, float]:
    lo, hi = feasible_range(g, child_seed(seed, 0xFE))
    for t in targets:
        if not lo <= t <= hi:
            raise InfeasibleTargetError(
                f"target {t} outside feasible range [{lo:.3f}, {hi:.3f}]"
            )
    return lo, hi


# -- experiment kinds ----------------------------------------------------------


def _check_params(params: dict, allowed: dict[str, object]) -> dict:
    """Apply defaults and reject unknown keys."""
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown parameter(s): {sorted(unknown)}")
    out = dict(allowed)
    out.update(params)
    return out


def exp_generate(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(params, {"model": None, "edge_list": None, "randomize": False})
    p = {k: v for k, v in p.items() if v is not None}
    g, meta = resolve_graph(p, seed)
    if p.get("randomize"):
        g = randomize_configuration(g, child_seed(seed, 1))
    from .graph import write_edge_list

    write_edge_list(g, out.path("graph.txt"))
    summary = _graph_metrics(g)
    with open(out.path("metrics.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"graph": meta, "metrics": summary}


def _graph_metrics(g: Graph) -> dict:
    try:
        rho = assortativity(g)
    except Exception:
        rho = None
    return {
        "n": g.n,
        "m": g.num_edges,
        "assortativity": rho,
        "clustering": clustering(g),
        "k_sum": k_sum(g),
        "edge_hash": g.edge_hash(),
    }


def exp_metrics(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(params, {"edge_list": None, "model": None})
    p = {k: v for k, v in p.items() if v is not None}
    g, meta = resolve_graph(p, seed)
    summary = _graph_metrics(g)
    with open(out.path("metrics.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    jd = joint_degree_matrix(g)
    write_matrix_csv(out.path("joint_degree.csv"), {k: float(v) for k, v in jd.counts.items()})
    return {"graph": meta, "metrics": summary}


def exp_ergm_tune(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(params, {"model": None, "edge_list": None, "target": 0.4,
                               "tolerance": 0.01, "randomize": True})
    p = {k: v for k, v in p.items() if v is not None}
    g, meta = resolve_graph(p, seed)
    if p["randomize"]:
        g = randomize_configuration(g, child_seed(seed, 1))
    res = tune_lambda(g, p["target"], child_seed(seed, 2), tolerance=p["tolerance"])
    write_csv(out.path("tuning.csv"), ["iteration", "lambda", "rho_hat"], res.history)
    return {"graph": meta, "lambda": res.lam, "rho_hat": res.rho_hat, "iterations": res.iterations}


def exp_ergm_run(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"model": None, "edge_list": None, "target": None, "lambda": None,
         "steps": 100_000, "sample_interval": 0, "randomize": True, "num_samples": 0,
         "tolerance": 0.01},
    )
    p = {k: v for k, v in p.items() if v is not None}
    g, meta = resolve_graph(p, seed)
    if p["randomize"]:
        g = randomize_configuration(g, child_seed(seed, 1))
    if "lambda" in p:
        lam = float(p["lambda"])
    elif "target" in p:
        lam = tune_lambda(g, p["target"], child_seed(seed, 2), tolerance=p["tolerance"]).lam
    else:
        raise ConfigError("ergm run needs 'lambda' or 'target'")

    accepted_flags: list[int] = []
    traj, samples, final = run_chain(
        g,
        MHConfig(lam, int(p["steps"]), sample_interval=int(p["sample_interval"]),
                 seed=child_seed(seed, 3)),
        observer=lambda t, graph, ok, move: accepted_flags.append(int(ok)),
    )
    rows = [(t, float(traj.rho_per_step[t]), accepted_flags[t]) for t in range(len(traj))]
    write_csv(out.path("chain.csv"), ["step", "rho", "accepted"], rows)
    summary: dict = {"graph": meta, "lambda": lam, "final_rho": float(traj.rho_per_step[-1]),
                     "accepted": traj.accepted_count}
    try:
        summary["transient"] = transient_time(traj)
    except NotConvergedError:
        summary["transient"] = None
    if p["num_samples"]:
        rec, mean_t = ergm_ensemble(
            g, lam, int(p["num_samples"]), child_seed(seed, 4), randomize=p["randomize"],
            threads=threads,
        )
        write_samples_csv(out.path("samples.csv"), rec)
        mean_rho, sigma_rho, mean_c = ensemble_stats(rec)
        summary.update({"mean_rho": mean_rho, "sigma_rho": sigma_rho, "mean_C": mean_c,
                        "mean_transient": mean_t, "entropy": dyad_entropy(rec)})
    return summary


def exp_dmgg_run(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"model": None, "edge_list": None, "targets": [0.4], "epsilon": 0.001,
         "num_samples": 100, "actor": "greedy", "checkpoint": None, "pool_size": 64,
         "randomize": True, "step_cap": None},
    )
    p = {k: v for k, v in p.items() if v is not None or k in ("checkpoint", "step_cap")}
    g, meta = resolve_graph(p, seed)
    if p["actor"] == "policy" and not p["checkpoint"]:
        raise ConfigError("actor 'policy' requires a 'checkpoint' path")
    if p["actor"] not in ("greedy", "policy"):
        raise ConfigError(f"unknown actor {p['actor']!r}")
    _require_feasible(g, [float(t) for t in p["targets"]], seed)
    summaries = []
    for k, target in enumerate(p["targets"]):
        rec, failures = hard_ensemble(
            g, float(target), float(p["epsilon"]), int(p["num_samples"]),
            child_seed(seed, 5, k),
            pool_size=int(p["pool_size"]),
            checkpoint=p["checkpoint"] if p["actor"] == "policy" else None,
            randomize=bool(p["randomize"]),
            step_cap=p["step_cap"],
            threads=threads,
        )
        write_samples_csv(out.path(f"samples_rho{target:+.3f}.csv"), rec)
        row = {"target": float(target), "failures": failures, "num_samples": rec.num_samples}
        if rec.num_samples >= 2:
            mean_rho, sigma_rho, mean_c = ensemble_stats(rec)
            row.update({"mean_rho": mean_rho, "sigma_rho": sigma_rho, "mean_C": mean_c,
                        "mean_T": float(np.mean(rec.cost_samples)),
                        "entropy": dyad_entropy(rec)})
        summaries.append(row)
    return {"graph": meta, "ensembles": summaries}


def exp_sigma_vs_n(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"family": "er", "mean_degree": 6.0, "sizes": [100, 400, 1600],
         "targets": [0.4], "epsilon": 0.001, "num_samples": 50, "pool_size": 64,
         "checkpoint": None, "tolerance": 0.01},
    )
    rows = []
    for n in p["sizes"]:
        spec = ModelSpec("er", int(n), {"edges": int(round(n * p["mean_degree"] / 2))}) \
            if p["family"] == "er" else spec_for_mean_degree(p["family"], int(n), p["mean_degree"])
        g = generate(spec, child_seed(seed, 0x51, n))
        for target in p["targets"]:
            lam = tune_lambda(g, float(target), child_seed(seed, 0x52, n),
                              tolerance=p["tolerance"]).lam
            rec_e, mean_t = ergm_ensemble(g, lam, int(p["num_samples"]),
                                          child_seed(seed, 0x53, n), threads=threads)
            mean_rho, sigma_rho, mean_c = ensemble_stats(rec_e)
            rows.append((int(n), float(target), "ergm", mean_rho, sigma_rho, mean_c,
                         mean_t, rec_e.num_samples))
            rec_d, fails = hard_ensemble(g, float(target), float(p["epsilon"]),
                                         int(p["num_samples"]), child_seed(seed, 0x54, n),
                                         pool_size=int(p["pool_size"]),
                                         checkpoint=p["checkpoint"], threads=threads)
            mean_rho, sigma_rho, mean_c = ensemble_stats(rec_d)
            rows.append((int(n), float(target), "dmgg", mean_rho, sigma_rho, mean_c,
                         float(np.mean(rec_d.cost_samples)), rec_d.num_samples))
    write_csv(out.path("sigma_vs_n.csv"),
              ["n", "rho_target", "method", "mean_rho", "sigma_rho", "mean_C",
               "mean_T", "num_samples"], rows)
    return {"rows": len(rows)}


def exp_entropy_vs_rho(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"model": None, "edge_list": None, "targets": [-0.4, 0.0, 0.4],
         "epsilon": 0.001, "num_samples": 300, "pool_size": 64, "checkpoint": None,
         "tolerance": 0.01},
    )
    p = {k: v for k, v in p.items() if v is not None or k == "checkpoint"}
    g, meta = resolve_graph(p, seed)
    rows = []
    for k, target in enumerate(p["targets"]):
        lam = tune_lambda(g, float(target), child_seed(seed, 0x61, k), tolerance=p["tolerance"]).lam
        rec_e, mean_t_e = ergm_ensemble(g, lam, int(p["num_samples"]), child_seed(seed, 0x62, k),
                                        threads=threads)
        rows.append((float(target), "ergm", dyad_entropy(rec_e), mean_t_e, rec_e.num_samples))
        rec_d, _ = hard_ensemble(g, float(target), float(p["epsilon"]), int(p["num_samples"]),
                                 child_seed(seed, 0x63, k), pool_size=int(p["pool_size"]),
                                 checkpoint=p["checkpoint"], threads=threads)
        rows.append((float(target), "dmgg", dyad_entropy(rec_d),
                     float(np.mean(rec_d.cost_samples)), rec_d.num_samples))
    write_csv(out.path("entropy_vs_rho.csv"),
              ["rho_target", "method", "entropy", "mean_T", "num_samples"], rows)
    return {"graph": meta, "rows": len(rows)}


def exp_cost_scaling(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"family": "er", "mean_degree": 6.0, "sizes": [100, 400, 1600],
         "targets": [-0.4, 0.4], "epsilon": 0.001, "num_seeds": 5, "pool_size": 64,
         "checkpoint": None, "tolerance": 0.01},
    )
    rows = []
    fits = {}
    per_method: dict[str, list[tuple[float, float, float]]] = {"ergm": [], "dmgg": []}
    for n in p["sizes"]:
        m = int(round(n * p["mean_degree"] / 2))
        g = generate(ModelSpec("er", int(n), {"edges": m}), child_seed(seed, 0x71, n)) \
            if p["family"] == "er" else generate(
                spec_for_mean_degree(p["family"], int(n), p["mean_degree"]),
                child_seed(seed, 0x71, n))
        for target in p["targets"]:
            lam = tune_lambda(g, float(target), child_seed(seed, 0x72, n, int(target * 1000)),
                              tolerance=p["tolerance"]).lam
            for s in range(int(p["num_seeds"])):
                base_seed = child_seed(seed, 0x73, n, int(target * 1000), s)
                g0 = randomize_configuration(g, child_seed(base_seed, 1))
                traj, _, _ = run_chain(
                    g0, MHConfig(lam, max(60 * m, 40_000), seed=child_seed(base_seed, 2)))
                try:
                    t_ergm = transient_time(traj)
                except NotConvergedError:
                    t_ergm = len(traj)
                t_ergm = max(t_ergm, 1)
                rows.append((int(n), float(target), "ergm", s, t_ergm))
                per_method["ergm"].append((float(target), float(n), float(t_ergm)))
                actor = GreedyActor(int(p["pool_size"])) if not p["checkpoint"] else None
                if actor is None:
                    net, _ = load_checkpoint(p["checkpoint"])
                    actor = PolicyActor(net)
                res = run_episode(
                    g0, EpisodeConfig(rho_target=float(target), epsilon=float(p["epsilon"])),
                    actor, child_seed(base_seed, 3), keep_trace=False)
                t_dmgg = max(res.steps, 1)
                rows.append((int(n), float(target), "dmgg", s, t_dmgg))
                per_method["dmgg"].append((float(target), float(n), float(t_dmgg)))
    write_csv(out.path("cost_scaling.csv"), ["n", "rho_target", "method", "seed", "T"], rows)
    for method, data in per_method.items():
        try:
            fits[method] = asdict(fit_scaling(data))
        except ValueError as e:
            fits[method] = {"error": str(e)}
    return {"fits": fits, "reference_exponents": REFERENCE_EXPONENTS}


def exp_topology_sweep(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"families": ["ws", "er", "sbm", "rgg", "cl", "hk", "ba"], "n": 400,
         "mean_degree": 6.0, "targets": [-0.4, -0.2, 0.0, 0.2, 0.4], "epsilon": 0.001,
         "num_samples": 20, "pool_size": 64, "checkpoint": None},
    )
    rows = []
    for fam in p["families"]:
        g = generate(spec_for_mean_degree(fam, int(p["n"]), p["mean_degree"]),
                     child_seed(seed, 0x81, hash(fam) & 0xFFFF))
        lo, hi = feasible_range(g, child_seed(seed, 0x82, hash(fam) & 0xFFFF))
        for target in p["targets"]:
            if not lo <= float(target) <= hi:
                rows.append((fam, float(target), "infeasible", 0, math.nan, math.nan, 0))
                continue
            rec, fails = hard_ensemble(
                g, float(target), float(p["epsilon"]), int(p["num_samples"]),
                child_seed(seed, 0x83, hash(fam) & 0xFFFF),
                pool_size=int(p["pool_size"]), checkpoint=p["checkpoint"], threads=threads)
            ok = rec.num_samples
            mean_t = float(np.mean(rec.cost_samples)) if ok else math.nan
            mean_c = float(np.nanmean(rec.clustering_samples)) if ok else math.nan
            rows.append((fam, float(target), "dmgg", ok, mean_t, mean_c, fails))
    write_csv(out.path("topology_sweep.csv"),
              ["family", "rho_target", "status", "num_samples", "mean_T", "mean_C",
               "failures"], rows)
    return {"rows": len(rows)}


def exp_clustering_compare(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"model": None, "edge_list": None, "targets": [0.0, 0.6], "epsilon": 0.001,
         "num_samples": 100, "pool_size": 64, "checkpoint": None},
    )
    p = {k: v for k, v in p.items() if v is not None or k == "checkpoint"}
    g, meta = resolve_graph(p, seed)
    _require_feasible(g, [float(t) for t in p["targets"]], seed)
    recs = {}
    rows = []
    for k, target in enumerate(p["targets"]):
        rec, _ = hard_ensemble(g, float(target), float(p["epsilon"]), int(p["num_samples"]),
                               child_seed(seed, 0x91, k), pool_size=int(p["pool_size"]),
                               checkpoint=p["checkpoint"], threads=threads)
        recs[float(target)] = rec
        write_samples_csv(out.path(f"samples_rho{target:+.3f}.csv"), rec)
        rows.append((float(target), float(np.nanmean(rec.clustering_samples)), rec.num_samples))
    write_csv(out.path("clustering_vs_rho.csv"), ["rho_target", "mean_C", "num_samples"], rows)
    pairs = []
    targets = [float(t) for t in p["targets"]]
    for i in range(len(targets)):
        for j in range(i + 1, len(targets)):
            pv = significance_test(recs[targets[i]].clustering_samples,
                                   recs[targets[j]].clustering_samples)
            pairs.append({"rho_a": targets[i], "rho_b": targets[j], "p_value": pv})
    return {"graph": meta, "pairs": pairs}


def exp_flux_snapshots(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    p = _check_params(
        params,
        {"model": None, "edge_list": None, "target": 0.8, "epsilon": 0.005,
         "levels": [0.2, 0.4, 0.6], "num_runs": 30, "pool_size": 64,
         "checkpoint": None, "tolerance": 0.015, "window_fraction": 0.1},
    )
    p = {k: v for k, v in p.items() if v is not None or k == "checkpoint"}
    g, meta = resolve_graph(p, seed)
    target = float(p["target"])
    _require_feasible(g, [target], seed)
    lam = tune_lambda(g, target, child_seed(seed, 0xA1), tolerance=p["tolerance"]).lam
    summary: dict = {"graph": meta, "lambda": lam, "levels": {}}
    l1 = {}
    for method in ("ergm", "dmgg"):
        fluxes, mean_steps = _flux_for_method(
            method, g, target, lam, p, seed
        )
        for level, fm in fluxes.items():
            write_matrix_csv(out.path(f"flux_{method}_rho{level:+.2f}.csv"), fm.values)
            l1[(method, level)] = fm.l1_norm()
        summary["levels"][method] = {
            str(level): {"step": mean_steps[level], "l1": l1[(method, level)]}
            for level in fluxes
        }
    ratios = {
        str(level): l1[("dmgg", level)] / l1[("ergm", level)]
        for level in p["levels"]
        if l1.get(("ergm", level), 0) > 0
    }
    summary["l1_ratio_dmgg_over_ergm"] = ratios
    return summary


def _flux_for_method(method, g, target, lam, p, seed):
    """Two passes per run: trajectories locate the level crossings of the
    mean rho trace; a deterministic re-run snapshots J at the window edges.

    ``levels`` are magnitudes along the way to the target: level v means the
    first step where the mean rho trace passes sign(target) * |v|. Flux at a
    level is the per-step change of J averaged over runs and over a window
    of ``window_fraction`` of the crossing time.
    """
    num_runs = int(p["num_runs"])
    levels = [float(v) for v in p["levels"]]
    sgn = 1.0 if target >= 0 else -1.0

    def run_once(i, observer=None):
        """Unified trace: entry c is rho after c proposals/rewirings."""
        g0 = randomize_configuration(g, child_seed(seed, 0xB0, i), 20 * g.num_edges)
        rho0 = assortativity(g0)
        if method == "ergm":
            steps = int(p.get("ergm_steps", max(60 * g.num_edges, 40_000)))
            traj, _, _ = run_chain(g0, MHConfig(lam, steps, seed=child_seed(seed, 0xB1, i)),
                                   observer=observer)
            return np.concatenate([[rho0], traj.rho_per_step])
        actor = GreedyActor(int(p["pool_size"])) if not p.get("checkpoint") else None
        if actor is None:
            net, _ = load_checkpoint(p["checkpoint"])
            actor = PolicyActor(net, sample=True)
        res = run_episode(g0, EpisodeConfig(rho_target=target, epsilon=float(p["epsilon"])),
                          actor, child_seed(seed, 0xB1, i), observer=observer)
        return res.trace

    # Pass 1: mean trajectory (runs extended by their final value) and the
    # first crossing of each level.
    traces = [run_once(i) for i in range(num_runs)]
    max_len = max(len(t) for t in traces)
    mean_trace = np.empty(max_len)
    for t in range(max_len):
        mean_trace[t] = float(np.mean([tr[t] if t < len(tr) else tr[-1] for tr in traces]))
    windows: dict[float, tuple[int, int]] = {}
    for level in levels:
        hit = np.nonzero(sgn * mean_trace >= abs(level))[0]
        c0 = int(hit[0]) if len(hit) else max_len - 1
        c0 = max(c0, 1)
        width = max(1, int(round(float(p["window_fraction"]) * c0)))
        windows[level] = (c0, c0 + width)

    # Pass 2: deterministic re-run capturing J after c proposals at the
    # window boundaries (observer step t mutates J_after(t) = J at c=t+1).
    bounds = sorted({c - 1 for w in windows.values() for c in w})
    per_level_runs: dict[float, list[list[JointDegreeMatrix]]] = {lv: [] for lv in levels}
    for i in range(num_runs):
        snaps: dict[int, JointDegreeMatrix] = {}
        tracker = _JTracker(randomize_configuration(g, child_seed(seed, 0xB0, i),
                                                    20 * g.num_edges))
        want = set(bounds)

        def observer(t, graph, accepted, move, tracker=tracker, snaps=snaps, want=want):
            tracker.update(move)
            if t in want:
                snaps[t] = tracker.snapshot()

        run_once(i, observer=observer)
        final = tracker.snapshot()
        for level, (a, b) in windows.items():
            ja = snaps.get(a - 1, final)
            jb = snaps.get(b - 1, final)
            per_level_runs[level].append([ja, jb])
    fluxes = {}
    for level, (a, b) in windows.items():
        fm = flux(per_level_runs[level], 0)
        width = b - a
        fluxes[level] = FluxMatrix({k: v / width for k, v in fm.values.items()}, a, fm.num_runs)
    return fluxes, {lv: windows[lv][0] for lv in levels}


class _JTracker:
    """Joint-degree matrix maintained incrementally from observer moves."""

    def __init__(self, g: Graph):
        self.deg = list(g.deg)
        self.counts = dict(joint_degree_matrix(g).counts)
        self.num_edges = g.num_edges

    def update(self, move) -> None:
        if move is None:
            return
        (r1, r2, a1, a2) = move
        for u, v in (r1, r2):
            key = self._key(u, v)
            c = self.counts[key] - 1
            if c:
                self.counts[key] = c
            else:
                del self.counts[key]
        for u, v in (a1, a2):
            key = self._key(u, v)
            self.counts[key] = self.counts.get(key, 0) + 1

    def _key(self, u, v):
        a, b = self.deg[u], self.deg[v]
        return (a, b) if a <= b else (b, a)

    def snapshot(self) -> JointDegreeMatrix:
        return JointDegreeMatrix(dict(self.counts), self.num_edges)


def exp_train(params: dict, seed: Seed, threads: int, out: ExperimentWriter) -> dict:
    from .training import DomainConfig, RewardConfig, TrainConfig, train
    from .policy.model import ArchMeta

    p = _check_params(
        params,
        {"micro_benchmark": False, "total_steps": 2_000_000, "num_envs": 16,
         "rollout_steps": 4096, "eval_every": 10, "eval_episodes": 24,
         "early_stop_success": 0.95, "domain": None, "arch": None, "seed_offset": 0},
    )
    if p["micro_benchmark"]:
        from .training import micro_benchmark_config

        cfg = micro_benchmark_config(seed=child_seed(seed, p["seed_offset"]),
                                     total_steps=int(p["total_steps"]))
    else:
        domain = DomainConfig(**p["domain"]) if p["domain"] else DomainConfig()
        arch = ArchMeta(**p["arch"]) if p["arch"] else ArchMeta()
        cfg = TrainConfig(
            domain=domain, arch=arch, total_steps=int(p["total_steps"]),
            num_envs=int(p["num_envs"]), rollout_steps=int(p["rollout_steps"]),
            eval_every=int(p["eval_every"]), eval_episodes=int(p["eval_episodes"]),
            early_stop_success=float(p["early_stop_success"]),
            seed=child_seed(seed, p["seed_offset"]),
        )
    res = train(cfg, out.out_dir)
    out.manifest["outputs"].extend(["checkpoint.npz", "training_curve.csv"])
    return {"env_steps": res.env_steps, "success_rate": res.success_rate,
            "mean_T": res.mean_episode_steps}


EXPERIMENT_KINDS = {
    "generate": exp_generate,
    "metrics": exp_metrics,
    "ergm-tune": exp_ergm_tune,
    "ergm-run": exp_ergm_run,
    "dmgg-run": exp_dmgg_run,
    "train": exp_train,
    "sigma-vs-N": exp_sigma_vs_n,
    "entropy-vs-rho": exp_entropy_vs_rho,
    "cost-scaling": exp_cost_scaling,
    "topology-sweep": exp_topology_sweep,
    "clustering-compare": exp_clustering_compare,
    "flux-snapshots": exp_flux_snapshots,
}


def run_experiment(kind: str, params: dict, seed: Seed, out_dir: str, threads: int = 1) -> dict:
    """Execute one experiment kind; writes CSVs + manifest.json to ``out_dir``."""
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of "
                          f"{sorted(EXPERIMENT_KINDS)}")
    writer = ExperimentWriter(out_dir, kind, {"params": params, "threads": threads}, seed)
    summary = EXPERIMENT_KINDS[kind](params, seed, threads, writer)
    writer.finish(summary=summary)
    return summary
