"""PPO training of the rewiring policy at desk scale.

Episodes are sampled from a configurable domain (family, size, sparsity,
target), rolled out in lockstep across a batch of environments, and scored
with a shaped reward: the change of a potential that sharpens toward the
target, minus a step penalty, plus a large bonus when the hard window is
entered. Updates use the clipped surrogate objective with GAE advantages.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch

from .errors import ConfigError, NotConvergedError
from .generators import spec_for_mean_degree, generate
from .graph import Graph, randomize_configuration
from .metrics import feasible_range
from .policy.actors import Decision, EpisodeConfig, EpisodeState, policy_decide
from .policy.masks import MaskConfig
from .policy.model import ArchMeta, GraphBatch, PolicyNet, save_checkpoint
from .rng import Seed, child_seed, stream

__all__ = [
    "RewardConfig",
    "DomainConfig",
    "TrainConfig",
    "potential",
    "reward",
    "gae",
    "RolloutBuffer",
    "ppo_update",
    "train",
    "run_episodes_batched",
    "micro_benchmark_config",
]


@dataclass(frozen=True)
class RewardConfig:
    zeta: float = 0.005
    step_penalty: float = 0.001
    success_bonus: float = 100.0
    gamma: float = 0.997

    def __post_init__(self):
        if self.zeta <= 0:
            raise ConfigError("zeta must be > 0")
        if self.step_penalty < 0:
            raise ConfigError("step_penalty must be >= 0")
        if self.success_bonus < 1:
            raise ConfigError("success_bonus must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must be in (0, 1)")


def potential(rho: float, rho_target: float, zeta: float) -> float:
    """Shaping potential (|target| + zeta) / (|target - rho| + zeta).

    Equals 1 exactly at rho = 0 and peaks at 1 + |target|/zeta on target.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    return (abs(rho_target) + zeta) / (abs(rho_target - rho) + zeta)


def reward(
    rho_prev: float,
    rho_new: float,
    rho_target: float,
    cfg: RewardConfig,
    eps_phys: float,
) -> float:
    """Per-step reward: potential gain, step penalty, success bonus.

    The success indicator uses the physical tolerance window, consistent with
    episode termination.
    """
    r = potential(rho_new, rho_target, cfg.zeta) - potential(rho_prev, rho_target, cfg.zeta)
    r -= cfg.step_penalty
    if abs(rho_new - rho_target) <= eps_phys:
        r += cfg.success_bonus
    return r


def gae(
    rewards, values, bootstrap: float, gamma: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates over one contiguous segment.

    ``bootstrap`` is the value of the state following the last step (0 for a
    terminal state). Returns (advantages, returns) with
    returns = advantages + values.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError(f"length mismatch: {r.shape} rewards vs {v.shape} values")
    n = len(r)
    adv = np.empty(n)
    nxt = bootstrap
    acc = 0.0
    for t in range(n - 1, -1, -1):
        delta = r[t] + gamma * nxt - v[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
        nxt = v[t]
    return adv, adv + v


# -- training domain ---------------------------------------------------------


@dataclass(frozen=True)
class DomainConfig:
    """Episode sampler domain: graph family/size/sparsity and targets."""

    families: tuple[str, ...] = ("ws", "er", "ba")
    n_min: int = 100
    n_max: int = 1000
    mean_degree_min: float = 3.0
    mean_degree_max: float = 10.0
    target_min: float = -0.5
    target_max: float = 0.5
    target_abs_min: float = 0.0
    epsilon: float = 0.005
    feasible_margin: float = 0.1  # fraction of the feasible half-width
    randomize_swaps_per_edge: int = 5

    def __post_init__(self):
        if not self.families:
            raise ConfigError("domain needs at least one family")
        if not (self.n_min >= 4 and self.n_max >= self.n_min):
            raise ConfigError("bad size range")
        if not -1 < self.target_min <= self.target_max < 1:
            raise ConfigError("bad target range")


class DomainSampler:
    """Draws randomized episode graphs and feasibility-clipped targets.

    Feasible ranges are memoized per quantized (family, n, mean degree) cell:
    they depend only weakly on the instance, and the margin absorbs the
    residual instance-to-instance variation.
    """

    def __init__(self, domain: DomainConfig, seed: Seed):
        self.domain = domain
        self.seed = seed
        self._feasible: dict[tuple, tuple[float, float]] = {}
        self._counter = 0

    def draw(self, rng: np.random.Generator) -> tuple[Graph, float]:
        d = self.domain
        fam = d.families[int(rng.integers(0, len(d.families)))]
        n = int(rng.integers(d.n_min, d.n_max + 1))
        kbar = float(rng.uniform(d.mean_degree_min, d.mean_degree_max))
        spec = spec_for_mean_degree(fam, n, kbar)
        self._counter += 1
        g = generate(spec, child_seed(self.seed, 1, self._counter))
        g = randomize_configuration(
            g, child_seed(self.seed, 2, self._counter), d.randomize_swaps_per_edge * g.num_edges
        )
        lo, hi = self._feasible_for(fam, n, kbar, g)
        target = self._draw_target(rng)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        lo_m = mid - (1.0 - d.feasible_margin) * half
        hi_m = mid + (1.0 - d.feasible_margin) * half
        return g, float(min(max(target, lo_m), hi_m))

    def _draw_target(self, rng: np.random.Generator) -> float:
        d = self.domain
        for _ in range(256):
            t = float(rng.uniform(d.target_min, d.target_max))
            if abs(t) >= d.target_abs_min:
                return t
        return d.target_abs_min  # degenerate configuration; keep moving

    def _feasible_for(self, fam: str, n: int, kbar: float, g: Graph) -> tuple[float, float]:
        key = (fam, round(n / 50), round(kbar * 2))
        if key not in self._feasible:
            self._feasible[key] = feasible_range(g, child_seed(self.seed, 3, self._counter))
        return self._feasible[key]


# -- rollout storage ---------------------------------------------------------


@dataclass
class Sample:
    eu: np.ndarray
    ev: np.ndarray
    deg: np.ndarray
    sign: float
    gap: float
    action: tuple[int, int, int]
    log_prob: float
    value: float
    mask1: np.ndarray
    mask2: np.ndarray
    mask_mode: np.ndarray
    reward: float = 0.0
    done: bool = False
    bootstrap: float = 0.0  # value of successor state when truncated
    env: int = 0


class RolloutBuffer:
    def __init__(self):
        self.samples: list[Sample] = []
        self.advantages: np.ndarray | None = None
        self.returns: np.ndarray | None = None
        self.episode_rewards: list[float] = []
        self.episode_lengths: list[int] = []
        self.successes: int = 0
        self.episodes: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def finalize(self, tail_bootstrap: dict[int, float], gamma: float, lam: float) -> None:
        """Compute GAE per environment lane, splitting at episode ends."""
        adv = np.zeros(len(self.samples))
        ret = np.zeros(len(self.samples))
        lanes: dict[int, list[int]] = {}
        for idx, s in enumerate(self.samples):
            lanes.setdefault(s.env, []).append(idx)
        for env, idxs in lanes.items():
            start = 0
            while start < len(idxs):
                end = start
                while end < len(idxs) - 1 and not self.samples[idxs[end]].done:
                    end += 1
                seg = idxs[start : end + 1]
                last = self.samples[seg[-1]]
                if last.done:
                    boot = last.bootstrap  # 0 on terminal, V(next) on truncation
                else:
                    boot = tail_bootstrap[env]
                a, r = gae(
                    [self.samples[i].reward for i in seg],
                    [self.samples[i].value for i in seg],
                    boot,
                    gamma,
                    lam,
                )
                adv[seg] = a
                ret[seg] = r
                start = end + 1
        self.advantages = adv
        self.returns = ret


# -- PPO update ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    reward: RewardConfig = field(default_factory=RewardConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    arch: ArchMeta = field(default_factory=ArchMeta)
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    rollout_steps: int = 4096
    epochs: int = 4
    minibatch_size: int = 256
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    num_envs: int = 32
    total_steps: int = 2_000_000
    step_cap_per_edge: int = 10
    probes: int = 32
    eval_every: int = 10  # rollouts between probe evaluations
    eval_episodes: int = 24
    early_stop_success: float = 0.95
    divergence_fraction: float = 0.5  # abort if still zero successes here
    seed: Seed = 0

    def __post_init__(self):
        if self.rollout_steps % self.num_envs != 0:
            raise ConfigError("rollout_steps must be divisible by num_envs")
        if self.minibatch_size > self.rollout_steps:
            raise ConfigError("minibatch_size cannot exceed rollout_steps")

    def mask_config(self) -> MaskConfig:
        # Probe-based first-stage masks keep the per-step cost linear in E.
        return MaskConfig(probes=self.probes, exact_threshold=0)


def micro_benchmark_config(seed: Seed = 0, total_steps: int = 2_000_000) -> TrainConfig:
    """Desk-scale benchmark: ER graphs, N = 100, <k> = 6, targets +-[0.1, 0.3]."""
    return TrainConfig(
        domain=DomainConfig(
            families=("er",),
            n_min=100,
            n_max=100,
            mean_degree_min=6.0,
            mean_degree_max=6.0,
            target_min=-0.3,
            target_max=0.3,
            target_abs_min=0.1,
            epsilon=0.005,
        ),
        total_steps=total_steps,
        seed=seed,
    )


def _collate(
    net: PolicyNet, samples: list[Sample]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Recompute (log_prob, entropy, value) for stored samples, differentiably."""
    batch = GraphBatch([(s.eu, s.ev, s.deg) for s in samples], dtype=net.dtype)
    b = len(samples)
    emax = max(batch.edge_counts)
    cond = torch.tensor([s.sign for s in samples], dtype=net.dtype)
    gaps = torch.tensor([s.gap for s in samples], dtype=net.dtype)

    def pad_mask(rows: list[np.ndarray]) -> torch.Tensor:
        out = torch.zeros((b, emax), dtype=torch.bool)
        for k, m in enumerate(rows):
            out[k, : len(m)] = torch.from_numpy(m)
        return out

    m1 = pad_mask([s.mask1 for s in samples])
    m2 = pad_mask([s.mask2 for s in samples])
    mb = torch.from_numpy(np.stack([s.mask_mode for s in samples]))

    a1 = torch.tensor([s.action[0] for s in samples])
    a2 = torch.tensor([s.action[1] for s in samples])
    ab = torch.tensor([s.action[2] for s in samples])
    e1_flat = torch.from_numpy(batch.edge_offsets[:-1]) + a1
    e2_flat = torch.from_numpy(batch.edge_offsets[:-1]) + a2

    h, h_val = net.encode_dual(batch, cond, gaps)
    s1_pad, z = net.edge1_scores(h, batch)
    s2_pad = net.edge2_scores(z, batch, e1_flat)
    sb = net.mode_scores(h, batch, e1_flat, e2_flat)

    def stage(scores: torch.Tensor, mask: torch.Tensor, pick: torch.Tensor):
        masked = scores.masked_fill(~mask, -torch.inf)
        logp = torch.log_softmax(masked, dim=1)
        chosen = logp.gather(1, pick.unsqueeze(1)).squeeze(1)
        p = torch.exp(logp)
        ent = -(p * torch.where(mask, logp, torch.zeros_like(logp))).sum(dim=1)
        return chosen, ent

    lp1, ent1 = stage(s1_pad, m1, a1)
    lp2, ent2 = stage(s2_pad, m2, a2)
    lpb, entb = stage(sb, mb, ab)
    values = net.value_from(h_val, batch, gaps)
    return lp1 + lp2 + lpb, ent1 + ent2 + entb, values


def ppo_update(
    net: PolicyNet,
    optimizer: torch.optim.Optimizer,
    buf: RolloutBuffer,
    cfg: TrainConfig,
    update_index: int = 0,
) -> dict:
    """Clipped-surrogate update over the rollout; returns diagnostics.

    Raises ``NotConvergedError`` on a non-finite loss.
    """
    n = len(buf.samples)
    order_rng = stream(cfg.seed, 0x9909, update_index)
    adv_all = buf.advantages
    ret_all = buf.returns
    assert adv_all is not None and ret_all is not None, "finalize() the buffer first"
    logp_old_all = torch.tensor([s.log_prob for s in buf.samples], dtype=net.dtype)

    kl_sum = 0.0
    clip_sum = 0.0
    ploss_sum = 0.0
    vloss_sum = 0.0
    batches = 0
    for _ in range(cfg.epochs):
        order = order_rng.permutation(n)
        for lo in range(0, n - cfg.minibatch_size + 1, cfg.minibatch_size):
            idx = order[lo : lo + cfg.minibatch_size]
            samples = [buf.samples[i] for i in idx]
            adv = torch.tensor(adv_all[idx], dtype=net.dtype)
            ret = torch.tensor(ret_all[idx], dtype=net.dtype)
            logp_old = logp_old_all[idx]
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)

            logp, entropy, value = _collate(net, samples)
            ratio = torch.exp(logp - logp_old)
            clipped = torch.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
            policy_loss = -torch.min(ratio * adv, clipped * adv).mean()
            value_loss = torch.mean((value - ret) ** 2)
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy.mean()
            if not torch.isfinite(loss):
                raise NotConvergedError(f"non-finite PPO loss at update {update_index}")

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                kl_sum += float((logp_old - logp).mean())
                clip_sum += float((torch.abs(ratio - 1.0) > cfg.clip_ratio).float().mean())
                ploss_sum += float(policy_loss)
                vloss_sum += float(value_loss)
            batches += 1
    return {
        "kl": kl_sum / max(batches, 1),
        "clip_frac": clip_sum / max(batches, 1),
        "policy_loss": ploss_sum / max(batches, 1),
        "value_loss": vloss_sum / max(batches, 1),
    }


# -- environments -------------------------------------------------------------


class _Lane:
    """One environment lane: a live episode plus its reward bookkeeping."""

    def __init__(self, sampler: DomainSampler, domain: DomainConfig, reward_cfg: RewardConfig,
                 cap_per_edge: int, rng: np.random.Generator):
        self.sampler = sampler
        self.domain = domain
        self.reward_cfg = reward_cfg
        self.cap_per_edge = cap_per_edge
        self.rng = rng
        self.ep_reward = 0.0
        self.state: EpisodeState = None  # type: ignore[assignment]
        self.cap = 0
        self.reset()

    def reset(self) -> None:
        # The rare draw already inside the tolerance window is resampled:
        # such an episode would terminate before its first action.
        for _ in range(64):
            g, target = self.sampler.draw(self.rng)
            cfg = EpisodeConfig(
                rho_target=target,
                epsilon=self.domain.epsilon,
                zeta=self.reward_cfg.zeta,
                step_penalty=self.reward_cfg.step_penalty,
                success_bonus=self.reward_cfg.success_bonus,
                gamma=self.reward_cfg.gamma,
            )
            self.state = EpisodeState(g, cfg, self.rng)
            self.cap = self.cap_per_edge * g.num_edges
            self.ep_reward = 0.0
            if not self.state.within_window:
                return


def collect_rollout(
    net: PolicyNet, lanes: list[_Lane], steps_per_env: int, cfg: TrainConfig
) -> RolloutBuffer:
    buf = RolloutBuffer()
    mask_cfg = cfg.mask_config()
    for _ in range(steps_per_env):
        states = [lane.state for lane in lanes]
        decisions = policy_decide(net, states, sample=True, need_value=True, mask_cfg=mask_cfg)
        for env, (lane, dec) in enumerate(zip(lanes, decisions)):
            st = lane.state
            rho_prev = st.rho
            arr = st.arrays()
            sample = Sample(
                eu=arr.eu.copy(),
                ev=arr.ev.copy(),
                deg=arr.deg,
                sign=st.sign,
                gap=st.gap,
                action=(dec.action.e1, dec.action.e2, dec.action.mode),
                log_prob=dec.log_prob,
                value=dec.value if dec.value is not None else 0.0,
                mask1=dec.mask1,
                mask2=dec.mask2,
                mask_mode=dec.mask_mode,
                env=env,
            )
            st.apply(dec.action)
            r = reward(rho_prev, st.rho, st.cfg.rho_target, lane.reward_cfg, st.eps)
            sample.reward = r
            lane.ep_reward += r
            if st.within_window:
                sample.done = True
                sample.bootstrap = 0.0
                buf.successes += 1
                buf.episodes += 1
                buf.episode_rewards.append(lane.ep_reward)
                buf.episode_lengths.append(st.steps)
                lane.reset()
            elif st.steps >= lane.cap:
                sample.done = True
                gaps = torch.tensor([st.gap], dtype=net.dtype)
                batch = GraphBatch([(st.arrays().eu, st.arrays().ev, st.arrays().deg)], dtype=net.dtype)
                with torch.no_grad():
                    sample.bootstrap = float(net.value(batch, gaps)[0])
                buf.episodes += 1
                buf.episode_rewards.append(lane.ep_reward)
                buf.episode_lengths.append(st.steps)
                lane.reset()
            buf.samples.append(sample)

    # Bootstrap values of the states each lane is still sitting in.
    states = [lane.state for lane in lanes]
    batch = GraphBatch(
        [(s.arrays().eu, s.arrays().ev, s.arrays().deg) for s in states], dtype=net.dtype
    )
    gaps = torch.tensor([s.gap for s in states], dtype=net.dtype)
    with torch.no_grad():
        tail = net.value(batch, gaps).cpu().numpy()
    buf.finalize({env: float(tail[env]) for env in range(len(lanes))},
                 cfg.reward.gamma, cfg.gae_lambda)
    return buf


def run_episodes_batched(
    net: PolicyNet,
    episodes: list[tuple[Graph, EpisodeConfig]],
    seed: Seed,
    *,
    sample: bool = False,
    step_cap_per_edge: int = 10,
    mask_cfg: MaskConfig = MaskConfig(exact_threshold=0),
) -> list[tuple[bool, int, float]]:
    """Run independent policy episodes in lockstep; (success, steps, rho) each."""
    live: dict[int, EpisodeState] = {}
    caps: dict[int, int] = {}
    out: list[tuple[bool, int, float]] = [None] * len(episodes)  # type: ignore[list-item]
    for k, (g, cfg) in enumerate(episodes):
        st = EpisodeState(g.copy(), cfg, stream(seed, 0xEB, k))
        live[k] = st
        caps[k] = cfg.step_cap if cfg.step_cap is not None else step_cap_per_edge * g.num_edges
    while live:
        for k in list(live):
            st = live[k]
            if st.within_window or st.steps >= caps[k]:
                out[k] = (st.within_window, st.steps, st.rho)
                del live[k]
        if not live:
            break
        keys = sorted(live)
        states = [live[k] for k in keys]
        decisions = policy_decide(net, states, sample=sample, mask_cfg=mask_cfg)
        for k, dec in zip(keys, decisions):
            live[k].apply(dec.action)
    return out


# -- top-level training loop ---------------------------------------------------


@dataclass
class TrainResult:
    checkpoint_path: str
    curve: list[dict]
    env_steps: int
    success_rate: float
    mean_episode_steps: float


def train(cfg: TrainConfig, out_dir: str) -> TrainResult:
    """Alternate rollout collection and PPO updates until the step budget or
    an early-stop success rate on the held-out probe set.

    Writes ``checkpoint.npz`` and ``training_curve.csv`` into ``out_dir``.
    Deterministic for a fixed config (including ``num_envs``).
    """
    os.makedirs(out_dir, exist_ok=True)
    torch.manual_seed(child_seed(cfg.seed, 0x701))
    torch.set_num_threads(1)
    net = PolicyNet(cfg.arch, dtype=torch.float32)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

    sampler = DomainSampler(cfg.domain, child_seed(cfg.seed, 0xD0))
    lanes = [
        _Lane(sampler, cfg.domain, cfg.reward, cfg.step_cap_per_edge, stream(cfg.seed, 0xE0, i))
        for i in range(cfg.num_envs)
    ]
    probe_set = _probe_episodes(cfg)

    steps_per_env = cfg.rollout_steps // cfg.num_envs
    curve: list[dict] = []
    ckpt_path = os.path.join(out_dir, "checkpoint.npz")
    env_steps = 0
    update_idx = 0
    success_rate = 0.0
    mean_T = math.nan
    any_success = False

    def evaluate() -> tuple[float, float]:
        results = run_episodes_batched(
            net,
            probe_set,
            child_seed(cfg.seed, 0xEA1),
            sample=False,
            step_cap_per_edge=cfg.step_cap_per_edge,
            mask_cfg=cfg.mask_config(),
        )
        succ = [ok for ok, _, _ in results]
        steps = [t for ok, t, _ in results if ok]
        return float(np.mean(succ)), float(np.mean(steps)) if steps else math.nan

    while env_steps < cfg.total_steps:
        buf = collect_rollout(net, lanes, steps_per_env, cfg)
        env_steps += len(buf)
        diag = ppo_update(net, optimizer, buf, cfg, update_idx)
        update_idx += 1
        any_success = any_success or buf.successes > 0
        if update_idx % cfg.eval_every == 0 or env_steps >= cfg.total_steps:
            # Until rollouts produce a first success, the argmax policy cannot
            # pass either; skip the (cap-bound) probe episodes.
            success_rate, mean_T = evaluate() if any_success else (0.0, math.nan)
            curve.append(
                {
                    "env_steps": env_steps,
                    "mean_reward": float(np.mean(buf.episode_rewards)) if buf.episode_rewards else math.nan,
                    "success_rate": success_rate,
                    "mean_T": mean_T,
                    "kl": diag["kl"],
                    "clip_frac": diag["clip_frac"],
                }
            )
            save_checkpoint(ckpt_path, net, train_config=_config_dict(cfg), seed=cfg.seed)
            _write_curve(os.path.join(out_dir, "training_curve.csv"), curve)
            if success_rate >= cfg.early_stop_success:
                break
        if not any_success and env_steps >= cfg.divergence_fraction * cfg.total_steps:
            save_checkpoint(ckpt_path, net, train_config=_config_dict(cfg), seed=cfg.seed)
            raise NotConvergedError(
                f"no successful episode after {env_steps} steps", best=ckpt_path
            )

    save_checkpoint(ckpt_path, net, train_config=_config_dict(cfg), seed=cfg.seed)
    _write_curve(os.path.join(out_dir, "training_curve.csv"), curve)
    return TrainResult(
        checkpoint_path=ckpt_path,
        curve=curve,
        env_steps=env_steps,
        success_rate=success_rate,
        mean_episode_steps=mean_T,
    )


def _probe_episodes(cfg: TrainConfig) -> list[tuple[Graph, EpisodeConfig]]:
    """Held-out evaluation episodes drawn from the same domain."""
    sampler = DomainSampler(cfg.domain, child_seed(cfg.seed, 0xEE))
    rng = stream(cfg.seed, 0xEF)
    episodes = []
    for _ in range(cfg.eval_episodes):
        g, target = sampler.draw(rng)
        episodes.append((g, EpisodeConfig(rho_target=target, epsilon=cfg.domain.epsilon)))
    return episodes


def _config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["domain"]["families"] = list(cfg.domain.families)
    return d


def _write_curve(path: str, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
