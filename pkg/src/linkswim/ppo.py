"""Proximal policy optimization for the swimmer environment.

Rollout collection gathers M complete fixed-length episodes per update,
storing raw Gaussian samples with their exact log-densities. Returns are
plain discounted reward-to-go within episodes, advantages are return
minus the pre-update critic value (optionally batch-normalized), and the
update runs K epochs of shuffled minibatches through the clipped
surrogate, value-error, and entropy losses with hand-computed gradients.

Every random draw descends from a single master seed: episode streams
are spawned by global episode index, the minibatch shuffler by a
reserved key, so runs are bitwise reproducible regardless of how the
episode budget is chunked.
"""

from __future__ import annotations

import copy
import csv
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dynamics import ALPHA_LIMIT, RATE_CAP, SingularSystemError
from .environment import EpisodeConfig, RewardConfig, reset
from .nets import LOG_2PI, Adam, Critic, GaussianPolicy

SHUFFLE_KEY = 4294967295  # spawn key reserved for the minibatch shuffler


class UpdateAborted(RuntimeError):
    """Non-finite quantity during an update; parameters were restored."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    reward: RewardConfig = field(default_factory=RewardConfig.vfs)
    n_episodes: int = 100_000
    n_steps: int = 200
    episodes_per_update: int = 40
    discount: float = 0.99
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    epochs: int = 10
    minibatch: int = 256
    lr: float = 3e-4
    normalize_advantages: bool = True
    learn_std: bool = True
    hidden: tuple = (64, 64)
    seed: int = 0
    checkpoint_every: int = 1000
    theta_T: float = 0.0
    dt: float = 0.1
    sub_steps: int = 4
    rate_cap: float = RATE_CAP
    randomize_init: bool = True

    def __post_init__(self):
        if self.n_episodes < 1 or self.n_steps < 1 or self.episodes_per_update < 1:
            raise ValueError("episode counts must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must lie in [0, 1], got {self.discount}")
        if self.clip_eps <= 0.0:
            raise ValueError(f"clip range must be positive, got {self.clip_eps}")
        if self.epochs < 0 or self.minibatch < 1:
            raise ValueError("epochs must be >= 0 and minibatch >= 1")
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")

    @property
    def steps_per_update(self) -> int:
        return self.episodes_per_update * self.n_steps

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(n_steps=self.n_steps, theta_T=self.theta_T,
                             dt=self.dt, sub_steps=self.sub_steps,
                             randomize_init=self.randomize_init)


@dataclass
class TrajectoryBuffer:
    """Flat per-step arrays covering a batch of complete episodes.

    actions hold the raw (unclamped) Gaussian samples whose densities
    the ratios refer to; boundaries[i]:boundaries[i+1] slices episode i.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    boundaries: np.ndarray
    works: np.ndarray

    def __post_init__(self):
        n = len(self.rewards)
        if not (len(self.observations) == len(self.actions)
                == len(self.log_probs) == len(self.works) == n):
            raise ValueError("buffer arrays must share one length")
        b = self.boundaries
        if b[0] != 0 or b[-1] != n or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must partition the buffer")

    def __len__(self):
        return len(self.rewards)

    @property
    def n_episodes(self) -> int:
        return len(self.boundaries) - 1

    def episode_rewards(self):
        """Undiscounted within-episode reward sums (the learning-curve unit)."""
        sums = np.add.reduceat(self.rewards, self.boundaries[:-1])
        return sums


def episode_rng(master_seed: int, episode_index: int) -> np.random.Generator:
    """Stream for one episode, independent of batch chunking."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(episode_index,))
    return np.random.Generator(np.random.PCG64(ss))


def _rollout_kernel(policy, state, z, cfg: TrainConfig, out):
    obs_out, act_out, rew_out, logp_out, work_out, cent_out = out
    net = policy.net
    s = state.as_array()
    status, cond = _kernels.rollout_train(
        s, cfg.theta_T, net.W[0], net.b[0], net.W[1], net.b[1],
        net.W[2], net.b[2], policy.log_std, z,
        cfg.dt, cfg.sub_steps, cfg.rate_cap, ALPHA_LIMIT,
        0.5, cfg.reward.b, cfg.reward.c if cfg.reward.mode == "EAS" else 0.0,
        obs_out, act_out, rew_out, logp_out, work_out, cent_out)
    if status != _kernels.OK:
        raise SingularSystemError(cond)


def _rollout_python(policy, state, z, cfg: TrainConfig, out):
    """Reference path for network depths the fused kernel does not cover."""
    from .dynamics import JointRates
    from .environment import env_step, observe

    obs_out, act_out, rew_out, logp_out, work_out, cent_out = out
    ecfg = cfg.episode_config()
    std = policy.std()
    cap = cfg.rate_cap
    cent_out[0] = _kernels_centroid(state)
    for k in range(z.shape[0]):
        o = observe(state, cfg.theta_T).as_array()
        obs_out[k] = o
        mean = policy.mean(o)[0]
        raw = mean + std * z[k]
        act_out[k] = raw
        zz = (raw - mean) / std
        logp_out[k] = (-0.5 * float(zz @ zz)
                       - float(np.sum(policy.log_std)) - LOG_2PI)
        action = JointRates(float(np.clip(raw[0], -cap, cap)),
                            float(np.clip(raw[1], -cap, cap)))
        outcome = env_step(state, action, ecfg, cfg.reward)
        state = outcome.state
        rew_out[k] = outcome.reward
        work_out[k] = outcome.work
        cent_out[k + 1] = _kernels_centroid(state)


def _kernels_centroid(state):
    from .dynamics import state_centroid
    return state_centroid(state)


def collect_rollouts(policy: GaussianPolicy, cfg: TrainConfig,
                     master_seed: int = None, episode_start: int = 0,
                     n_episodes: int = None) -> TrajectoryBuffer:
    """Gather complete episodes under the current stochastic policy.

    Episode i draws its reset configuration and all action noise from
    the stream spawned at global index episode_start + i, so the same
    episodes are produced whether collected in one batch or many.
    """
    if master_seed is None:
        master_seed = cfg.seed
    if n_episodes is None:
        n_episodes = cfg.episodes_per_update
    ns = cfg.n_steps
    n_total = n_episodes * ns
    obs = np.empty((n_total, 4))
    acts = np.empty((n_total, 2))
    rews = np.empty(n_total)
    logps = np.empty(n_total)
    works = np.empty(n_total)
    cents = np.empty((ns + 1, 2))
    fused = len(policy.net.widths) == 4
    ecfg = cfg.episode_config()
    for i in range(n_episodes):
        rng = episode_rng(master_seed, episode_start + i)
        state, _ = reset(ecfg, rng)
        z = rng.standard_normal((ns, 2))
        lo = i * ns
        out = (obs[lo:lo + ns], acts[lo:lo + ns], rews[lo:lo + ns],
               logps[lo:lo + ns], works[lo:lo + ns], cents)
        if fused:
            _rollout_kernel(policy, state, z, cfg, out)
        else:
            _rollout_python(policy, state, z, cfg, out)
    boundaries = np.arange(0, n_total + 1, ns)
    return TrajectoryBuffer(obs, acts, rews, logps, boundaries, works)


def reward_to_go(rewards, boundaries, discount: float):
    """Discounted suffix sums, restarted at every episode boundary."""
    if not 0.0 <= discount <= 1.0:
        raise ValueError(f"discount must lie in [0, 1], got {discount}")
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        acc = 0.0
        for k in range(b - 1, a - 1, -1):
            acc = rewards[k] + discount * acc
            out[k] = acc
    return out


def advantages(returns, values, normalize: bool = True):
    """Return-minus-value advantages, optionally standardized per batch."""
    returns = np.asarray(returns, dtype=float)
    values = np.asarray(values, dtype=float)
    if returns.shape != values.shape:
        raise ValueError(
            f"returns shape {returns.shape} != values shape {values.shape}")
    adv = returns - values
    if normalize:
        adv = adv - adv.mean()
        sd = adv.std()
        if sd > 1e-12:
            adv = adv / sd
    return adv


@dataclass(frozen=True)
class LossReport:
    clip_surrogate: float
    value_error: float
    entropy_bonus: float
    total: float
    mean_ratio: float
    clip_fraction: float


def _policy_log_probs(policy: GaussianPolicy, obs, actions):
    """Batched log-density of stored raw actions plus backward inputs."""
    out, acts = policy.net.forward(obs)
    std = policy.std()
    z = (actions - out) / std
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(policy.log_std) - LOG_2PI
    return logp, z, acts


def ppo_losses(policy: GaussianPolicy, critic: Critic, buffer: TrajectoryBuffer,
               returns, adv, cfg: TrainConfig) -> LossReport:
    """Evaluate the three loss pieces over the whole buffer.

    The total follows the sign convention of a minimized objective: the
    clipped surrogate and the entropy bonus enter negatively, the value
    error positively.
    """
    logp, _, _ = _policy_log_probs(policy, buffer.observations, buffer.actions)
    ratio = np.exp(logp - buffer.log_probs)
    if not np.all(np.isfinite(ratio)):
        raise UpdateAborted("non-finite probability ratio")
    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    surr = np.minimum(ratio * adv, np.clip(ratio, lo, hi) * adv)
    l_clip = float(surr.mean())
    v = critic.value(buffer.observations)
    l_er = 0.5 * float(np.mean((returns - v) ** 2))
    l_s = cfg.entropy_coef * policy.entropy()
    total = -l_clip + l_er - l_s
    if not math.isfinite(total):
        raise UpdateAborted("non-finite loss")
    clipped = (ratio < lo) | (ratio > hi)
    return LossReport(l_clip, l_er, l_s, total,
                      float(ratio.mean()), float(clipped.mean()))


def _snapshot(policy, critic, a_opt, c_opt):
    params = [p.copy() for p in policy.params() + critic.params()]
    opt = copy.deepcopy(((a_opt.m, a_opt.v, a_opt.t), (c_opt.m, c_opt.v, c_opt.t)))
    return params, opt


def _restore(policy, critic, a_opt, c_opt, snap):
    params, ((am, av, at), (cm, cv, ct)) = snap
    for live, saved in zip(policy.params() + critic.params(), params):
        live[:] = saved
    for tgt, src in zip(a_opt.m, am):
        tgt[:] = src
    for tgt, src in zip(a_opt.v, av):
        tgt[:] = src
    a_opt.t = at
    for tgt, src in zip(c_opt.m, cm):
        tgt[:] = src
    for tgt, src in zip(c_opt.v, cv):
        tgt[:] = src
    c_opt.t = ct


def update(policy: GaussianPolicy, critic: Critic, a_opt: Adam, c_opt: Adam,
           buffer: TrajectoryBuffer, cfg: TrainConfig,
           rng: np.random.Generator):
    """One PPO update: K epochs of shuffled minibatches over the buffer.

    Advantages are frozen against the pre-update critic. If anything
    turns non-finite the pre-update parameters and optimizer state are
    restored and UpdateAborted is raised.
    """
    n = len(buffer)
    returns = reward_to_go(buffer.rewards, buffer.boundaries, cfg.discount)
    v_pre = critic.value(buffer.observations)
    adv = advantages(returns, v_pre, cfg.normalize_advantages)
    snap = _snapshot(policy, critic, a_opt, c_opt)
    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    epoch_reports = []
    try:
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = perm[start:start + cfg.minibatch]
                m = len(idx)
                o_mb = buffer.observations[idx]
                logp, z, acts = _policy_log_probs(policy, o_mb,
                                                  buffer.actions[idx])
                ratio = np.exp(logp - buffer.log_probs[idx])
                if not np.all(np.isfinite(ratio)):
                    raise UpdateAborted("non-finite probability ratio")
                a_mb = adv[idx]
                active = np.where(a_mb >= 0.0, ratio < hi, ratio > lo)
                # minimized total: d(-L_clip)/dlogp = -(1/m) A r [active]
                dlogp = -(a_mb * ratio * active) / m
                std = policy.std()
                dmean = dlogp[:, None] * z / std
                dW, db = policy.net.backward(acts, dmean)
                if cfg.learn_std:
                    g_logstd = dlogp @ (z * z - 1.0) - cfg.entropy_coef
                else:
                    # exploration noise held fixed; only the mean adapts
                    g_logstd = np.zeros(2)
                grads = []
                for gw, gb in zip(dW, db):
                    grads.append(gw)
                    grads.append(gb)
                grads.append(g_logstd)
                a_opt.step(grads)
                policy.clamp_log_std()

                v_out, v_acts = critic.net.forward(o_mb)
                dv = (v_out[:, 0] - returns[idx]) / m
                dWc, dbc = critic.net.backward(v_acts, dv[:, None])
                cgrads = []
                for gw, gb in zip(dWc, dbc):
                    cgrads.append(gw)
                    cgrads.append(gb)
                c_opt.step(cgrads)
            epoch_reports.append(ppo_losses(policy, critic, buffer,
                                            returns, adv, cfg))
        for p in policy.params() + critic.params():
            if not np.all(np.isfinite(p)):
                raise UpdateAborted("non-finite parameter after update")
    except UpdateAborted:
        _restore(policy, critic, a_opt, c_opt, snap)
        raise
    return epoch_reports


@dataclass
class TrainResult:
    policy: GaussianPolicy
    critic: Critic
    curve: np.ndarray
    reports: list
    aborted_updates: int
    episodes_done: int


def train(cfg: TrainConfig, out_dir: str = None, progress=None,
          policy: GaussianPolicy = None, critic: Critic = None,
          a_opt: Adam = None, c_opt: Adam = None, episode_start: int = 0,
          extras: dict = None) -> TrainResult:
    """Run a full training loop and optionally persist its outputs.

    With out_dir set, a learning-curve CSV grows in place after every
    update and checkpoints are written every checkpoint_every episodes,
    so an interrupted run leaves usable artifacts behind. Passing the
    policy/critic/optimizers plus episode_start resumes a checkpointed
    run on its original episode stream; n_episodes stays the total
    target, not an increment.
    """
    from .nets import save_checkpoint

    if not 0 <= episode_start <= cfg.n_episodes:
        raise ValueError("episode_start must lie within the episode budget")
    init_ss = np.random.SeedSequence(cfg.seed, spawn_key=(SHUFFLE_KEY, 0))
    init_rng = np.random.Generator(np.random.PCG64(init_ss))
    if policy is None:
        policy = GaussianPolicy(init_rng, hidden=cfg.hidden,
                                rate_cap=cfg.rate_cap)
    if critic is None:
        critic = Critic(init_rng, hidden=cfg.hidden)
    if a_opt is None:
        a_opt = Adam(policy.params(), lr=cfg.lr)
    if c_opt is None:
        c_opt = Adam(critic.params(), lr=cfg.lr)
    shuffle_ss = np.random.SeedSequence(cfg.seed, spawn_key=(SHUFFLE_KEY, 1))
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))
    if episode_start > 0:
        updates_done, rem = divmod(episode_start, cfg.episodes_per_update)
        if rem:
            raise ValueError("episode_start must sit on an update boundary "
                             f"(multiple of {cfg.episodes_per_update})")
        # replay the shuffle stream so the resumed run continues the
        # exact minibatch order of an uninterrupted one
        for _ in range(updates_done * cfg.epochs):
            shuffle_rng.permutation(cfg.steps_per_update)

    curve = []
    reports = []
    aborted = 0
    curve_path = None
    t0 = time.monotonic()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        curve_path = os.path.join(out_dir, "learning_curve.csv")
        if episode_start == 0 or not os.path.exists(curve_path):
            with open(curve_path, "w", newline="") as fh:
                csv.writer(fh).writerow(["episode", "reward"])

    def checkpoint(path_name):
        lineage = {"master_seed": cfg.seed, "episodes_done": done,
                   "shuffle_key": SHUFFLE_KEY}
        meta = {"mode": cfg.reward.mode, "b": cfg.reward.b, "c": cfg.reward.c,
                "n_steps": cfg.n_steps, "dt": cfg.dt,
                "theta_T": cfg.theta_T,
                "wall_time_s": time.monotonic() - t0}
        if extras:
            meta.update(extras)
        save_checkpoint(os.path.join(out_dir, path_name), policy, critic,
                        a_opt, c_opt, seed_lineage=lineage, extras=meta)

    done = episode_start
    next_ckpt = (done // cfg.checkpoint_every + 1) * cfg.checkpoint_every
    while done < cfg.n_episodes:
        m = min(cfg.episodes_per_update, cfg.n_episodes - done)
        buffer = collect_rollouts(policy, cfg, cfg.seed,
                                  episode_start=done, n_episodes=m)
        ep_rewards = buffer.episode_rewards()
        curve.extend(ep_rewards.tolist())
        try:
            reports.append(update(policy, critic, a_opt, c_opt,
                                  buffer, cfg, shuffle_rng))
        except UpdateAborted:
            aborted += 1
        done += m
        if curve_path:
            with open(curve_path, "a", newline="") as fh:
                w = csv.writer(fh)
                for j, r in enumerate(ep_rewards):
                    w.writerow([done - m + j + 1, repr(float(r))])
        if out_dir and done >= next_ckpt:
            checkpoint(f"checkpoint_{done:06d}.json")
            while next_ckpt <= done:
                next_ckpt += cfg.checkpoint_every
        if progress is not None:
            recent = np.mean(curve[-200:]) if curve else 0.0
            progress(done, cfg.n_episodes, float(recent))
    if out_dir:
        checkpoint("policy_final.json")
    return TrainResult(policy, critic, np.asarray(curve), reports,
                       aborted, done)


def load_learning_curve(path):
    """Read a learning-curve CSV back into (episodes, rewards) arrays."""
    eps = []
    rews = []
    with open(path) as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:2] != ["episode", "reward"]:
            raise ValueError(f"unexpected curve header {header!r}")
        for row in rd:
            eps.append(int(row[0]))
            rews.append(float(row[1]))
    return np.asarray(eps), np.asarray(rews)
