"""PPO training over a bank of design-expanded parallel environments.

Rollouts are collected from a vectorized environment (one design per
environment block, several environments per design), advantages come from
GAE(lambda), and updates apply the clipped surrogate with minibatched
Adam steps.  Episode returns are tagged by design index; per-design mean
returns over a terminal window of iterations feed the fitness computation
of the co-design loop.

All randomness is drawn from named streams keyed by (seed, phase), so a
training call is exactly reproducible from those keys.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .chinup_env import VecChinupEnv, EpisodeRecord
from .design_space import DesignVector, ExpansionPlan
from .errors import ConfigError, NumericError
from .policy import (
    ActionDistribution,
    AdamState,
    PolicyParams,
    adam_step,
    loss_and_grads,
    policy_forward_batch,
    sample_action,
)
from .seeding import stream


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.005
    learning_rate: float = 3e-4
    horizon: int = 64
    # Fixed scale on rewards entering GAE and value targets; episode-return
    # bookkeeping (and hence fitness) always uses raw rewards.
    reward_scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ConfigError("clip_epsilon must be positive")
        if min(self.epochs, self.minibatches, self.horizon) < 1:
            raise ConfigError("epochs, minibatches, horizon must be >= 1")
        if self.learning_rate < 0.0 or self.reward_scale <= 0.0:
            raise ConfigError("learning_rate must be >= 0 and reward_scale > 0")


@dataclass
class RolloutBatch:
    proprio: np.ndarray  # (n_env, horizon, proprio_dim)
    design: np.ndarray  # (n_env, design_dim), static per env
    design_idx: np.ndarray  # (n_env,)
    actions: np.ndarray  # (n_env, horizon, action_dim)
    log_probs: np.ndarray  # (n_env, horizon)
    rewards: np.ndarray  # (n_env, horizon)
    values: np.ndarray  # (n_env, horizon)
    dones: np.ndarray  # (n_env, horizon)
    bootstrap_values: np.ndarray  # (n_env,)
    episodes: list[EpisodeRecord] = field(default_factory=list)
    advantages: np.ndarray | None = None  # standardized
    advantages_raw: np.ndarray | None = None
    returns: np.ndarray | None = None


def collect_rollouts(vec_env, params: PolicyParams, horizon: int, rng) -> RolloutBatch:
    """Step every environment `horizon` times under the sampled policy.

    `vec_env` is a vectorized bank (VecChinupEnv or compatible): it exposes
    n_envs, design_mat, env_to_design, proprio() and step(actions), holds
    per-env state across calls, and auto-resets finished episodes while
    reporting their returns tagged by design index.
    """
    n = vec_env.n_envs
    prop_dim = vec_env.proprio().shape[1]
    act_dim = params.action_dim
    out = RolloutBatch(
        proprio=np.empty((n, horizon, prop_dim)),
        design=np.asarray(vec_env.design_mat, dtype=np.float64),
        design_idx=np.asarray(vec_env.env_to_design, dtype=np.int64),
        actions=np.empty((n, horizon, act_dim)),
        log_probs=np.empty((n, horizon)),
        rewards=np.empty((n, horizon)),
        values=np.empty((n, horizon)),
        dones=np.empty((n, horizon)),
        bootstrap_values=np.empty(n),
    )
    for t in range(horizon):
        prop = vec_env.proprio()
        means, values, log_std = policy_forward_batch(params, out.design, prop)
        actions, log_probs = sample_action(ActionDistribution(means, log_std), rng)
        rewards, dones, completed = vec_env.step(actions)
        out.proprio[:, t] = prop
        out.actions[:, t] = actions
        out.log_probs[:, t] = log_probs
        out.values[:, t] = values
        out.rewards[:, t] = rewards
        out.dones[:, t] = dones.astype(np.float64)
        out.episodes.extend(completed)
    _, boot, _ = policy_forward_batch(params, out.design, vec_env.proprio())
    out.bootstrap_values = boot
    return out


def compute_gae(
    batch: RolloutBatch, gamma: float, gae_lambda: float, bootstrap_values=None
) -> RolloutBatch:
    """Backward GAE recursion plus per-batch advantage standardization.

    delta_t = r_t + gamma*v_{t+1}*(1-done_t) - v_t
    A_t     = delta_t + gamma*lambda*(1-done_t)*A_{t+1}
    returns = A_raw + v; advantages standardized to mean 0, std 1 (eps 1e-8).
    """
    if bootstrap_values is None:
        bootstrap_values = batch.bootstrap_values
    n, horizon = batch.rewards.shape
    adv = np.zeros((n, horizon))
    next_adv = np.zeros(n)
    next_value = np.asarray(bootstrap_values, dtype=np.float64)
    for t in range(horizon - 1, -1, -1):
        not_done = 1.0 - batch.dones[:, t]
        delta = batch.rewards[:, t] + gamma * next_value * not_done - batch.values[:, t]
        next_adv = delta + gamma * gae_lambda * not_done * next_adv
        adv[:, t] = next_adv
        next_value = batch.values[:, t]
    batch.advantages_raw = adv
    batch.returns = adv + batch.values
    batch.advantages = (adv - adv.mean()) / (adv.std() + 1e-8)
    return batch


def ppo_update(
    params: PolicyParams, opt: AdamState, batch: RolloutBatch, cfg: PpoConfig, rng
) -> tuple[PolicyParams, AdamState, dict]:
    """One PPO update: epochs of seeded-shuffle minibatch gradient steps."""
    n, horizon = batch.rewards.shape
    total = n * horizon
    flat = {
        "proprio": batch.proprio.reshape(total, -1),
        "design": batch.design[np.repeat(np.arange(n), horizon)],
        "action": batch.actions.reshape(total, -1),
        "old_log_prob": batch.log_probs.reshape(total),
        "advantage": batch.advantages.reshape(total),
        "ret": batch.returns.reshape(total),
    }
    stats_acc: dict[str, list] = {}
    for epoch in range(cfg.epochs):
        perm = rng.permutation(total)
        for mb_idx, chunk in enumerate(np.array_split(perm, cfg.minibatches)):
            minibatch = {k: v[chunk] for k, v in flat.items()}
            try:
                losses, grads = loss_and_grads(params, minibatch, cfg)
            except NumericError as exc:
                raise NumericError(
                    f"PPO update aborted at epoch {epoch}, minibatch {mb_idx}: {exc}"
                ) from exc
            params, opt = adam_step(params, grads, opt)
            for key, val in losses.items():
                stats_acc.setdefault(key, []).append(val)
    stats = {key: float(np.mean(vals)) for key, vals in stats_acc.items()}
    return params, opt, stats


def _mean_or(values: list[float], fallback: float) -> float:
    return float(np.mean(values)) if values else fallback


def train_on_env(
    params: PolicyParams,
    opt: AdamState,
    vec_env,
    n_iterations: int,
    cfg: PpoConfig,
    seed: int,
    phase: str | int = 0,
) -> tuple[PolicyParams, list[dict], np.ndarray]:
    """Core training loop over an existing environment bank.

    Returns (final params, per-iteration history rows, per-design mean
    episode returns over the terminal window of up to 10 iterations).
    History rows carry the latest completed-episode statistics forward
    through iterations in which no episode finished.
    """
    rollout_rng = stream("rollout", seed, phase)
    shuffle_rng = stream("shuffle", seed, phase)
    history: list[dict] = []
    episodes_by_iter: list[list[EpisodeRecord]] = []
    last_mean, last_std = float("nan"), float("nan")
    for it in range(n_iterations):
        batch = collect_rollouts(vec_env, params, cfg.horizon, rollout_rng)
        episodes_by_iter.append(list(batch.episodes))
        if cfg.reward_scale != 1.0:
            batch.rewards = batch.rewards * cfg.reward_scale
        compute_gae(batch, cfg.gamma, cfg.gae_lambda)
        params, opt, stats = ppo_update(params, opt, batch, cfg, shuffle_rng)
        returns = [e.episode_return for e in batch.episodes]
        if returns:
            last_mean = float(np.mean(returns))
            last_std = float(np.std(returns))
        history.append(
            {
                "iteration": it + 1,
                "mean_return": last_mean,
                "std_return": last_std,
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "clip_fraction": stats["clip_fraction"],
                "approx_kl": stats["approx_kl"],
            }
        )
    n_designs = int(np.max(vec_env.env_to_design)) + 1 if n_iterations > 0 else 0
    per_design = _per_design_returns(episodes_by_iter, n_designs)
    return params, history, per_design


def _per_design_returns(
    episodes_by_iter: list[list[EpisodeRecord]], n_designs: int
) -> np.ndarray:
    """Mean episode return per design over the last up-to-10 iterations.

    Falls back to the full history for designs with no episode in the
    window; designs with no completed episodes at all report NaN.
    """
    per_design = np.full(n_designs, np.nan)
    window = [e for it_eps in episodes_by_iter[-10:] for e in it_eps]
    full = [e for it_eps in episodes_by_iter for e in it_eps]
    for d in range(n_designs):
        returns = [e.episode_return for e in window if e.design_idx == d]
        if not returns:
            returns = [e.episode_return for e in full if e.design_idx == d]
        if returns:
            per_design[d] = np.mean(returns)
    return per_design


def train(
    params: PolicyParams,
    opt: AdamState,
    plan: ExpansionPlan,
    designs: list[DesignVector],
    n_iterations: int,
    cfg: PpoConfig,
    env_cfg,
    reward_cfg,
    seed: int,
    phase: str | int = 0,
) -> tuple[PolicyParams, list[dict], np.ndarray]:
    """Train on the chin-up environments expanded from a design population."""
    if len(designs) != plan.n_pop:
        raise ConfigError(
            f"expansion plan expects {plan.n_pop} designs, got {len(designs)}"
        )
    pop = np.stack([d.factors for d in designs])
    vec_env = VecChinupEnv(
        config=env_cfg,
        reward_cfg=reward_cfg,
        design_mat=pop[plan.env_to_design],
        env_to_design=plan.env_to_design,
        seed=seed,
        phase=phase,
    )
    return train_on_env(params, opt, vec_env, n_iterations, cfg, seed, phase)


LEARNING_CURVE_COLUMNS = (
    "iteration", "mean_return", "std_return",
    "policy_loss", "value_loss", "entropy", "clip_fraction",
)


def write_learning_curve_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEARNING_CURVE_COLUMNS)
        for row in history:
            writer.writerow(
                [row["iteration"]] + [repr(float(row[c])) for c in LEARNING_CURVE_COLUMNS[1:]]
            )


def read_learning_curve_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != LEARNING_CURVE_COLUMNS:
        raise ValueError(f"{path}: not a learning curve CSV")
    out = []
    for row in rows[1:]:
        rec = {"iteration": int(row[0])}
        rec.update({c: float(v) for c, v in zip(LEARNING_CURVE_COLUMNS[1:], row[1:])})
        out.append(rec)
    return out
