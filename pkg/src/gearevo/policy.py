"""Actor-critic network with a privileged design encoder, by hand in numpy.

Architecture: the design vector passes through one affine layer + tanh into
a 4-dim latent, which is concatenated with the proprioceptive observation
and fed to a tanh MLP trunk (default 64-64).  Heads: an affine actor head
producing the Gaussian action mean (state-independent log-std vector) and
an affine scalar critic head.  The encoder is trained jointly end to end.

Gradients are computed by manual reverse-mode differentiation; the network
is small and fixed, and every layer is verifiable against finite
differences.  Snapshots are treated as immutable: updates return new
parameter sets.

Checkpoint format: one JSON header line (format version, dims, snapshot
id, seed, parameter count) followed by the flat little-endian float64
parameter block in the order ENC_W, ENC_B, W1, B1, W2, B2, ACTOR_W,
ACTOR_B, LOG_STD, CRITIC_W, CRITIC_B (C order within each array).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericError
from .seeding import stream

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5
CHECKPOINT_VERSION = 1

PARAM_ORDER = (
    "enc_w", "enc_b", "w1", "b1", "w2", "b2",
    "actor_w", "actor_b", "log_std", "critic_w", "critic_b",
)


@dataclass
class PolicyParams:
    enc_w: np.ndarray
    enc_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    actor_w: np.ndarray
    actor_b: np.ndarray
    log_std: np.ndarray
    critic_w: np.ndarray
    critic_b: np.ndarray
    obs_dim: int
    action_dim: int
    design_dim: int
    hidden: int
    latent: int
    snapshot_id: int = 0
    seed: int = -1

    @property
    def n_params(self) -> int:
        return sum(getattr(self, name).size for name in PARAM_ORDER)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "PolicyParams":
        return dataclasses.replace(self, **arrays)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ActionDistribution:
    mean: np.ndarray
    log_std: np.ndarray


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def policy_init(
    obs_dim: int,
    action_dim: int,
    design_dim: int,
    rng: int | np.random.Generator,
    hidden: int = 64,
    latent: int = 4,
) -> PolicyParams:
    """Orthogonal-style init: gain 1 trunk/encoder/critic, 0.01 actor head.

    `rng` may be an integer seed (recorded in the snapshot metadata and
    expanded through a named stream) or a ready Generator (seed recorded
    as -1).
    """
    if min(obs_dim, action_dim, design_dim, hidden, latent) < 1:
        raise ConfigError("all policy dimensions must be positive")
    if obs_dim <= latent:
        raise ConfigError(f"obs_dim {obs_dim} must exceed latent size {latent}")
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = stream("policy-init", seed)
    else:
        seed = -1
    return PolicyParams(
        enc_w=_orthogonal(rng, latent, design_dim, 1.0),
        enc_b=np.zeros(latent),
        w1=_orthogonal(rng, hidden, obs_dim, 1.0),
        b1=np.zeros(hidden),
        w2=_orthogonal(rng, hidden, hidden, 1.0),
        b2=np.zeros(hidden),
        actor_w=_orthogonal(rng, action_dim, hidden, 0.01),
        actor_b=np.zeros(action_dim),
        log_std=np.full(action_dim, LOG_STD_INIT),
        critic_w=_orthogonal(rng, 1, hidden, 1.0)[0],
        critic_b=np.zeros(1),
        obs_dim=obs_dim,
        action_dim=action_dim,
        design_dim=design_dim,
        hidden=hidden,
        latent=latent,
        seed=seed,
    )


def _check_finite(name: str, x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite activation in layer {name}")
    return x


def _forward(params: PolicyParams, design: np.ndarray, proprio: np.ndarray) -> dict:
    """Batched forward pass keeping the activations needed for backprop."""
    latent = _check_finite("encoder", np.tanh(design @ params.enc_w.T + params.enc_b))
    obs = np.concatenate([proprio, latent], axis=-1)
    h1 = _check_finite("trunk1", np.tanh(obs @ params.w1.T + params.b1))
    h2 = _check_finite("trunk2", np.tanh(h1 @ params.w2.T + params.b2))
    mean = _check_finite("actor", h2 @ params.actor_w.T + params.actor_b)
    value = _check_finite("critic", h2 @ params.critic_w + params.critic_b[0])
    return {"latent": latent, "obs": obs, "h1": h1, "h2": h2, "mean": mean, "value": value}


def policy_forward(
    params: PolicyParams, design, proprio: np.ndarray
) -> tuple[ActionDistribution, float, np.ndarray]:
    """Evaluate one observation; returns (distribution, value, assembled obs).

    `design` may be a DesignVector or a raw factor array.  The returned
    observation vector is proprio with the design latent appended (the
    layout the trunk consumed).
    """
    factors = np.asarray(getattr(design, "factors", design), dtype=np.float64)
    proprio = np.asarray(proprio, dtype=np.float64)
    acts = _forward(params, factors[None, :], proprio[None, :])
    dist = ActionDistribution(mean=acts["mean"][0], log_std=params.log_std.copy())
    return dist, float(acts["value"][0]), acts["obs"][0]


def policy_forward_batch(
    params: PolicyParams, designs: np.ndarray, proprio: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized forward for rollouts: (means, values, log_std)."""
    acts = _forward(params, designs, proprio)
    return acts["mean"], acts["value"], params.log_std


def sample_action(
    dist: ActionDistribution, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw action = mean + std*z and its log density under the distribution.

    Broadcasts over a leading batch axis in dist.mean.
    """
    std = np.exp(dist.log_std)
    z = rng.standard_normal(dist.mean.shape)
    action = dist.mean + std * z
    return action, gaussian_log_prob(dist, action)


def gaussian_log_prob(dist: ActionDistribution, action: np.ndarray) -> np.ndarray:
    z = (action - dist.mean) / np.exp(dist.log_std)
    n = dist.log_std.shape[-1]
    return -0.5 * np.sum(z**2, axis=-1) - np.sum(dist.log_std) - 0.5 * n * np.log(2.0 * np.pi)


def entropy(log_std: np.ndarray) -> float:
    n = log_std.size
    return float(np.sum(log_std) + 0.5 * n * (1.0 + np.log(2.0 * np.pi)))


def loss_and_grads(
    params: PolicyParams, minibatch: dict, ppo_cfg
) -> tuple[dict, dict[str, np.ndarray]]:
    """PPO clipped-surrogate loss and exact gradients for one minibatch.

    minibatch keys: proprio (B,P), design (B,D), action (B,A),
    old_log_prob (B,), advantage (B,) (already normalized), ret (B,).

    loss = -mean(min(r*A, clip(r)*A)) + value_coef*mean((v-ret)^2)
           - entropy_coef*entropy
    """
    proprio = minibatch["proprio"]
    design = minibatch["design"]
    action = minibatch["action"]
    old_lp = minibatch["old_log_prob"]
    adv = minibatch["advantage"]
    ret = minibatch["ret"]
    batch = proprio.shape[0]
    eps = ppo_cfg.clip_epsilon

    acts = _forward(params, design, proprio)
    mean, value = acts["mean"], acts["value"]
    std = np.exp(params.log_std)
    z = (action - mean) / std
    n_act = params.action_dim
    new_lp = -0.5 * np.sum(z**2, axis=1) - np.sum(params.log_std) - 0.5 * n_act * np.log(2.0 * np.pi)

    ratio = np.exp(new_lp - old_lp)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_err = value - ret
    value_loss = np.mean(value_err**2)
    ent = entropy(params.log_std)
    total = policy_loss + ppo_cfg.value_coef * value_loss - ppo_cfg.entropy_coef * ent
    if not np.isfinite(total):
        raise NumericError("non-finite PPO loss")

    # d(policy_loss)/d(new_lp): gradient flows only where the unclipped
    # branch is selected by the min.
    unclipped = surr1 <= surr2
    d_lp = np.where(unclipped, -ratio * adv / batch, 0.0)
    d_mean = d_lp[:, None] * (z / std)
    d_log_std = d_lp @ (z**2 - 1.0) - ppo_cfg.entropy_coef
    d_value = ppo_cfg.value_coef * 2.0 * value_err / batch

    h2, h1, obs = acts["h2"], acts["h1"], acts["obs"]
    d_h2 = d_mean @ params.actor_w + d_value[:, None] * params.critic_w[None, :]
    grads = {
        "actor_w": d_mean.T @ h2,
        "actor_b": d_mean.sum(axis=0),
        "critic_w": h2.T @ d_value,
        "critic_b": np.array([d_value.sum()]),
        "log_std": d_log_std,
    }
    d_z2 = d_h2 * (1.0 - h2**2)
    grads["w2"] = d_z2.T @ h1
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ params.w2
    d_z1 = d_h1 * (1.0 - h1**2)
    grads["w1"] = d_z1.T @ obs
    grads["b1"] = d_z1.sum(axis=0)
    d_obs = d_z1 @ params.w1
    d_latent = d_obs[:, proprio.shape[1]:]
    d_ze = d_latent * (1.0 - acts["latent"]**2)
    grads["enc_w"] = d_ze.T @ design
    grads["enc_b"] = d_ze.sum(axis=0)

    losses = {
        "total": float(total),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "approx_kl": float(np.mean(old_lp - new_lp)),
    }
    return losses, grads


def adam_init(params: PolicyParams, learning_rate: float) -> AdamState:
    zeros = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
    return AdamState(
        m=zeros,
        v={name: arr.copy() for name, arr in zeros.items()},
        step=0,
        learning_rate=learning_rate,
    )


def adam_step(
    params: PolicyParams, grads: dict[str, np.ndarray], opt: AdamState
) -> tuple[PolicyParams, AdamState]:
    """Standard Adam with bias correction; returns new snapshots of both."""
    t = opt.step + 1
    new_m, new_v, new_arrays = {}, {}, {}
    for name, arr in params.arrays().items():
        g = grads[name]
        if g.shape != arr.shape:
            raise ContractError(f"gradient shape mismatch for {name}")
        m = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        v = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * g**2
        m_hat = m / (1.0 - opt.beta1**t)
        v_hat = v / (1.0 - opt.beta2**t)
        new_arrays[name] = arr - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
        new_m[name] = m
        new_v[name] = v
    new_arrays["log_std"] = np.clip(new_arrays["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    new_params = params.with_arrays(new_arrays)
    new_opt = AdamState(
        m=new_m, v=new_v, step=t,
        learning_rate=opt.learning_rate,
        beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps,
    )
    return new_params, new_opt


def save_policy(params: PolicyParams, path) -> None:
    header = {
        "format_version": CHECKPOINT_VERSION,
        "obs_dim": params.obs_dim,
        "action_dim": params.action_dim,
        "design_dim": params.design_dim,
        "hidden": params.hidden,
        "latent": params.latent,
        "snapshot_id": params.snapshot_id,
        "seed": params.seed,
        "n_params": params.n_params,
    }
    flat = np.concatenate([params.arrays()[name].ravel() for name in PARAM_ORDER])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(flat.astype("<f8").tobytes())


def load_policy(path) -> PolicyParams:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: corrupt policy checkpoint header") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ContractError(
            f"{path}: unsupported checkpoint version {header.get('format_version')}"
        )
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if flat.size != header["n_params"]:
        raise ContractError(
            f"{path}: parameter block has {flat.size} floats, header says {header['n_params']}"
        )
    p, h, lat = header["design_dim"], header["hidden"], header["latent"]
    obs_dim, act = header["obs_dim"], header["action_dim"]
    shapes = {
        "enc_w": (lat, p), "enc_b": (lat,),
        "w1": (h, obs_dim), "b1": (h,),
        "w2": (h, h), "b2": (h,),
        "actor_w": (act, h), "actor_b": (act,),
        "log_std": (act,), "critic_w": (h,), "critic_b": (1,),
    }
    arrays = {}
    pos = 0
    for name in PARAM_ORDER:
        size = int(np.prod(shapes[name]))
        arrays[name] = flat[pos : pos + size].reshape(shapes[name]).copy()
        pos += size
    return PolicyParams(
        **arrays,
        obs_dim=obs_dim,
        action_dim=act,
        design_dim=p,
        hidden=h,
        latent=lat,
        snapshot_id=header["snapshot_id"],
        seed=header["seed"],
    )
