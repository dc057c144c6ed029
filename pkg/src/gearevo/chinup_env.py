"""Planar two-link chin-up environment.

A two-link point-mass pendulum hangs from a bar (pin joint at the origin,
y up).  Joint 1 is the shoulder-group analog at the bar, joint 2 the
elbow-group analog.  Angles are measured from straight-down vertical.
PD-controlled actuators saturate at design-scaled torque limits and joint
velocities are clamped to design-scaled speed limits, so a gear-ratio
design trades strength against speed at constant power.

The task: raise the head point (tip of link 2) to a goal just above the
bar.  Gravity torque at the shoulder far exceeds the torque limit for any
admissible design, so the task requires dynamic swing-up rather than a
static lift.

Reward convention: the limit-violation terms observe pre-clamp excursions
(commanded PD torque before saturation, joint state before the velocity
and position clamps of the final substep), while dynamics and observations
use the clamped actual state.  Without this the clamps would make those
terms identically zero.

All physics helpers broadcast over leading batch axes; the single-env
operations and the vectorized batch environment share the same code path
bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .design_space import ActuatorLimits, DesignVector, scale_actuator_limits
from .errors import ConfigError, ContractError, EnvDivergedError
from .reward import RewardBreakdown, RewardConfig, RewardInputs, reward_terms, total_reward
from .seeding import stream

N_JOINTS = 2
ACTION_DIM = 4  # [q_target (2), qdot_target (2)]
PROPRIO_DIM = 10  # goal_delta (2) + q (2) + qdot (2) + prev_action (4)


@dataclass(frozen=True)
class EnvConfig:
    m1: float = 2.0
    m2: float = 8.0
    l1: float = 0.5
    l2: float = 0.8
    gravity: float = 9.81
    dt_sim: float = 0.005
    decimation: int = 4
    episode_length: int = 250
    tau_default: tuple[float, float] = (12.0, 12.0)
    qdot_default: tuple[float, float] = (8.0, 8.0)
    kp: float = 60.0
    kd: float = 3.0
    goal: tuple[float, float] = (0.0, 0.10)
    q_min: tuple[float, float] = (-2.8, -2.8)
    q_max: tuple[float, float] = (2.8, 2.8)
    reset_noise: float = 0.05
    cyl_gap: float = 0.65  # surrogate hand/bar gap fed to the hollow-cylinder term
    qdot_obs_scale: float = 0.25  # fixed observation scaling to keep tanh inputs sane
    sym_pairs: tuple[tuple[int, int], ...] = ((0, 1),)

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2", "gravity", "dt_sim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.decimation < 1:
            raise ConfigError("decimation must be >= 1")
        if self.episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        if self.kp < 0 or self.kd < 0:
            raise ConfigError("PD gains must be non-negative")
        for name in ("tau_default", "qdot_default", "q_min", "q_max", "goal"):
            if len(getattr(self, name)) != 2:
                raise ConfigError(f"{name} must have one entry per joint")
        if any(t <= 0 for t in self.tau_default) or any(v <= 0 for v in self.qdot_default):
            raise ConfigError("default actuator limits must be strictly positive")
        if any(lo >= hi for lo, hi in zip(self.q_min, self.q_max)):
            raise ConfigError("q_min must be below q_max per joint")
        if self.reset_noise < 0:
            raise ConfigError("reset_noise must be non-negative")


@dataclass
class EnvState:
    q: np.ndarray
    qdot: np.ndarray
    prev_action: np.ndarray
    prev_qdot: np.ndarray  # previous step's reward-side velocity signal
    step_count: int
    rng: np.random.Generator
    limits: ActuatorLimits
    diverged: bool = False


def mass_matrix(q: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Joint-space mass matrix M(q), shape (..., 2, 2)."""
    q = np.asarray(q, dtype=np.float64)
    a = (config.m1 + config.m2) * config.l1**2
    b = config.m2 * config.l2**2
    c = config.m2 * config.l1 * config.l2
    c2 = np.cos(q[..., 1])
    m11 = a + b + 2.0 * c * c2
    m12 = b + c * c2
    m22 = np.broadcast_to(b, m11.shape)
    return np.stack(
        [np.stack([m11, m12], axis=-1), np.stack([m12, m22], axis=-1)], axis=-2
    )


def coriolis_forces(q: np.ndarray, qdot: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Velocity-product forces C(q, qdot), shape (..., 2)."""
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    c = config.m2 * config.l1 * config.l2
    s2 = np.sin(q[..., 1])
    qd1, qd2 = qdot[..., 0], qdot[..., 1]
    c1 = -c * s2 * (2.0 * qd1 * qd2 + qd2**2)
    c2 = c * s2 * qd1**2
    return np.stack([c1, c2], axis=-1)


def gravity_forces(q: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Gravity torques G(q), shape (..., 2)."""
    q = np.asarray(q, dtype=np.float64)
    g = config.gravity
    s1 = np.sin(q[..., 0])
    s12 = np.sin(q[..., 0] + q[..., 1])
    g1 = (config.m1 + config.m2) * g * config.l1 * s1 + config.m2 * g * config.l2 * s12
    g2 = config.m2 * g * config.l2 * s12
    return np.stack([g1, g2], axis=-1)


def total_energy(q: np.ndarray, qdot: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Kinetic plus potential energy (potential zero at the bar height)."""
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    m = mass_matrix(q, config)
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", qdot, m, qdot)
    g = config.gravity
    potential = -(config.m1 + config.m2) * g * config.l1 * np.cos(
        q[..., 0]
    ) - config.m2 * g * config.l2 * np.cos(q[..., 0] + q[..., 1])
    return kinetic + potential


def forward_kinematics(q: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Head position (tip of link 2), bar at origin, y up; shape (..., 2)."""
    q = np.asarray(q, dtype=np.float64)
    q1 = q[..., 0]
    q12 = q[..., 0] + q[..., 1]
    x = config.l1 * np.sin(q1) + config.l2 * np.sin(q12)
    y = -config.l1 * np.cos(q1) - config.l2 * np.cos(q12)
    return np.stack([x, y], axis=-1)


def _accel(q, qdot, tau, config):
    """Closed-form solve of M qdd = tau - C - G for the 2x2 system."""
    a = (config.m1 + config.m2) * config.l1**2
    b = config.m2 * config.l2**2
    c = config.m2 * config.l1 * config.l2
    c2 = np.cos(q[..., 1])
    m11 = a + b + 2.0 * c * c2
    m12 = b + c * c2
    rhs = tau - coriolis_forces(q, qdot, config) - gravity_forces(q, config)
    r1, r2 = rhs[..., 0], rhs[..., 1]
    det = m11 * b - m12 * m12  # = m2 l1^2 l2^2 (m1 + m2 sin^2 q2) > 0
    qdd1 = (b * r1 - m12 * r2) / det
    qdd2 = (m11 * r2 - m12 * r1) / det
    return np.stack([qdd1, qdd2], axis=-1)


def _substep(q, qdot, tau, qdot_max, q_lo, q_hi, config):
    """One semi-implicit Euler step with velocity and position clamps.

    Returns (q_new, qdot_new, q_pre, qdot_pre) where the *_pre values are
    the unclamped excursions the reward terms observe.
    """
    qdd = _accel(q, qdot, tau, config)
    qdot_pre = qdot + config.dt_sim * qdd
    qdot_new = np.clip(qdot_pre, -qdot_max, qdot_max)
    q_pre = q + config.dt_sim * qdot_new
    q_new = np.clip(q_pre, q_lo, q_hi)
    at_stop = q_pre != q_new
    qdot_new = np.where(at_stop, 0.0, qdot_new)
    return q_new, qdot_new, q_pre, qdot_pre


def _pd_raw(q, qdot, action, config):
    """Unclamped PD torque for action layout [q_target (2), qdot_target (2)]."""
    q_target = action[..., :2]
    qdot_target = action[..., 2:]
    return config.kp * (q_target - q) + config.kd * (qdot_target - qdot)


def pd_torque(
    state: EnvState, action: np.ndarray, limits: ActuatorLimits, config: EnvConfig
) -> np.ndarray:
    """PD torque clamped to the design-scaled limits."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape[-1] != ACTION_DIM:
        raise ContractError(f"action must have {ACTION_DIM} entries")
    raw = _pd_raw(state.q, state.qdot, action, config)
    return np.clip(raw, -limits.tau_max, limits.tau_max)


def env_reset(config: EnvConfig, design: DesignVector, rng: np.random.Generator) -> EnvState:
    """Fresh episode: small random joint angles, zero velocity."""
    q = rng.uniform(-config.reset_noise, config.reset_noise, size=N_JOINTS)
    limits = scale_actuator_limits(
        design, np.array(config.tau_default), np.array(config.qdot_default)
    )
    return EnvState(
        q=q,
        qdot=np.zeros(N_JOINTS),
        prev_action=np.zeros(ACTION_DIM),
        prev_qdot=np.zeros(N_JOINTS),
        step_count=0,
        rng=rng,
        limits=limits,
    )


def dynamics_step(state: EnvState, tau: np.ndarray, config: EnvConfig) -> EnvState:
    """Advance one sim substep under the given (already clamped) torque."""
    q_new, qdot_new, _, _ = _substep(
        state.q,
        state.qdot,
        np.asarray(tau, dtype=np.float64),
        state.limits.qdot_max,
        np.array(config.q_min),
        np.array(config.q_max),
        config,
    )
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(qdot_new))):
        raise EnvDivergedError(f"non-finite state at step {state.step_count}")
    return EnvState(
        q=q_new,
        qdot=qdot_new,
        prev_action=state.prev_action,
        prev_qdot=state.prev_qdot,
        step_count=state.step_count,
        rng=state.rng,
        limits=state.limits,
        diverged=state.diverged,
    )


def _base_ok(head: np.ndarray) -> np.ndarray:
    """Body-position predicate: head may not swing past the bar in front.

    True (no penalty) when the head is behind the bar plane or below it;
    only the front-upper quadrant is penalized, so reaching the goal on the
    bar plane itself is never punished.
    """
    return (head[..., 0] <= 0.0) | (head[..., 1] <= 0.0)


def _step_core(q, qdot, prev_action, prev_qdot, action, limits, config, reward_cfg):
    """Shared control-step body for the single and batched environments.

    Runs `decimation` substeps with the action held, recomputing the PD
    torque each substep, then evaluates the reward.  Returns the new state
    arrays, the reward breakdown, and the reward-side velocity signal that
    becomes prev_qdot.
    """
    q_lo = np.array(config.q_min)
    q_hi = np.array(config.q_max)
    tau_raw = None
    q_pre = q
    qdot_pre = qdot
    for _ in range(config.decimation):
        tau_raw = _pd_raw(q, qdot, action, config)
        tau = np.clip(tau_raw, -limits.tau_max, limits.tau_max)
        q, qdot, q_pre, qdot_pre = _substep(
            q, qdot, tau, limits.qdot_max, q_lo, q_hi, config
        )

    head = forward_kinematics(q, config)
    inputs = RewardInputs(
        pos_head=head,
        pos_goal=np.array(config.goal),
        cyl_gap=config.cyl_gap,
        base_ok=_base_ok(head),
        sym_pairs=config.sym_pairs,
        g_proj_xy=np.zeros(q.shape[:-1] + (2,)),
        tau=tau_raw,
        qdot=qdot_pre,
        prev_qdot=prev_qdot,
        dt=config.dt_sim * config.decimation,
        action=action,
        prev_action=prev_action,
        q=q_pre,
        q_min=q_lo,
        q_max=q_hi,
        qdot_max=limits.qdot_max,
        tau_max=limits.tau_max,
    )
    breakdown = reward_terms(inputs, reward_cfg)
    total_reward(breakdown, reward_cfg)
    return q, qdot, breakdown, qdot_pre


def env_step(
    state: EnvState,
    action: np.ndarray,
    design: DesignVector,
    config: EnvConfig,
    reward_cfg: RewardConfig,
) -> tuple[EnvState, RewardBreakdown, bool, float]:
    """One control step: PD torque, decimated substeps, reward, termination."""
    if state.step_count >= config.episode_length:
        raise ContractError("env_step called after episode end")
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (ACTION_DIM,):
        raise ContractError(f"action must have shape ({ACTION_DIM},)")
    limits = scale_actuator_limits(
        design, np.array(config.tau_default), np.array(config.qdot_default)
    )
    q, qdot, breakdown, qdot_signal = _step_core(
        state.q, state.qdot, state.prev_action, state.prev_qdot,
        action, limits, config, reward_cfg,
    )
    diverged = not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot)))
    if diverged:
        breakdown = RewardBreakdown()
    new_state = EnvState(
        q=q,
        qdot=qdot,
        prev_action=action.copy(),
        prev_qdot=qdot_signal,
        step_count=state.step_count + 1,
        rng=state.rng,
        limits=limits,
        diverged=diverged,
    )
    done = diverged or new_state.step_count >= config.episode_length
    return new_state, breakdown, done, float(breakdown.total)


def observation_proprio(state_q, state_qdot, prev_action, config: EnvConfig) -> np.ndarray:
    """Proprioceptive observation block: goal delta, q, scaled qdot, prev action."""
    head = forward_kinematics(state_q, config)
    goal_delta = np.array(config.goal) - head
    return np.concatenate(
        [goal_delta, state_q, state_qdot * config.qdot_obs_scale, prev_action], axis=-1
    )


@dataclass
class Observation:
    """Typed view of the 14-dim observation the policy trunk consumes."""

    goal_delta: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    prev_action: np.ndarray
    design_latent: np.ndarray

    DIM = PROPRIO_DIM + 4

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.goal_delta, self.q, self.qdot, self.prev_action, self.design_latent]
        )


def split_observation(obs: np.ndarray) -> Observation:
    """Decompose a flat observation vector into its named blocks."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (Observation.DIM,):
        raise ContractError(f"observation must have {Observation.DIM} entries")
    return Observation(
        goal_delta=obs[0:2],
        q=obs[2:4],
        qdot=obs[4:6],
        prev_action=obs[6:10],
        design_latent=obs[10:14],
    )


@dataclass
class EpisodeRecord:
    design_idx: int
    episode_return: float
    failed: bool = False


class VecChinupEnv:
    """A bank of independent chin-up environments stepped in lockstep.

    Each environment evaluates one design from a population (several
    environments per design).  Episodes auto-reset on termination and
    completed episode returns are reported tagged by design index.
    Per-environment random streams are derived from (seed, phase, env
    index), so trajectories depend only on those keys and the actions.
    """

    def __init__(
        self,
        config: EnvConfig,
        reward_cfg: RewardConfig,
        design_mat: np.ndarray,
        env_to_design: np.ndarray,
        seed: int,
        phase: str | int = 0,
    ):
        design_mat = np.asarray(design_mat, dtype=np.float64)
        if design_mat.ndim != 2 or design_mat.shape[1] != N_JOINTS:
            raise ContractError(f"design matrix must be (n_env, {N_JOINTS})")
        self.config = config
        self.reward_cfg = reward_cfg
        self.design_mat = design_mat
        self.env_to_design = np.asarray(env_to_design, dtype=np.int64)
        self.n_envs = design_mat.shape[0]
        self.tau_max = np.array(config.tau_default) * design_mat
        self.qdot_max = np.array(config.qdot_default) / design_mat
        self.limits = ActuatorLimits(tau_max=self.tau_max, qdot_max=self.qdot_max)
        self.rngs = [stream("env", seed, phase, k) for k in range(self.n_envs)]

        self.q = np.zeros((self.n_envs, N_JOINTS))
        self.qdot = np.zeros((self.n_envs, N_JOINTS))
        self.prev_action = np.zeros((self.n_envs, ACTION_DIM))
        self.prev_qdot = np.zeros((self.n_envs, N_JOINTS))
        self.step_count = np.zeros(self.n_envs, dtype=np.int64)
        self.ep_return = np.zeros(self.n_envs)
        self.reset_mask(np.ones(self.n_envs, dtype=bool))

    def reset_mask(self, mask: np.ndarray) -> None:
        noise = self.config.reset_noise
        for k in np.nonzero(mask)[0]:
            self.q[k] = self.rngs[k].uniform(-noise, noise, size=N_JOINTS)
        self.qdot[mask] = 0.0
        self.prev_action[mask] = 0.0
        self.prev_qdot[mask] = 0.0
        self.step_count[mask] = 0
        self.ep_return[mask] = 0.0

    def proprio(self) -> np.ndarray:
        return observation_proprio(self.q, self.qdot, self.prev_action, self.config)

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[EpisodeRecord]]:
        """Advance every environment one control step.

        Returns (rewards, dones, completed episode records); environments
        that finished are reset in place after their record is taken.
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n_envs, ACTION_DIM):
            raise ContractError(f"actions must be ({self.n_envs}, {ACTION_DIM})")
        q, qdot, breakdown, qdot_signal = _step_core(
            self.q, self.qdot, self.prev_action, self.prev_qdot,
            actions, self.limits, self.config, self.reward_cfg,
        )
        rewards = np.asarray(breakdown.total, dtype=np.float64)
        diverged = ~(np.all(np.isfinite(q), axis=1) & np.all(np.isfinite(qdot), axis=1))
        if np.any(diverged):
            rewards = np.where(diverged, 0.0, rewards)
            q = np.where(diverged[:, None], 0.0, q)
            qdot = np.where(diverged[:, None], 0.0, qdot)

        self.q = q
        self.qdot = qdot
        self.prev_action = actions.copy()
        self.prev_qdot = qdot_signal
        self.step_count += 1
        self.ep_return += rewards

        dones = diverged | (self.step_count >= self.config.episode_length)
        completed = [
            EpisodeRecord(
                design_idx=int(self.env_to_design[k]),
                episode_return=float(self.ep_return[k]),
                failed=bool(diverged[k]),
            )
            for k in np.nonzero(dones)[0]
        ]
        if np.any(dones):
            self.reset_mask(dones)
        return rewards, dones, completed


def rollout_trajectory(
    config: EnvConfig,
    design: DesignVector,
    reward_cfg: RewardConfig,
    action_fn,
    seed: int,
) -> tuple[list[dict], float, list[RewardBreakdown]]:
    """Run one episode; action_fn(proprio, design) -> 4-vector action.

    Returns per-step rows for the trajectory CSV, the episode return, and
    the per-step reward breakdowns.
    """
    rng = stream("trajectory", seed)
    state = env_reset(config, design, rng)
    rows = []
    breakdowns = []
    episode_return = 0.0
    done = False
    while not done:
        proprio = observation_proprio(state.q, state.qdot, state.prev_action, config)
        action = np.asarray(action_fn(proprio, design), dtype=np.float64)
        tau = pd_torque(state, action, state.limits, config)
        state, breakdown, done, contrib = env_step(state, action, design, config, reward_cfg)
        episode_return += contrib
        breakdowns.append(breakdown)
        head = forward_kinematics(state.q, config)
        rows.append(
            {
                "step": state.step_count - 1,
                "q1": state.q[0],
                "q2": state.q[1],
                "qd1": state.qdot[0],
                "qd2": state.qdot[1],
                "tau1": tau[0],
                "tau2": tau[1],
                "head_x": head[0],
                "head_y": head[1],
                "reward_total": contrib,
            }
        )
    return rows, episode_return, breakdowns


TRAJECTORY_COLUMNS = (
    "step", "q1", "q2", "qd1", "qd2", "tau1", "tau2", "head_x", "head_y", "reward_total",
)


def write_trajectory_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow(
                [row["step"]] + [repr(float(row[c])) for c in TRAJECTORY_COLUMNS[1:]]
            )


def read_trajectory_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: not a trajectory CSV")
    out = []
    for row in rows[1:]:
        rec = {"step": int(row[0])}
        rec.update({c: float(v) for c, v in zip(TRAJECTORY_COLUMNS[1:], row[1:])})
        out.append(rec)
    return out
