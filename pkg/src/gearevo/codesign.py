"""Evolutionary actuator/policy co-design loop and its frozen-policy baseline.

Outer loop: CMA-ES proposes a population of gear-ratio designs per
iteration.  Inner loop: a shared policy is trained by PPO on environments
expanded from that population, and each design's fitness is the negative
of its mean episode return over a terminal window (lower is better).

Two modes differ only in the fine-tune source from iteration 2 on:

* EA_CORL: iteration 1 pre-trains the base policy; the best snapshot
  (the one that achieved the best population fitness so far) seeds every
  later adaptation, so policy improvements compound with the evolution.
* PT_FT: every iteration fine-tunes from the fixed pre-trained base; the
  published best policy remains the base snapshot.

Runs checkpoint every outer iteration into a run directory and can resume
to a byte-identical continuation because every random stream is derived
from (seed, structural position) rather than carried across iterations.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import os
import pickle
import time
from dataclasses import dataclass, field

import numpy as np

from .chinup_env import ACTION_DIM, PROPRIO_DIM, EnvConfig, VecChinupEnv
from .cma_es import (
    CmaEsConfig,
    CmaEsState,
    GenerationLogRow,
    cma_ask,
    cma_init,
    cma_tell,
    write_generation_log,
)
from .design_space import (
    DesignSpace,
    DesignVector,
    expand_designs,
    grid_slice,
    write_designs_csv,
)
from .errors import CheckpointError, ConfigError, NumericError
from .policy import (
    ActionDistribution,
    AdamState,
    PolicyParams,
    adam_init,
    load_policy,
    policy_forward_batch,
    policy_init,
    sample_action,
    save_policy,
)
from .ppo import PpoConfig, train, write_learning_curve_csv
from .reward import RewardConfig
from .seeding import stream

logger = logging.getLogger("gearevo.codesign")

CHECKPOINT_VERSION = 1
POLICY_LATENT = 4


class Mode(enum.Enum):
    EA_CORL = "ea-corl"
    PT_FT = "pt-ft"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ConfigError(f"unknown mode {text!r}; expected one of "
                          f"{[m.value for m in cls]}")


@dataclass
class CodesignConfig:
    mode: Mode = Mode.EA_CORL
    cma: CmaEsConfig = field(default_factory=CmaEsConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    space: DesignSpace = field(default_factory=DesignSpace)
    n_env: int = 4000
    n_pop: int = 50
    base_train_iters: int = 5000
    adapt_train_iters: int = 2500
    adapt_learning_rate: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.n_env % self.n_pop != 0:
            raise ConfigError(
                f"n_env must be divisible by n_pop, got n_env={self.n_env}, "
                f"n_pop={self.n_pop}"
            )
        if self.cma.population_size != self.n_pop:
            raise ConfigError(
                f"cma.population_size ({self.cma.population_size}) must equal "
                f"n_pop ({self.n_pop})"
            )
        if self.space.dim != self.cma.dim:
            raise ConfigError(
                f"design space dim ({self.space.dim}) must equal cma dim ({self.cma.dim})"
            )
        if min(self.base_train_iters, self.adapt_train_iters) < 0:
            raise ConfigError("training iteration counts must be non-negative")


@dataclass
class FitnessRecord:
    iteration: int
    designs: list[DesignVector]
    j_pop: np.ndarray
    mean_returns: np.ndarray
    population_best_j: float
    population_best_idx: int
    global_best_j: float
    global_best_design: DesignVector
    snapshot_id: int
    source_snapshot_id: int
    sigma: float
    dist_mean: np.ndarray
    failed: bool = False


@dataclass
class CodesignResult:
    mode: Mode
    best_design: DesignVector
    best_fitness: float
    best_policy: PolicyParams | None
    history: list[FitnessRecord]
    wall_time_s: float
    completed: bool


def evaluate_population(
    params: PolicyParams,
    opt: AdamState,
    designs: list[DesignVector],
    cfg: CodesignConfig,
    n_iterations: int | None = None,
    learning_rate: float | None = None,
    phase: str | int = 0,
) -> tuple[PolicyParams, np.ndarray, np.ndarray, list[dict], bool]:
    """Train on the expanded population and score each design.

    Returns (task-adapted snapshot, j_pop, mean returns, training history,
    failed).  Fitness is the exact negative of each design's terminal-window
    mean return.  A numeric training failure marks the whole population
    failed (+inf fitness, NaN returns) and hands back the input snapshot so
    the run can continue.
    """
    if n_iterations is None:
        n_iterations = cfg.adapt_train_iters
    ppo_cfg = cfg.ppo
    if learning_rate is not None:
        ppo_cfg = dataclasses.replace(ppo_cfg, learning_rate=learning_rate)
    plan = expand_designs(cfg.n_pop, cfg.n_env)
    try:
        new_params, history, per_design = train(
            params, opt, plan, designs, n_iterations, ppo_cfg,
            cfg.env, cfg.reward, cfg.seed, phase=phase,
        )
    except NumericError as exc:
        logger.error("population evaluation failed at phase %s: %s", phase, exc)
        n = len(designs)
        return params, np.full(n, np.inf), np.full(n, np.nan), [], True
    j_pop = np.where(np.isnan(per_design), np.inf, -per_design)
    return new_params, j_pop, per_design, history, False


def run_ea_corl(
    cfg: CodesignConfig,
    out_dir=None,
    fitness_fn=None,
    stop_after: int | None = None,
    resume: bool = False,
) -> CodesignResult:
    """Co-design with continuous policy adaptation (best-snapshot warm starts)."""
    if cfg.mode is not Mode.EA_CORL:
        raise ConfigError("run_ea_corl requires mode ea-corl")
    return _run(cfg, out_dir, fitness_fn, stop_after, resume)


def run_pt_ft(
    cfg: CodesignConfig,
    out_dir=None,
    fitness_fn=None,
    stop_after: int | None = None,
    resume: bool = False,
) -> CodesignResult:
    """Baseline: every iteration fine-tunes from the frozen pre-trained base."""
    if cfg.mode is not Mode.PT_FT:
        raise ConfigError("run_pt_ft requires mode pt-ft")
    return _run(cfg, out_dir, fitness_fn, stop_after, resume)


def run(cfg: CodesignConfig, **kwargs) -> CodesignResult:
    """Dispatch on cfg.mode."""
    if cfg.mode is Mode.EA_CORL:
        return run_ea_corl(cfg, **kwargs)
    return run_pt_ft(cfg, **kwargs)


def _run(cfg, out_dir, fitness_fn, stop_after, resume) -> CodesignResult:
    t_start = time.monotonic()
    wall_accum = 0.0
    history: list[FitnessRecord] = []
    params_base: PolicyParams | None = None
    params_best: PolicyParams | None = None
    j_star = np.inf
    d_star: DesignVector | None = None

    if resume:
        if out_dir is None:
            raise CheckpointError("resume requires a run directory")
        state, start_iter, j_star, d_star, history, wall_accum = _load_checkpoint(
            cfg, out_dir
        )
        if fitness_fn is None:
            params_base = load_policy(os.path.join(out_dir, "policies", "base.bin"))
            params_best = load_policy(os.path.join(out_dir, "policies", "best.bin"))
    else:
        state = cma_init(dataclasses.replace(cfg.cma, seed=cfg.seed))
        start_iter = 1

    last_iter = cfg.cma.max_iterations
    if stop_after is not None:
        last_iter = min(last_iter, stop_after)

    for i in range(start_iter, last_iter + 1):
        candidates = cma_ask(state, cfg.space)
        designs = [c.design for c in candidates]
        failed = False
        train_history: list[dict] = []

        if fitness_fn is not None:
            j_pop = np.array([float(fitness_fn(d)) for d in designs])
            mean_returns = -j_pop
            source_id = 0
        elif i == 1:
            source = policy_init(
                PROPRIO_DIM + POLICY_LATENT, ACTION_DIM, cfg.cma.dim,
                cfg.seed, latent=POLICY_LATENT,
            )
            source_id = source.snapshot_id
            opt = adam_init(source, cfg.ppo.learning_rate)
            params_i, j_pop, mean_returns, train_history, failed = evaluate_population(
                source, opt, designs, cfg,
                n_iterations=cfg.base_train_iters, phase=i,
            )
            params_i = dataclasses.replace(params_i, snapshot_id=i)
            params_base = params_i
            params_best = params_i
        else:
            source = params_best if cfg.mode is Mode.EA_CORL else params_base
            source_id = source.snapshot_id
            opt = adam_init(source, cfg.adapt_learning_rate)
            params_i, j_pop, mean_returns, train_history, failed = evaluate_population(
                source, opt, designs, cfg,
                n_iterations=cfg.adapt_train_iters,
                learning_rate=cfg.adapt_learning_rate, phase=i,
            )
            params_i = dataclasses.replace(params_i, snapshot_id=i)

        best_idx = int(np.argmin(j_pop))
        pop_best = float(j_pop[best_idx])
        if pop_best < j_star:
            j_star = pop_best
            d_star = designs[best_idx]
            if fitness_fn is None and cfg.mode is Mode.EA_CORL and i >= 2:
                params_best = params_i

        for cand, fitness in zip(candidates, j_pop):
            cand.fitness = float(fitness)
        state = cma_tell(state, candidates)

        record = FitnessRecord(
            iteration=i,
            designs=designs,
            j_pop=j_pop,
            mean_returns=mean_returns,
            population_best_j=pop_best,
            population_best_idx=best_idx,
            global_best_j=float(j_star),
            global_best_design=d_star,
            snapshot_id=0 if fitness_fn is not None else params_best.snapshot_id,
            source_snapshot_id=source_id,
            sigma=state.sigma,
            dist_mean=state.mean.copy(),
            failed=failed,
        )
        history.append(record)

        if out_dir is not None:
            _checkpoint(
                cfg, out_dir, state, i, j_star, d_star, history,
                wall_accum + (time.monotonic() - t_start),
                params_base, params_best,
                params_i if fitness_fn is None else None,
                train_history,
            )

    completed = last_iter >= cfg.cma.max_iterations
    wall = wall_accum + (time.monotonic() - t_start)
    return CodesignResult(
        mode=cfg.mode,
        best_design=d_star,
        best_fitness=float(j_star),
        best_policy=params_best,
        history=history,
        wall_time_s=wall,
        completed=completed,
    )


# --- run directory layout ---------------------------------------------------

EVOLUTION_FILE = "evolution.csv"
CMA_STATE_FILE = "cma_state"
CHECKPOINT_FILE = "checkpoint.pkl"
CMA_LOG_FILE = "cma_log.csv"
POLICY_DIR = "policies"
BEST_DESIGN_FILE = "best_design.csv"


def _atomic_write(path: str, write_fn) -> None:
    tmp = path + ".tmp"
    write_fn(tmp)
    os.replace(tmp, path)


def write_evolution_csv(history: list[FitnessRecord], path) -> None:
    """Fitness trajectory: per-design fitness plus bests, one row per iteration."""
    import csv

    n_pop = len(history[0].j_pop) if history else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "population_best", "global_best"]
            + [f"j_{k}" for k in range(n_pop)]
        )
        for rec in history:
            writer.writerow(
                [rec.iteration, repr(rec.population_best_j), repr(rec.global_best_j)]
                + [repr(float(x)) for x in rec.j_pop]
            )


def read_evolution_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["iteration", "population_best", "global_best"]:
        raise ValueError(f"{path}: not an evolution CSV")
    out = []
    for row in rows[1:]:
        out.append(
            {
                "iteration": int(row[0]),
                "population_best": float(row[1]),
                "global_best": float(row[2]),
                "j_pop": np.array([float(x) for x in row[3:]]),
            }
        )
    return out


def _checkpoint(
    cfg, out_dir, state, iteration, j_star, d_star, history, wall_time,
    params_base, params_best, params_current, train_history,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    policies = os.path.join(out_dir, POLICY_DIR)
    os.makedirs(policies, exist_ok=True)

    payload = {
        "version": CHECKPOINT_VERSION,
        "mode": cfg.mode.value,
        "iteration": iteration,
        "cma_state": state,
        "j_star": float(j_star),
        "d_star": None if d_star is None else d_star.factors.copy(),
        "history": history,
        "wall_time_s": float(wall_time),
    }
    _atomic_write(
        os.path.join(out_dir, CHECKPOINT_FILE),
        lambda p: pickle.dump(payload, open(p, "wb")),
    )
    _atomic_write(
        os.path.join(out_dir, CMA_STATE_FILE),
        lambda p: pickle.dump(state, open(p, "wb")),
    )
    _atomic_write(
        os.path.join(out_dir, EVOLUTION_FILE),
        lambda p: write_evolution_csv(history, p),
    )
    log_rows = [
        GenerationLogRow(
            generation=rec.iteration,
            best_fitness=rec.population_best_j,
            mean_fitness=float(np.mean(rec.j_pop)),
            sigma=rec.sigma,
            mean=rec.dist_mean,
        )
        for rec in history
    ]
    _atomic_write(
        os.path.join(out_dir, CMA_LOG_FILE), lambda p: write_generation_log(log_rows, p)
    )
    if d_star is not None:
        _atomic_write(
            os.path.join(out_dir, BEST_DESIGN_FILE),
            lambda p: write_designs_csv([d_star], p),
        )
    if params_base is not None:
        save_policy(params_base, os.path.join(policies, "base.bin"))
    if params_best is not None:
        save_policy(params_best, os.path.join(policies, "best.bin"))
    if params_current is not None:
        save_policy(params_current, os.path.join(policies, f"iter_{iteration:04d}.bin"))
    if train_history:
        write_learning_curve_csv(
            train_history,
            os.path.join(out_dir, f"learning_curve_iter_{iteration:04d}.csv"),
        )


def _load_checkpoint(cfg, out_dir):
    path = os.path.join(out_dir, CHECKPOINT_FILE)
    try:
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version")
    if payload["mode"] != cfg.mode.value:
        raise CheckpointError(
            f"{path}: checkpoint mode {payload['mode']} does not match config "
            f"mode {cfg.mode.value}"
        )
    state: CmaEsState = payload["cma_state"]
    start_iter = payload["iteration"] + 1
    d_star = None if payload["d_star"] is None else DesignVector(payload["d_star"])
    return (
        state,
        start_iter,
        payload["j_star"],
        d_star,
        payload["history"],
        payload["wall_time_s"],
    )


# --- rollout-only evaluation -------------------------------------------------


def rollout_returns(
    env_cfg: EnvConfig,
    reward_cfg: RewardConfig,
    params: PolicyParams,
    design: DesignVector,
    n_episodes: int,
    seed: int,
    phase: str | int = "eval",
) -> np.ndarray:
    """Episode returns of the sampled policy on one design, no training."""
    design_mat = np.tile(design.factors, (n_episodes, 1))
    vec_env = VecChinupEnv(
        config=env_cfg,
        reward_cfg=reward_cfg,
        design_mat=design_mat,
        env_to_design=np.zeros(n_episodes, dtype=np.int64),
        seed=seed,
        phase=phase,
    )
    rng = stream("eval-actions", seed, phase)
    returns: list[float] = []
    for _ in range(env_cfg.episode_length):
        prop = vec_env.proprio()
        means, _, log_std = policy_forward_batch(params, vec_env.design_mat, prop)
        actions, _ = sample_action(ActionDistribution(means, log_std), rng)
        _, _, completed = vec_env.step(actions)
        returns.extend(e.episode_return for e in completed)
    return np.asarray(returns[:n_episodes])


def heatmap_sweep(
    cfg: CodesignConfig,
    params: PolicyParams,
    axis_a: int,
    axis_b: int,
    resolution: int,
    fixed: DesignVector | None = None,
) -> list[tuple[DesignVector, float]]:
    """Fitness over a 2-D design grid by rollout-only evaluation.

    Each cell runs n_exp (= n_env / n_pop) episodes under the given policy
    snapshot; fitness is the negative mean return, exactly as in training.
    Axes not swept are held at `fixed` (default: all-ones design).
    """
    if fixed is None:
        fixed = DesignVector(np.ones(cfg.space.dim))
    grid = grid_slice(cfg.space, axis_a, axis_b, resolution, fixed)
    n_exp = cfg.n_env // cfg.n_pop
    out = []
    for cell, design in enumerate(grid):
        returns = rollout_returns(
            cfg.env, cfg.reward, params, design, n_exp, cfg.seed,
            phase=f"heatmap-{axis_a}-{axis_b}-{cell}",
        )
        out.append((design, float(-np.mean(returns))))
    return out


def write_heatmap_csv(grid: list[tuple[DesignVector, float]], axis_a: int, axis_b: int, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"factor_{axis_a}", f"factor_{axis_b}", "fitness"])
        for design, fitness in grid:
            writer.writerow(
                [
                    repr(float(design.factors[axis_a])),
                    repr(float(design.factors[axis_b])),
                    repr(fitness),
                ]
            )


def read_heatmap_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != 3 or rows[0][2] != "fitness":
        raise ValueError(f"{path}: not a heatmap CSV")
    return [
        {"a": float(r[0]), "b": float(r[1]), "fitness": float(r[2])} for r in rows[1:]
    ]
