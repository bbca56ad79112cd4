"""Evolution Strategies with antithetic sampling and centered-rank shaping.

Each generation draws ``n_pairs`` Gaussian directions, evaluates both signs of
each, replaces rewards by centered ranks and moves the parameters along the
utility-weighted sum of directions. Every random draw is keyed by
(seed, generation, pair index), so a run does not depend on how rollouts are
scheduled across workers.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .envs import EnvSpec, make_env
from .policies import Policy, PolicySpec, format_float, init_params, param_count
from .rollout import ObsNormalizer, rollout

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 200_000

_NOISE_STREAM = 0
_ENV_STREAM = 1


@dataclass(frozen=True)
class EsConfig:
    n_pairs: int = 32
    sigma: float = 0.05
    lr: float = 0.03
    generations: int = 10_000
    seed: int = 0
    obs_norm: bool = False

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def population(self) -> int:
        return 2 * self.n_pairs


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    env_steps: int
    reward_mean: float
    reward_max: float
    eval_reward: float


LOG_HEADER = ("generation", "env_steps", "reward_mean", "reward_max", "eval_reward")


@dataclass
class TrainResult:
    records: list[GenerationRecord]
    params: np.ndarray
    policy_spec: PolicySpec
    seed: int
    obs_filter: Optional[ObsNormalizer] = field(default=None, repr=False)

    @property
    def final_eval(self) -> float:
        return self.records[-1].eval_reward


def _stream(seed: int, generation: int, index: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, generation, index, purpose])


def env_seed(seed: int, generation: int, index: int) -> int:
    """Seed handed to the environment for perturbation ``index`` of ``generation``."""
    return int(_stream(seed, generation, index, _ENV_STREAM).generate_state(1)[0])


def sample_perturbations(seed: int, generation: int, n_pairs: int, dim: int) -> np.ndarray:
    """Antithetic unit-Gaussian directions, shape (2 * n_pairs, dim).

    Row i and row i + n_pairs are exact negatives. Scale by sigma at the call site.
    """
    eps = np.empty((n_pairs, dim))
    for i in range(n_pairs):
        eps[i] = np.random.default_rng(_stream(seed, generation, i, _NOISE_STREAM)).standard_normal(dim)
    return np.concatenate([eps, -eps])


def shape_fitness(rewards: Sequence[float]) -> np.ndarray:
    """Centered ranks in [-0.5, 0.5]; tied rewards share their average rank."""
    rewards = np.asarray(rewards, dtype=np.float64)
    n = rewards.size
    if n < 2:
        raise ValueError("fitness shaping needs at least two rewards")
    ranks = rankdata(rewards, method="average") - 1.0
    return ranks / (n - 1) - 0.5


def es_update(params: np.ndarray, noises: np.ndarray, utilities: np.ndarray, config: EsConfig) -> np.ndarray:
    """theta + lr / (2 * n_pairs * sigma) * sum_j utility_j * eps_j"""
    noises = np.asarray(noises, dtype=np.float64)
    utilities = np.asarray(utilities, dtype=np.float64)
    pop = config.population
    if noises.shape[0] != pop or utilities.shape != (pop,):
        raise ValueError(f"expected {pop} noises and utilities, got {noises.shape[0]} and {utilities.shape[0]}")
    if noises.shape[1:] != np.shape(params):
        raise ValueError("noise dimension does not match parameters")
    step = utilities @ noises
    return params + (config.lr / (pop * config.sigma)) * step


def evaluate(task) -> tuple[float, int, Optional[np.ndarray], Optional[np.ndarray]]:
    """Worker entry point: one rollout of ``params`` on a freshly built env."""
    policy_spec, env_spec, params, seed, obs_filter, collect = task
    policy = Policy(policy_spec, params)
    res = rollout(policy, make_env(env_spec), seed=seed, obs_filter=obs_filter, collect_obs_stats=collect)
    return res.reward, res.steps, res.obs_sum, res.obs_sqsum


class _ObsStats:
    def __init__(self, dim: int):
        self.count = 0
        self.sum = np.zeros(dim)
        self.sqsum = np.zeros(dim)

    def add(self, s, sq, n):
        self.sum += s
        self.sqsum += sq
        self.count += n

    def filter(self) -> ObsNormalizer:
        mean = self.sum / self.count
        var = np.maximum(self.sqsum / self.count - mean * mean, 0.0)
        return ObsNormalizer(mean, np.sqrt(var) + 1e-8)


def train(
    config: EsConfig,
    policy_spec: PolicySpec,
    env_spec: EnvSpec,
    budget: int = DEFAULT_BUDGET,
    *,
    init: Optional[np.ndarray] = None,
    workers: int = 1,
    on_generation: Optional[Callable[[GenerationRecord, np.ndarray], None]] = None,
) -> TrainResult:
    """Optimize policy parameters on one task.

    ``budget`` counts environment steps of the perturbed rollouts. At least one
    generation always runs; after that a generation starts only if it fits in
    what is left of the budget.
    """
    env = make_env(env_spec)
    if (env.obs_dim, env.act_dim) != (policy_spec.obs_dim, policy_spec.act_dim):
        raise ValueError(
            f"{policy_spec.label()} has obs/act dims ({policy_spec.obs_dim}, {policy_spec.act_dim}); "
            f"{env_spec.name} needs ({env.obs_dim}, {env.act_dim})"
        )
    dim = param_count(policy_spec)
    theta = init_params(policy_spec, config.seed) if init is None else np.array(init, dtype=np.float64)
    if theta.shape != (dim,):
        raise ValueError(f"initial parameters must have length {dim}")

    stats = _ObsStats(env.obs_dim) if config.obs_norm else None
    obs_filter = None
    eval_policy = Policy(policy_spec)
    records: list[GenerationRecord] = []
    steps_total = 0
    last_gen_steps = 0
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for g in range(config.generations):
            if g > 0 and steps_total + last_gen_steps > budget:
                break
            noise = sample_perturbations(config.seed, g, config.n_pairs, dim)
            tasks = [
                (policy_spec, env_spec, theta + config.sigma * noise[j],
                 env_seed(config.seed, g, j % config.n_pairs), obs_filter, stats is not None)
                for j in range(config.population)
            ]
            if pool is None:
                results = [evaluate(t) for t in tasks]
            else:
                results = list(pool.map(evaluate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
            rewards = np.array([r[0] for r in results])
            last_gen_steps = sum(r[1] for r in results)
            steps_total += last_gen_steps
            if stats is not None:
                for _, n, s, sq in results:
                    stats.add(s, sq, n)

            theta = es_update(theta, noise, shape_fitness(rewards), config)

            eval_policy.set_flat(theta)
            eval_reward = rollout(eval_policy, env, seed=env_spec.seed, obs_filter=obs_filter).reward
            rec = GenerationRecord(g, steps_total, float(rewards.mean()), float(rewards.max()), eval_reward)
            records.append(rec)
            logger.debug("gen %d steps %d mean %.4f max %.4f eval %.4f", *rec.__dict__.values())
            if on_generation is not None:
                on_generation(rec, theta)
            if stats is not None:
                obs_filter = stats.filter()
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(records, theta, policy_spec, config.seed, obs_filter)


def write_training_log(path, records: Sequence[GenerationRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for r in records:
            w.writerow([r.generation, r.env_steps, format_float(r.reward_mean),
                        format_float(r.reward_max), format_float(r.eval_reward)])


def read_training_log(path) -> list[GenerationRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        GenerationRecord(int(r["generation"]), int(r["env_steps"]), float(r["reward_mean"]),
                         float(r["reward_max"]), float(r["eval_reward"]))
        for r in rows
    ]
