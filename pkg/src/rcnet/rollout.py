from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envs import Env
from .policies import Policy


@dataclass
class RolloutResult:
    reward: float
    steps: int
    actions: Optional[np.ndarray] = None
    obs_sum: Optional[np.ndarray] = field(default=None, repr=False)
    obs_sqsum: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class ObsNormalizer:
    """Fixed affine observation filter: (obs - mean) / std."""

    mean: np.ndarray
    std: np.ndarray

    def __call__(self, obs):
        return (obs - self.mean) / self.std


def rollout(
    policy: Policy,
    env: Env,
    max_steps: Optional[int] = None,
    *,
    seed: Optional[int] = None,
    reset_policy: bool = True,
    record_actions: bool = False,
    obs_filter: Optional[ObsNormalizer] = None,
    collect_obs_stats: bool = False,
) -> RolloutResult:
    """Run one episode and sum the per-step rewards.

    Resets the environment and, unless ``reset_policy`` is False, zeroes the
    policy's recurrent state first.
    """
    if policy.spec.obs_dim != env.obs_dim or policy.spec.act_dim != env.act_dim:
        raise ValueError(
            f"policy dims (obs={policy.spec.obs_dim}, act={policy.spec.act_dim}) do not match "
            f"{type(env).__name__} (obs={env.obs_dim}, act={env.act_dim})"
        )
    obs = env.reset(seed)
    if reset_policy:
        policy.reset_state()
    limit = env.episode_length if max_steps is None else min(max_steps, env.episode_length)
    total, steps = 0.0, 0
    actions = [] if record_actions else None
    obs_sum = obs_sqsum = None
    if collect_obs_stats:
        obs_sum, obs_sqsum = np.zeros(env.obs_dim), np.zeros(env.obs_dim)
    done = False
    while not done and steps < limit:
        if collect_obs_stats:
            obs_sum += obs
            obs_sqsum += obs * obs
        action = policy.act(obs if obs_filter is None else obs_filter(obs))
        if record_actions:
            actions.append(action)
        obs, reward, done = env.step(action)
        total += reward
        steps += 1
    return RolloutResult(
        total,
        steps,
        np.array(actions) if record_actions else None,
        obs_sum,
        obs_sqsum,
    )
