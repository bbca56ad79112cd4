"""Deterministic continuous-control tasks behind a reset/step interface."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

ENV_NAMES = {
    "silent-oscillator": "SilentOscillator",
    "point-mass-sprint": "PointMassSprint",
    "pendulum-swing-up": "PendulumSwingUp",
    "quadratic": "QuadraticPseudoEnv",
}


def canonical_env_name(name: str) -> str:
    """Accept either the CamelCase or the kebab-case task name."""
    if name in ENV_NAMES.values():
        return name
    key = name.strip().lower().replace("_", "-")
    if key in ENV_NAMES:
        return ENV_NAMES[key]
    for camel in ENV_NAMES.values():
        if camel.lower() == key.replace("-", ""):
            return camel
    raise ValueError(f"unknown environment: {name!r} (choose from {', '.join(ENV_NAMES)})")


def cli_env_name(name: str) -> str:
    camel = canonical_env_name(name)
    return next(k for k, v in ENV_NAMES.items() if v == camel)


@dataclass(frozen=True)
class EnvSpec:
    """Task selection.

    ``dim`` sizes the action of ``QuadraticPseudoEnv`` and is ignored elsewhere.
    ``jitter`` > 0 perturbs the initial state with seeded uniform noise.
    """

    name: str
    episode_length: int = 200
    dt: float = 0.05
    seed: int = 0
    dim: int = 10
    jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_env_name(self.name))
        if self.episode_length < 1:
            raise ValueError("episode_length must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool


class Env:
    obs_dim: int
    act_dim: int

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.episode_length = spec.episode_length
        self.t = 0
        self.done = True
        self.seed = spec.seed

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.seed = seed
        self.t = 0
        self.done = False
        self._reset_state(np.random.default_rng(self.seed) if self.spec.jitter > 0 else None)
        return self._observe()

    def step(self, action) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.act_dim,):
            raise ValueError(f"{type(self).__name__} expects {self.act_dim} action dims, got {action.shape[0]}")
        reward = float(self._advance(action))
        self.t += 1
        self.done = self.t >= self.episode_length
        return StepResult(self._observe(), reward, self.done)

    def _reset_state(self, rng):
        pass

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, action: np.ndarray) -> float:
        raise NotImplementedError


class SilentOscillator(Env):
    """Track sin(2*pi*t/50) while observing a constant 1.0.

    A stateless policy sees the same input every step, so it emits a constant
    action; only a policy with internal state can follow the target.
    """

    obs_dim = 1
    act_dim = 1
    period = 50
    action_limit = 2.0

    def target(self, t: int) -> float:
        return math.sin(2.0 * math.pi * t / self.period)

    def _observe(self):
        return np.ones(1)

    def _advance(self, action):
        a = min(max(float(action[0]), -self.action_limit), self.action_limit)
        return -abs(a - self.target(self.t))


class PointMassSprint(Env):
    """Velocity-rewarded point mass with linear drag."""

    obs_dim = 1
    act_dim = 1

    def _reset_state(self, rng):
        self.v = 0.0 if rng is None else float(rng.uniform(-self.spec.jitter, self.spec.jitter))

    def _observe(self):
        return np.array([self.v])

    def _advance(self, action):
        a = min(max(float(action[0]), -1.0), 1.0)
        self.v = self.v + self.spec.dt * (a - 0.5 * self.v)
        return self.v - 0.01 * a * a


def wrap_angle(theta: float) -> float:
    """Map to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


class PendulumSwingUp(Env):
    """Damped torque-limited pendulum starting hanging down; theta = 0 is upright."""

    obs_dim = 3
    act_dim = 1
    gravity = 10.0
    length = 1.0
    damping = 0.1
    max_torque = 2.0

    def _reset_state(self, rng):
        self.theta, self.theta_dot = math.pi, 0.0
        if rng is not None:
            self.theta += float(rng.uniform(-self.spec.jitter, self.spec.jitter))
            self.theta_dot += float(rng.uniform(-self.spec.jitter, self.spec.jitter))

    def _observe(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def _advance(self, action):
        a = min(max(float(action[0]), -self.max_torque), self.max_torque)
        dt = self.spec.dt
        accel = (self.gravity / self.length) * math.sin(self.theta) - self.damping * self.theta_dot + a
        # semi-implicit Euler: velocity first, then position with the new velocity
        self.theta_dot = self.theta_dot + dt * accel
        self.theta = self.theta + dt * self.theta_dot
        th = wrap_angle(self.theta)
        return -(th * th + 0.1 * self.theta_dot ** 2 + 0.001 * a * a)


class QuadraticPseudoEnv(Env):
    """One-step task scoring the raw action vector by -||a||^2."""

    obs_dim = 1

    def __init__(self, spec: EnvSpec):
        super().__init__(spec)
        self.act_dim = spec.dim
        self.episode_length = 1

    def _observe(self):
        return np.ones(1)

    def _advance(self, action):
        return -float(action @ action)


_CLASSES = {
    "SilentOscillator": SilentOscillator,
    "PointMassSprint": PointMassSprint,
    "PendulumSwingUp": PendulumSwingUp,
    "QuadraticPseudoEnv": QuadraticPseudoEnv,
}


def make_env(spec: EnvSpec | str) -> Env:
    if isinstance(spec, str):
        spec = EnvSpec(spec)
    return _CLASSES[spec.name](spec)


def env_dims(spec: EnvSpec) -> tuple[int, int]:
    env = make_env(spec)
    return env.obs_dim, env.act_dim


def constant_action_bound(env: Env | EnvSpec | str, grid_step: float = 1e-3) -> float:
    """Best episodic reward any constant action achieves on SilentOscillator.

    Brute force over c in [-limit, limit] on a grid of ``grid_step``.
    """
    if not isinstance(env, Env):
        env = make_env(env)
    if not isinstance(env, SilentOscillator):
        raise ValueError(f"constant_action_bound is only defined for SilentOscillator, not {type(env).__name__}")
    lim = env.action_limit
    n = int(round(2 * lim / grid_step))
    grid = -lim + grid_step * np.arange(n + 1)
    targets = np.array([env.target(t) for t in range(env.episode_length)])
    totals = -np.abs(grid[:, None] - targets[None, :]).sum(axis=1)
    return float(totals.max())
