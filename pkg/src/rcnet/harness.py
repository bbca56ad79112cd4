"""Experiment orchestration: repeated trials, median-of-trials curves, comparisons.

A trial is one ES training run; its score is the unperturbed evaluation reward
of the last generation. Out of ``n_total`` trials the ``n_median`` middle ones
by score are kept and their per-generation evaluation curves averaged.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .envs import EnvSpec, constant_action_bound
from .es import DEFAULT_BUDGET, EsConfig, TrainResult, train, write_training_log
from .policies import STATELESS_KINDS, PolicySpec, format_float, save_checkpoint
from .rollout import RolloutResult, rollout  # noqa: F401  (re-exported)

logger = logging.getLogger(__name__)


class TrialError(RuntimeError):
    def __init__(self, trial: int, seed: int, cause: BaseException):
        super().__init__(f"trial {trial} (seed {seed}) failed: {cause}")
        self.trial = trial
        self.seed = seed


@dataclass
class TrialAggregate:
    curve: np.ndarray
    env_steps: np.ndarray
    selected_trials: list[int]
    finals: list[float]
    n_total: int
    n_median: int

    @property
    def final(self) -> float:
        return float(self.curve[-1])

    @property
    def generations(self) -> np.ndarray:
        return np.arange(len(self.curve))


@dataclass
class ExperimentConfig:
    env_spec: EnvSpec
    policy_spec: PolicySpec
    es_config: EsConfig = field(default_factory=EsConfig)
    n_total: int = 10
    n_median: int = 5
    budget: int = DEFAULT_BUDGET
    output_path: Optional[Path] = None
    workers: int = 1

    def __post_init__(self):
        if self.n_total < 1:
            raise ValueError("n_total must be >= 1")
        if not 1 <= self.n_median <= self.n_total:
            raise ValueError("n_median must be between 1 and n_total")


def select_median_trials(finals: Sequence[float], n_median: int) -> list[int]:
    """Indices of the ``n_median`` middle trials by final score.

    The kept window starts at rank floor((n - n_median) / 2) of the ascending
    scores, e.g. ranks 3..7 (1-based) for 5 of 10. When a tied score straddles
    the window edge, the lower-indexed (lower-seed) trials are the ones kept.
    """
    finals = [float(f) for f in finals]
    n = len(finals)
    if not 1 <= n_median <= n:
        raise ValueError(f"cannot select {n_median} of {n} trials")
    start = (n - n_median) // 2
    window = sorted(finals)[start:start + n_median]
    selected = []
    for value in sorted(set(window)):
        need = window.count(value)
        selected += [i for i, f in enumerate(finals) if f == value][:need]
    return sorted(selected)


def aggregate_trials(curves: Sequence[Sequence[float]], n_median: int, env_steps=None) -> TrialAggregate:
    """Average the per-generation curves of the median trials pointwise."""
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise ValueError(f"trial curves differ in length: {sorted(lengths)}")
    stacked = np.array(curves, dtype=np.float64)
    finals = [float(c[-1]) for c in stacked]
    chosen = select_median_trials(finals, n_median)
    curve = stacked[chosen].mean(axis=0)
    steps = np.arange(stacked.shape[1]) if env_steps is None else np.asarray(env_steps)
    return TrialAggregate(curve, steps, chosen, finals, len(stacked), n_median)


def _trial_outputs(out: Path, k: int, result: TrainResult):
    write_training_log(out / f"trial_{k}.csv", result.records)
    save_checkpoint(out / f"trial_{k}.ckpt", result.policy_spec, result.params, seed=result.seed)


def write_aggregate(path, agg: TrialAggregate):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "env_steps", "avg_eval_reward"])
        for g, s, v in zip(agg.generations, agg.env_steps, agg.curve):
            w.writerow([int(g), int(s), format_float(v)])


def run_trials(config: ExperimentConfig, trainer: Callable[..., TrainResult] = train) -> TrialAggregate:
    """Train ``n_total`` seeds (base seed + 0, 1, ...) and aggregate the median ones."""
    out = Path(config.output_path) if config.output_path is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    curves, env_steps = [], None
    base = config.es_config.seed
    for k in range(config.n_total):
        seed = base + k
        try:
            result = trainer(replace(config.es_config, seed=seed), config.policy_spec, config.env_spec,
                             config.budget, workers=config.workers)
        except Exception as exc:
            raise TrialError(k, seed, exc) from exc
        curves.append([r.eval_reward for r in result.records])
        if env_steps is None:
            env_steps = [r.env_steps for r in result.records]
        logger.info("%s trial %d seed %d final %.4f", config.policy_spec.label(), k, seed, curves[-1][-1])
        if out is not None:
            _trial_outputs(out, k, result)
    agg = aggregate_trials(curves, config.n_median, env_steps)
    if out is not None:
        write_aggregate(out / "aggregate.csv", agg)
        with open(out / "trials.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "seed", "final_eval_reward", "selected"])
            for k, f in enumerate(agg.finals):
                w.writerow([k, base + k, format_float(f), int(k in agg.selected_trials)])
    return agg


def compare_architectures(
    env_spec: EnvSpec,
    policy_specs: Sequence[PolicySpec],
    es_config: EsConfig = EsConfig(),
    *,
    n_total: int = 10,
    n_median: int = 5,
    budget: int = DEFAULT_BUDGET,
    output_path=None,
    workers: int = 1,
) -> list[tuple[str, TrialAggregate]]:
    """Run the trial protocol for each architecture under identical seeds.

    Writes ``comparison.csv`` (policy,final_avg_reward) plus one subdirectory of
    trial outputs per architecture when ``output_path`` is given.
    """
    out = Path(output_path) if output_path is not None else None
    rows = []
    used = {}
    for spec in policy_specs:
        label = spec.label()
        used[label] = used.get(label, 0) + 1
        subdir = label if used[label] == 1 else f"{label}_{used[label]}"
        cfg = ExperimentConfig(env_spec, spec, es_config, n_total, n_median, budget,
                               None if out is None else out / subdir, workers)
        rows.append((label, run_trials(cfg)))
    if out is not None:
        write_comparison(out / "comparison.csv", rows)
    return rows


def write_comparison(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "final_avg_reward"])
        for label, agg in rows:
            w.writerow([label, format_float(agg.final)])


def bias_ablation(
    env_spec: EnvSpec,
    policy_spec: PolicySpec,
    es_config: EsConfig = EsConfig(),
    *,
    n_total: int = 10,
    n_median: int = 5,
    budget: int = DEFAULT_BUDGET,
    output_path=None,
    workers: int = 1,
) -> tuple[TrialAggregate, TrialAggregate]:
    """Same protocol with biases on and off; returns (bias_on, bias_off)."""
    out = Path(output_path) if output_path is not None else None
    aggs = []
    for flag, name in ((True, "bias_on"), (False, "bias_off")):
        cfg = ExperimentConfig(env_spec, replace(policy_spec, biases_enabled=flag), es_config,
                               n_total, n_median, budget, None if out is None else out / name, workers)
        aggs.append(run_trials(cfg))
    on, off = aggs
    if out is not None:
        if len(on.curve) != len(off.curve):
            raise ValueError("bias variants ran a different number of generations")
        with open(out / "ablation.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "env_steps", "bias_on", "bias_off"])
            for g, s, a, b in zip(on.generations, on.env_steps, on.curve, off.curve):
                w.writerow([int(g), int(s), format_float(a), format_float(b)])
    return on, off


def stateless_rows_within_bound(rows, specs: Sequence[PolicySpec], env_spec: EnvSpec) -> bool:
    """True if no stateless architecture in a SilentOscillator table beats the constant-action bound."""
    bound = constant_action_bound(env_spec)
    return all(agg.final <= bound for (_, agg), spec in zip(rows, specs) if spec.kind in STATELESS_KINDS)


def ordering_report(rows) -> str:
    """Plain-text ranking of a comparison table, best first."""
    ranked = sorted(rows, key=lambda r: -r[1].final)
    return " > ".join(f"{label} ({agg.final:.2f})" for label, agg in ranked)
