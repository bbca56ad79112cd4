"""Recurrent and structured control policies trained with Evolution Strategies."""

from .envs import EnvSpec, constant_action_bound, make_env
from .es import EsConfig, GenerationRecord, sample_perturbations, shape_fitness, es_update, train
from .harness import ExperimentConfig, TrialAggregate, bias_ablation, compare_architectures, run_trials
from .policies import Policy, PolicyKind, PolicySpec, build_policy, param_count, preset
from .rollout import RolloutResult, rollout

__all__ = [
    "EnvSpec", "constant_action_bound", "make_env",
    "EsConfig", "GenerationRecord", "sample_perturbations", "shape_fitness", "es_update", "train",
    "ExperimentConfig", "TrialAggregate", "bias_ablation", "compare_architectures", "run_trials",
    "Policy", "PolicyKind", "PolicySpec", "build_policy", "param_count", "preset",
    "RolloutResult", "rollout",
]
