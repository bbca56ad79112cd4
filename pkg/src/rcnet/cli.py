"""Command-line entry point.

    rcnet train    --env silent-oscillator --policy rcn --hidden 32 --out runs/train
    rcnet eval     --checkpoint runs/train/policy.ckpt --env silent-oscillator
    rcnet protocol --env silent-oscillator --policy rcn --trials 10 --median 5 --out runs/protocol
    rcnet compare  --env silent-oscillator --policies mlp64,scn16,rnn32,rcn32 --out runs/compare
    rcnet ablate-bias --env silent-oscillator --policy rcn --out runs/ablate

Every subcommand accepts ``--config FILE`` with ``key=value`` lines (``#`` starts a
comment). Keys are option names with dashes or underscores; flags given on the
command line override the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .envs import EnvSpec, cli_env_name, env_dims, make_env
from .es import DEFAULT_BUDGET, EsConfig, train, write_training_log
from .policies import DEFAULT_HIDDEN, Policy, PolicyKind, PolicySpec, load_checkpoint, preset, save_checkpoint
from .rollout import rollout


def _on_off(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("on", "1", "true", "yes"):
        return True
    if v in ("off", "0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


# name -> (type, default, help)
_COMMON = {
    "env": (str, "silent-oscillator", "task name"),
    "episode_length": (int, 200, "steps per episode"),
    "jitter": (float, 0.0, "seeded initial-state jitter (0 = off)"),
    "pairs": (int, 32, "antithetic pairs per generation"),
    "sigma": (float, 0.05, "perturbation std"),
    "lr": (float, 0.03, "ES step size"),
    "generations": (int, 10_000, "generation cap"),
    "budget": (int, DEFAULT_BUDGET, "environment-step budget per training run"),
    "seed": (int, 0, "base seed"),
    "obs_norm": (_on_off, False, "observation normalization on|off"),
    "workers": (int, 1, "rollout worker processes"),
    "out": (str, "out", "output directory"),
}
_POLICY = {
    "policy": (str, "rcn", "policy kind (linear, mlp, rnn, gru, lstm, scn, rcn)"),
    "hidden": (int, None, "hidden size (default per kind)"),
    "layers": (int, 2, "hidden layers for mlp/scn"),
    "biases": (_on_off, False, "bias vectors on|off"),
}
_PROTOCOL = {
    "trials": (int, 10, "total trials"),
    "median": (int, 5, "median trials kept"),
}
_COMMANDS = {
    "train": {**_COMMON, **_POLICY},
    "eval": {
        "checkpoint": (str, None, "checkpoint file"),
        "env": _COMMON["env"],
        "episode_length": _COMMON["episode_length"],
        "jitter": _COMMON["jitter"],
        "episodes": (int, 1, "evaluation episodes"),
        "seed": _COMMON["seed"],
    },
    "protocol": {**_COMMON, **_POLICY, **_PROTOCOL},
    "compare": {**_COMMON, **_PROTOCOL, "policies": (str, "mlp64,scn16,rnn32,rcn32", "comma-separated presets"),
                "biases": _POLICY["biases"]},
    "ablate-bias": {**_COMMON, **_POLICY, **_PROTOCOL},
}


def read_config(path) -> dict[str, str]:
    values = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcnet", description="Evolution Strategies for recurrent control policies.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        for opt, (typ, default, help_) in options.items():
            if typ is _on_off:
                default = "on" if default else "off"
            shown = "" if default is None else f" (default: {default})"
            p.add_argument("--" + opt.replace("_", "-"), dest=opt, type=typ, default=None, help=help_ + shown)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """defaults < config file < command line."""
    options = _COMMANDS[args.command]
    merged = {k: default for k, (_, default, _) in options.items()}
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in options:
                raise SystemExit(f"unknown config key for {args.command}: {key}")
            merged[key] = options[key][0](raw)
    for key in options:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    return merged


def _env_spec(o) -> EnvSpec:
    return EnvSpec(o["env"], episode_length=o["episode_length"], seed=o["seed"], jitter=o["jitter"])


def _es_config(o) -> EsConfig:
    return EsConfig(n_pairs=o["pairs"], sigma=o["sigma"], lr=o["lr"], generations=o["generations"],
                    seed=o["seed"], obs_norm=o["obs_norm"])


def _policy_spec(o, env_spec: EnvSpec) -> PolicySpec:
    obs_dim, act_dim = env_dims(env_spec)
    kind = PolicyKind.parse(o["policy"].rstrip("0123456789"))
    hidden = o["hidden"]
    if hidden is None:
        digits = o["policy"][len(kind.value):]
        hidden = int(digits) if digits else DEFAULT_HIDDEN[kind]
    return PolicySpec(kind, obs_dim, act_dim, hidden_size=hidden, num_hidden_layers=o["layers"],
                      biases_enabled=o["biases"])


def cmd_train(o):
    env_spec = _env_spec(o)
    spec = _policy_spec(o, env_spec)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = train(_es_config(o), spec, env_spec, o["budget"], workers=o["workers"])
    write_training_log(out / "train_log.csv", result.records)
    save_checkpoint(out / "policy.ckpt", spec, result.params, seed=o["seed"])
    last = result.records[-1]
    print(f"{spec.label()} on {cli_env_name(env_spec.name)}: {len(result.records)} generations, "
          f"{last.env_steps} steps, final eval reward {last.eval_reward:.4f}")


def cmd_eval(o):
    if not o["checkpoint"]:
        raise SystemExit("eval needs --checkpoint")
    spec, params, _ = load_checkpoint(o["checkpoint"])
    env = make_env(_env_spec(o))
    policy = Policy(spec, params)
    rewards = [rollout(policy, env, seed=o["seed"] + k).reward for k in range(o["episodes"])]
    for k, r in enumerate(rewards):
        print(f"episode {k}: {r:.6f}")
    print(f"mean reward: {np.mean(rewards):.6f}")


def _protocol_kwargs(o):
    return dict(n_total=o["trials"], n_median=o["median"], budget=o["budget"], workers=o["workers"])


def cmd_protocol(o):
    env_spec = _env_spec(o)
    cfg = harness.ExperimentConfig(env_spec, _policy_spec(o, env_spec), _es_config(o),
                                   output_path=Path(o["out"]), **_protocol_kwargs(o))
    agg = harness.run_trials(cfg)
    print(f"selected trials {agg.selected_trials}; averaged final eval reward {agg.final:.4f}")


def cmd_compare(o):
    env_spec = _env_spec(o)
    obs_dim, act_dim = env_dims(env_spec)
    specs = [preset(name, obs_dim, act_dim, o["biases"]) for name in o["policies"].split(",") if name.strip()]
    rows = harness.compare_architectures(env_spec, specs, _es_config(o), output_path=Path(o["out"]),
                                         **_protocol_kwargs(o))
    for label, agg in rows:
        print(f"{label:>12s}  {agg.final:.4f}")
    print("ordering:", harness.ordering_report(rows))


def cmd_ablate(o):
    env_spec = _env_spec(o)
    on, off = harness.bias_ablation(env_spec, _policy_spec(o, env_spec), _es_config(o),
                                    output_path=Path(o["out"]), **_protocol_kwargs(o))
    print(f"bias_on final {on.final:.4f}; bias_off final {off.final:.4f}")


_HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "protocol": cmd_protocol,
    "compare": cmd_compare,
    "ablate-bias": cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _HANDLERS[args.command](resolve_options(args))
    return 0


if __name__ == "__main__":
    sys.exit(main())
