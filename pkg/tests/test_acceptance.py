"""Exit criteria for the package, one test per criterion at its fixed tolerance.

Run with ``pytest tests/test_acceptance.py``; a PASS/FAIL line per criterion is
printed in the terminal summary.
"""

import filecmp
import math
import time

import numpy as np
import pytest

import oracle
from rcnet.cli import main
from rcnet.envs import EnvSpec, constant_action_bound, make_env
from rcnet.es import EsConfig, es_update, sample_perturbations, shape_fitness, train
from rcnet.harness import aggregate_trials, compare_architectures, ordering_report, stateless_rows_within_bound
from rcnet.policies import (
    Policy,
    PolicyKind,
    PolicySpec,
    RecurrentState,
    bias_count,
    forward_linear,
    forward_mlp,
    forward_rcn,
    forward_rnn,
    forward_scn,
    param_count,
    preset,
)
from rcnet.rollout import rollout

# pure-Python grid search over constant actions, step 1e-3 on [-2, 2]
SILENT_BOUND = -127.15635875092244


def test_c1_oracle_equivalence(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    start = time.perf_counter()
    for kind in PolicyKind:
        for _ in range(100):
            spec = PolicySpec(kind, obs_dim=int(rng.integers(1, 4)), act_dim=int(rng.integers(1, 4)),
                              hidden_size=int(rng.integers(1, 5)), num_hidden_layers=int(rng.integers(1, 3)),
                              biases_enabled=bool(rng.integers(0, 2)))
            flat = rng.standard_normal(param_count(spec))
            obs_seq = rng.uniform(-2.0, 2.0, size=(3, spec.obs_dim))
            pol = Policy(spec, flat)
            got = np.array([pol.act(o) for o in obs_seq])
            want = np.array(oracle.run_sequence(kind.value, flat, spec.obs_dim, spec.act_dim, spec.hidden_size,
                                                spec.num_hidden_layers, spec.biases_enabled, obs_seq))
            worst = max(worst, float(np.max(np.abs(got - want))))
    elapsed = time.perf_counter() - start
    criterion("C1", "forward passes match scalar-loop oracle within 1e-10 in < 5 s",
              worst <= 1e-10 and elapsed < 5.0, f"max abs err {worst:.2e}, {elapsed:.2f} s, 700 specs")


def _submodule(weights, prefix):
    return {k[len(prefix):]: v for k, v in weights.items() if k.startswith(prefix)}


def test_c2_additive_decomposition(criterion):
    rng = np.random.default_rng(7)
    mismatches = 0
    for kind in ("rcn", "scn"):
        spec = PolicySpec(kind, obs_dim=3, act_dim=2, hidden_size=8, biases_enabled=True)
        for _ in range(1000):
            w = Policy(spec, rng.standard_normal(param_count(spec))).weights
            obs = rng.uniform(-3, 3, 3)
            lin = forward_linear(_submodule(w, "linear."), obs)
            if kind == "scn":
                total = forward_scn(w, obs)
                nonlinear = forward_mlp(_submodule(w, "mlp."), obs)
            else:
                state = RecurrentState(rng.uniform(-1, 1, 8))
                total, _ = forward_rcn(w, state, obs)
                nonlinear, _ = forward_rnn(_submodule(w, "rnn."), state, obs)
            mismatches += not np.array_equal(total, lin + nonlinear)
    criterion("C2", "RCN/SCN action == linear + nonlinear submodule, exactly (1000 inputs each)",
              mismatches == 0, f"{mismatches} mismatches")


def test_c3_parameter_counts(criterion):
    counts = {name: param_count(preset(name, 3, 1)) for name in ("rnn32", "rcn32", "mlp64")}
    toggles_ok = all(
        param_count(preset(name, 3, 1, biases=True)) - param_count(preset(name, 3, 1)) == bias_count(preset(name, 3, 1))
        for name in ("rnn32", "rcn32", "mlp64", "scn16", "gru32", "lstm32", "linear")
    )
    rnn_bias = param_count(preset("rnn32", 3, 1, biases=True)) - counts["rnn32"]
    ok = counts == {"rnn32": 1152, "rcn32": 1155, "mlp64": 4352} and toggles_ok and rnn_bias == 33
    criterion("C3", "RNN-32=1152, RCN-32=1155, MLP-64=4352; bias toggle = bias dims", ok,
              f"{counts}, rnn32 bias dims {rnn_bias}")


def test_c4_es_sanity_quadratic(criterion):
    theta0 = np.ones(10) / math.sqrt(10)
    start = time.perf_counter()
    res = train(EsConfig(n_pairs=32, sigma=0.05, lr=0.03, generations=300, seed=0),
                PolicySpec("linear", 1, 10), EnvSpec("quadratic", dim=10), init=theta0)
    elapsed = time.perf_counter() - start
    norm = float(np.linalg.norm(res.params))
    criterion("C4", "quadratic 10-D: ||theta|| < 0.05 within 300 generations in < 10 s",
              len(res.records) <= 300 and norm < 0.05 and elapsed < 10.0,
              f"||theta||={norm:.4f} after {len(res.records)} generations, {elapsed:.2f} s")


def test_c5_rank_shaping_invariance(criterion):
    rng = np.random.default_rng(5)
    failures = 0
    # nonlinear maps act on rewards rescaled to [-1, 1] so they stay strictly increasing in floats
    transforms = [
        lambda r, s: 3.0 * r + 7.0,
        lambda r, s: np.exp(r / s),
        lambda r, s: np.cbrt(r),
        lambda r, s: np.arctan(r / s),
        lambda r, s: (r / s) ** 3 + r / s,
    ]
    for case in range(1000):
        n = int(rng.integers(2, 65))
        rewards = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 3)
        if case % 4 == 0:
            rewards = np.round(rewards, 0)  # force ties
        scale = max(float(np.max(np.abs(rewards))), 1e-12)
        mapped = transforms[case % len(transforms)](rewards, scale)
        order = np.argsort(rewards, kind="stable")
        strict = np.diff(rewards[order]) > 0
        assert np.all(np.diff(mapped[order])[strict] > 0), "transform not strictly increasing on sample"
        failures += not np.array_equal(shape_fitness(rewards), shape_fitness(mapped))
    cfg = EsConfig(n_pairs=8)
    theta = rng.standard_normal(6)
    update = es_update(theta, sample_perturbations(1, 0, 8, 6), shape_fitness(np.full(16, -3.5)), cfg)
    criterion("C5", "utilities invariant under strictly increasing transforms; equal rewards give no update",
              failures == 0 and np.array_equal(update, theta), f"{failures}/1000 failures")


def test_c6_protocol_determinism(tmp_path, criterion):
    cmd = ["protocol", "--env", "silent-oscillator", "--policy", "rcn", "--trials", "4", "--median", "2",
           "--seed", "7"]
    dirs = [tmp_path / "serial_a", tmp_path / "serial_b", tmp_path / "parallel"]
    main(cmd + ["--out", str(dirs[0])])
    main(cmd + ["--out", str(dirs[1])])
    main(cmd + ["--out", str(dirs[2]), "--workers", "2"])
    names = sorted(p.name for p in dirs[0].iterdir())
    same = all(filecmp.cmp(dirs[0] / n, d / n, shallow=False) for d in dirs[1:] for n in names)
    same = same and all(sorted(p.name for p in d.iterdir()) == names for d in dirs[1:])
    criterion("C6", "protocol CSVs byte-identical across runs and serial vs concurrent rollouts",
              same and "aggregate.csv" in names, f"{len(names)} files compared")


def test_c7a_stateless_capped_by_constant_bound(criterion):
    env = make_env("silent-oscillator")
    bound = constant_action_bound(env)
    rng = np.random.default_rng(11)
    worst_gap = -np.inf
    constant = True
    for name in ("linear", "mlp64", "scn16"):
        spec = preset(name, 1, 1)
        for _ in range(100):
            pol = Policy(spec, rng.standard_normal(param_count(spec)) * 10.0 ** rng.uniform(-3, 1))
            res = rollout(pol, env, record_actions=True)
            constant &= bool(np.all(res.actions == res.actions[0]))
            worst_gap = max(worst_gap, res.reward - bound)
    ok = abs(bound - SILENT_BOUND) < 1e-9 and constant and worst_gap <= 1e-9
    criterion("C7a", "stateless policies (linear, MLP-64, SCN-16) never beat the constant-action bound",
              ok, f"bound {bound:.4f}, max(reward - bound) over 300 random policies {worst_gap:.4f}")


@pytest.mark.slow
def test_c7b_trained_rcn_beats_bound(criterion):
    start = time.perf_counter()
    res = train(EsConfig(seed=0), preset("rcn32", 1, 1), EnvSpec("silent-oscillator"), budget=200_000)
    elapsed = time.perf_counter() - start
    margin = res.final_eval - SILENT_BOUND
    criterion("C7b", "trained RCN-32 (defaults, 2e5 steps) exceeds the bound by >= 20 in < 5 min",
              margin >= 20.0 and elapsed < 300.0,
              f"final eval {res.final_eval:.4f}, margin {margin:+.4f}, "
              f"{len(res.records)} generations, {elapsed:.1f} s")


def test_c8_protocol_correctness(criterion):
    finals = [float(v) for v in range(1, 11)]
    agg = aggregate_trials([[0.0, f] for f in finals], 5)
    picked = sorted(finals[i] for i in agg.selected_trials)
    criterion("C8", "median 5 of 10 picks finals {3..7}, averaged final = 5.0",
              picked == [3.0, 4.0, 5.0, 6.0, 7.0] and agg.final == 5.0, f"picked {picked}, final {agg.final}")


def test_c9_trend_report(tmp_path, criterion):
    env = EnvSpec("silent-oscillator")
    specs = [preset(n, 1, 1) for n in ("mlp64", "scn16", "rnn32", "rcn32")]
    rows = compare_architectures(env, specs, EsConfig(), n_total=10, n_median=5, budget=12_800,
                                 output_path=tmp_path)
    table = (tmp_path / "comparison.csv").read_text().splitlines()
    finals = {label: agg.final for label, agg in rows}
    hoped_order = finals["rcn32"] >= finals["rnn32"] >= max(finals["mlp64"], finals["scn16"])
    ok = len(table) == 5 and stateless_rows_within_bound(rows, specs, env)
    criterion("C9", "compare runs the 4-policy roster under 10/5 and emits a 4-row table (ordering reported only)",
              ok, f"{ordering_report(rows)}; rcn >= rnn >= stateless ordering {'holds' if hoped_order else 'does not hold'}")
