"""Policy architectures evaluated from a flat parameter vector.

Every architecture is a pure function of (weights, recurrent state, observation).
Weights live in one contiguous float64 array so Evolution Strategies can perturb
them as a single vector; named blocks are views into that array.

Layout per architecture (weights first, then biases when enabled):

    linear  K                                   | b_k
    mlp     W_0, W_1, ..., W_out                | b_0, b_1, ..., b_out
    rnn     W_x, W_h, W_out                     | b_h, b_out
    gru     W_ux, W_uh, W_rx, W_rh, W_hx, W_hh, W_out
                                                | b_u, b_r, b_h, b_out
    lstm    W_fx, W_fh, W_ix, W_ih, W_ox, W_oh, W_cx, W_ch, W_out
                                                | b_f, b_i, b_o, b_c, b_out
    scn     linear.K, mlp.W_0, ..., mlp.W_out   | linear.b_k, mlp.b_0, ...
    rcn     linear.K, rnn.W_x, rnn.W_h, rnn.W_out
                                                | linear.b_k, rnn.b_h, rnn.b_out

Matrices are stored row-major with shape (fan_out, fan_in).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

Weights = Mapping[str, np.ndarray]


class PolicyKind(enum.Enum):
    LINEAR = "linear"
    MLP = "mlp"
    RNN = "rnn"
    GRU = "gru"
    LSTM = "lstm"
    SCN = "scn"
    RCN = "rcn"

    @classmethod
    def parse(cls, name: "str | PolicyKind") -> "PolicyKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown policy kind: {name!r}") from None


RECURRENT_KINDS = frozenset({PolicyKind.RNN, PolicyKind.GRU, PolicyKind.LSTM, PolicyKind.RCN})
STATELESS_KINDS = frozenset({PolicyKind.LINEAR, PolicyKind.MLP, PolicyKind.SCN})

DEFAULT_HIDDEN = {
    PolicyKind.LINEAR: 1,
    PolicyKind.MLP: 64,
    PolicyKind.SCN: 16,
    PolicyKind.RNN: 32,
    PolicyKind.GRU: 32,
    PolicyKind.LSTM: 32,
    PolicyKind.RCN: 32,
}


@dataclass(frozen=True)
class PolicySpec:
    """Architecture descriptor.

    ``hidden_size`` and ``num_hidden_layers`` describe the nonlinear module:
    for ``scn`` they size the inner MLP, for ``rcn`` the inner RNN.
    ``num_hidden_layers`` only matters for ``mlp`` and ``scn``.
    """

    kind: PolicyKind
    obs_dim: int
    act_dim: int
    hidden_size: int = 32
    num_hidden_layers: int = 2
    biases_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind))
        for name in ("obs_dim", "act_dim", "hidden_size", "num_hidden_layers"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def recurrent(self) -> bool:
        return self.kind in RECURRENT_KINDS

    def inner(self) -> Optional["PolicySpec"]:
        """The nonlinear submodule of a structured net, or None."""
        if self.kind is PolicyKind.SCN:
            return replace(self, kind=PolicyKind.MLP)
        if self.kind is PolicyKind.RCN:
            return replace(self, kind=PolicyKind.RNN)
        return None

    def label(self) -> str:
        if self.kind is PolicyKind.LINEAR:
            name = "linear"
        else:
            name = f"{self.kind.value}{self.hidden_size}"
        return name + ("-bias" if self.biases_enabled else "")


def preset(name: str, obs_dim: int, act_dim: int, biases: bool = False) -> PolicySpec:
    """Resolve names such as ``rcn32``, ``mlp64``, ``scn16`` or a bare kind."""
    name = name.strip().lower()
    digits = name.lstrip("abcdefghijklmnopqrstuvwxyz")
    kind = PolicyKind.parse(name[: len(name) - len(digits)])
    hidden = int(digits) if digits else DEFAULT_HIDDEN[kind]
    return PolicySpec(kind, obs_dim, act_dim, hidden_size=hidden, biases_enabled=biases)


# --------------------------------------------------------------------------
# Layout
# --------------------------------------------------------------------------

def _blocks(spec: PolicySpec, prefix: str = "") -> tuple[list, list]:
    """Return (weight_blocks, bias_blocks) as lists of (name, shape)."""
    kind, n_in, n_out, hid = spec.kind, spec.obs_dim, spec.act_dim, spec.hidden_size
    p = prefix
    if kind is PolicyKind.LINEAR:
        return [(p + "K", (n_out, n_in))], [(p + "b_k", (n_out,))]
    if kind is PolicyKind.MLP:
        weights, biases = [], []
        fan_in = n_in
        for layer in range(spec.num_hidden_layers):
            weights.append((f"{p}W_{layer}", (hid, fan_in)))
            biases.append((f"{p}b_{layer}", (hid,)))
            fan_in = hid
        weights.append((p + "W_out", (n_out, hid)))
        biases.append((p + "b_out", (n_out,)))
        return weights, biases
    if kind is PolicyKind.RNN:
        weights = [(p + "W_x", (hid, n_in)), (p + "W_h", (hid, hid)), (p + "W_out", (n_out, hid))]
        return weights, [(p + "b_h", (hid,)), (p + "b_out", (n_out,))]
    if kind in (PolicyKind.GRU, PolicyKind.LSTM):
        gates = "urh" if kind is PolicyKind.GRU else "fioc"
        weights, biases = [], []
        for g in gates:
            weights += [(f"{p}W_{g}x", (hid, n_in)), (f"{p}W_{g}h", (hid, hid))]
            biases.append((f"{p}b_{g}", (hid,)))
        weights.append((p + "W_out", (n_out, hid)))
        biases.append((p + "b_out", (n_out,)))
        return weights, biases
    # structured nets: linear module followed by the nonlinear module
    lin_w, lin_b = _blocks(replace(spec, kind=PolicyKind.LINEAR), p + "linear.")
    sub = "mlp." if kind is PolicyKind.SCN else "rnn."
    inner_w, inner_b = _blocks(spec.inner(), p + sub)
    return lin_w + inner_w, lin_b + inner_b


def layout(spec: PolicySpec) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) blocks making up the flat parameter vector."""
    weights, biases = _blocks(spec)
    return weights + biases if spec.biases_enabled else weights


def param_count(spec: PolicySpec) -> int:
    return sum(math.prod(shape) for _, shape in layout(spec))


def bias_count(spec: PolicySpec) -> int:
    return sum(math.prod(shape) for _, shape in _blocks(spec)[1])


@dataclass
class ParameterVector:
    values: np.ndarray
    layout: list

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = sum(math.prod(shape) for _, shape in self.layout)
        if self.values.shape != (expected,):
            raise ValueError(f"parameter vector has shape {self.values.shape}, layout needs ({expected},)")

    def blocks(self) -> dict[str, np.ndarray]:
        """Named views into ``values`` (writes go through to the flat array)."""
        out, offset = {}, 0
        for name, shape in self.layout:
            size = math.prod(shape)
            out[name] = self.values[offset:offset + size].reshape(shape)
            offset += size
        return out

    @classmethod
    def from_blocks(cls, spec: PolicySpec, blocks: Mapping[str, np.ndarray]) -> "ParameterVector":
        lay = layout(spec)
        parts = [np.asarray(blocks[name], dtype=np.float64).reshape(shape).ravel() for name, shape in lay]
        return cls(np.concatenate(parts) if parts else np.zeros(0), lay)


# --------------------------------------------------------------------------
# Forward passes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RecurrentState:
    hidden: np.ndarray
    cell: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, hidden_size: int, lstm: bool = False) -> "RecurrentState":
        cell = np.zeros(hidden_size) if lstm else None
        return cls(np.zeros(hidden_size), cell)


def sigmoid(z):
    return expit(z)


def _check_obs(obs, w: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (w.shape[1],):
        raise ValueError(f"observation has shape {obs.shape}, policy expects ({w.shape[1]},)")
    return obs


def _check_state(state: RecurrentState, hidden: int, lstm: bool = False):
    if state.hidden.shape != (hidden,):
        raise ValueError(f"hidden state has shape {state.hidden.shape}, expected ({hidden},)")
    if lstm and (state.cell is None or state.cell.shape != (hidden,)):
        raise ValueError("LSTM state needs a cell vector of the hidden size")


def _affine(w: Weights, weight: str, bias: str, v: np.ndarray) -> np.ndarray:
    out = w[weight] @ v
    b = w.get(bias)
    return out if b is None else out + b


def forward_linear(w: Weights, obs) -> np.ndarray:
    """action = K obs (+ b_k)."""
    obs = _check_obs(obs, w["K"])
    return _affine(w, "K", "b_k", obs)


def forward_mlp(w: Weights, obs) -> np.ndarray:
    obs = _check_obs(obs, w["W_0"])
    x = obs
    layer = 0
    while f"W_{layer}" in w:
        x = np.tanh(_affine(w, f"W_{layer}", f"b_{layer}", x))
        layer += 1
    return _affine(w, "W_out", "b_out", x)


def forward_rnn(w: Weights, state: RecurrentState, obs) -> tuple[np.ndarray, RecurrentState]:
    """Vanilla tanh RNN step.

        h = tanh(W_h h_prev + W_x x + b_h)
        action = W_out h + b_out
    """
    obs = _check_obs(obs, w["W_x"])
    _check_state(state, w["W_h"].shape[0])
    pre = w["W_h"] @ state.hidden + w["W_x"] @ obs
    if "b_h" in w:
        pre = pre + w["b_h"]
    h = np.tanh(pre)
    return _affine(w, "W_out", "b_out", h), RecurrentState(h)


def _gate(w: Weights, g: str, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    pre = w[f"W_{g}x"] @ x + w[f"W_{g}h"] @ h_prev
    b = w.get(f"b_{g}")
    return pre if b is None else pre + b


def forward_gru(w: Weights, state: RecurrentState, obs) -> tuple[np.ndarray, RecurrentState]:
    """GRU step with the update gate weighting the *previous* state.

        u = sigmoid(W_ux x + W_uh h_prev + b_u)
        r = sigmoid(W_rx x + W_rh h_prev + b_r)
        h = u * h_prev + (1 - u) * tanh(W_hx x + W_hh h_prev + b_h)

    The reset gate is computed but, in this formulation, does not enter the
    candidate; it still consumes parameters.
    """
    obs = _check_obs(obs, w["W_ux"])
    h_prev = state.hidden
    _check_state(state, w["W_uh"].shape[0])
    u = sigmoid(_gate(w, "u", obs, h_prev))
    r = sigmoid(_gate(w, "r", obs, h_prev))  # noqa: F841
    candidate = np.tanh(_gate(w, "h", obs, h_prev))
    h = u * h_prev + (1.0 - u) * candidate
    return _affine(w, "W_out", "b_out", h), RecurrentState(h)


def forward_lstm(w: Weights, state: RecurrentState, obs) -> tuple[np.ndarray, RecurrentState]:
    """LSTM step whose hidden output squashes the cell with a sigmoid.

        c = f * c_prev + i * tanh(W_cx x + W_ch h_prev + b_c)
        h = o * sigmoid(c)
        action = W_out h + b_out
    """
    obs = _check_obs(obs, w["W_fx"])
    h_prev = state.hidden
    _check_state(state, w["W_fh"].shape[0], lstm=True)
    f = sigmoid(_gate(w, "f", obs, h_prev))
    i = sigmoid(_gate(w, "i", obs, h_prev))
    o = sigmoid(_gate(w, "o", obs, h_prev))
    c = f * state.cell + i * np.tanh(_gate(w, "c", obs, h_prev))
    h = o * sigmoid(c)
    return _affine(w, "W_out", "b_out", h), RecurrentState(h, c)


def _sub(w: Weights, prefix: str) -> dict[str, np.ndarray]:
    n = len(prefix)
    return {k[n:]: v for k, v in w.items() if k.startswith(prefix)}


def forward_scn(w: Weights, obs) -> np.ndarray:
    """Linear module plus MLP module, summed."""
    return forward_linear(_sub(w, "linear."), obs) + forward_mlp(_sub(w, "mlp."), obs)


def forward_rcn(w: Weights, state: RecurrentState, obs) -> tuple[np.ndarray, RecurrentState]:
    """Linear module plus vanilla RNN module; the state is the RNN's alone."""
    rnn_action, new_state = forward_rnn(_sub(w, "rnn."), state, obs)
    return forward_linear(_sub(w, "linear."), obs) + rnn_action, new_state


_STATELESS = {
    PolicyKind.LINEAR: forward_linear,
    PolicyKind.MLP: forward_mlp,
    PolicyKind.SCN: forward_scn,
}
_RECURRENT = {
    PolicyKind.RNN: forward_rnn,
    PolicyKind.GRU: forward_gru,
    PolicyKind.LSTM: forward_lstm,
    PolicyKind.RCN: forward_rcn,
}


def forward(spec: PolicySpec, w: Weights, state: Optional[RecurrentState], obs):
    """Dispatch on architecture. Returns (action, new_state); state is None if stateless."""
    if spec.kind in _STATELESS:
        return _STATELESS[spec.kind](w, obs), None
    return _RECURRENT[spec.kind](w, state, obs)


def initial_state(spec: PolicySpec) -> Optional[RecurrentState]:
    if not spec.recurrent:
        return None
    return RecurrentState.zeros(spec.hidden_size, lstm=spec.kind is PolicyKind.LSTM)


# --------------------------------------------------------------------------
# Live policy
# --------------------------------------------------------------------------

def init_params(spec: PolicySpec, seed: int) -> np.ndarray:
    """Weights ~ Normal(0, std=1/sqrt(fan_in)), biases zero, drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    weights, _ = _blocks(spec)
    weight_names = {name for name, _ in weights}
    parts = []
    for name, shape in layout(spec):
        if name in weight_names:
            parts.append(rng.normal(0.0, 1.0 / math.sqrt(shape[1]), size=shape).ravel())
        else:
            parts.append(np.zeros(math.prod(shape)))
    return np.concatenate(parts)


class Policy:
    """A policy instance: spec, owned parameter array and mutable recurrent state."""

    def __init__(self, spec: PolicySpec, params=None):
        self.spec = spec
        self.params = ParameterVector(
            np.zeros(param_count(spec)) if params is None else np.array(params, dtype=np.float64),
            layout(spec),
        )
        self._weights = self.params.blocks()
        self._linear = _sub(self._weights, "linear.")
        self._inner = _sub(self._weights, "mlp." if spec.kind is PolicyKind.SCN else "rnn.")
        self.state = initial_state(spec)

    @property
    def weights(self) -> dict[str, np.ndarray]:
        return self._weights

    def reset_state(self):
        self.state = initial_state(self.spec)

    def act(self, obs) -> np.ndarray:
        kind = self.spec.kind
        # same operations as forward_scn / forward_rcn, minus the per-step key split
        if kind is PolicyKind.RCN:
            rnn_action, self.state = forward_rnn(self._inner, self.state, obs)
            return forward_linear(self._linear, obs) + rnn_action
        if kind is PolicyKind.SCN:
            return forward_linear(self._linear, obs) + forward_mlp(self._inner, obs)
        action, self.state = forward(self.spec, self._weights, self.state, obs)
        return action

    def get_flat(self) -> np.ndarray:
        return self.params.values.copy()

    def set_flat(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.params.values.shape:
            raise ValueError(f"expected {self.params.values.shape[0]} parameters, got {values.shape}")
        self.params.values[:] = values

    def __repr__(self):
        return f"Policy({self.spec.label()}, params={self.params.values.size})"


def build_policy(spec: PolicySpec, seed: int) -> Policy:
    return Policy(spec, init_params(spec, seed))


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def format_float(x: float) -> str:
    return "%.17g" % x


def save_checkpoint(path, spec: PolicySpec, params: Sequence[float], seed: int = 0):
    header = (
        f"{spec.kind.value} hidden={spec.hidden_size} layers={spec.num_hidden_layers} "
        f"obs={spec.obs_dim} act={spec.act_dim} biases={int(spec.biases_enabled)} seed={seed}"
    )
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (param_count(spec),):
        raise ValueError("parameter count does not match spec")
    lines = [header] + [format_float(v) for v in params]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[PolicySpec, np.ndarray, int]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"empty checkpoint: {path}")
    head = lines[0].split()
    fields = dict(item.split("=", 1) for item in head[1:])
    spec = PolicySpec(
        PolicyKind.parse(head[0]),
        obs_dim=int(fields["obs"]),
        act_dim=int(fields["act"]),
        hidden_size=int(fields["hidden"]),
        num_hidden_layers=int(fields["layers"]),
        biases_enabled=fields["biases"] == "1",
    )
    values = np.array([float(s) for s in lines[1:] if s.strip()], dtype=np.float64)
    if values.shape != (param_count(spec),):
        raise ValueError(f"checkpoint holds {values.size} values, spec needs {param_count(spec)}")
    return spec, values, int(fields.get("seed", 0))
