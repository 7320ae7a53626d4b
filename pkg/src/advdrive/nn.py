"""Minimal dense network with exact parameter and input gradients.

Everything is float64 numpy. Hidden layers use tanh, the output layer is
linear. A forward pass returns a tape of cached activations; the tape is
only valid until the network's parameters change (tracked by a version
counter), which is enough to drive both PPO updates and gradient-based
observation perturbations.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np


class StaleTapeError(RuntimeError):
    """Backward called with a tape recorded before a parameter update."""


class Mlp:
    """Feed-forward net: layer_dims = (input, hidden..., output)."""

    def __init__(self, layer_dims, weights, biases):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self._version = 0
        for i, (n_in, n_out) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            if self.weights[i].shape != (n_out, n_in):
                raise ValueError(f"layer {i}: weight shape {self.weights[i].shape} != {(n_out, n_in)}")
            if self.biases[i].shape != (n_out,):
                raise ValueError(f"layer {i}: bias shape {self.biases[i].shape} != {(n_out,)}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter arrays, weights and biases interleaved."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def bump_version(self) -> None:
        self._version += 1

    def forward(self, x):
        """Run the net on a single vector (n,) or a batch (N, n).

        Returns (output, tape); the tape caches the inputs seen by every
        layer so gradients can be replayed exactly.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.layer_dims[0]:
            raise ValueError(f"input dim {a.shape[1]} != expected {self.layer_dims[0]}")
        layer_inputs = [a]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = np.tanh(z) if i < self.n_layers - 1 else z
            layer_inputs.append(a)
        tape = GradientTape(self, layer_inputs, single)
        out = layer_inputs[-1]
        return (out[0] if single else out), tape

    def __call__(self, x):
        return self.forward(x)[0]


class GradientTape:
    """Cached activations from one forward pass; single-use per input."""

    def __init__(self, net: Mlp, layer_inputs, single: bool):
        self._net = net
        self._version = net._version
        self.layer_inputs = layer_inputs
        self.single = single

    def _check_fresh(self, net: Mlp) -> None:
        if net is not self._net or net._version != self._version:
            raise StaleTapeError("tape recorded for different parameters")


def _as_output_grad(tape: GradientTape, output_grad) -> np.ndarray:
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.single:
        g = g[None, :]
    return g


def backward_params(net: Mlp, tape: GradientTape, output_grad):
    """Gradients of sum(output * output_grad) wrt all parameters.

    Batched output_grad (N, out) accumulates over the batch. Returns a list
    aligned with net.parameters().
    """
    tape._check_fresh(net)
    delta = _as_output_grad(tape, output_grad)
    grads_w = [None] * net.n_layers
    grads_b = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        a_in = tape.layer_inputs[i]
        grads_w[i] = delta.T @ a_in
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (1.0 - tape.layer_inputs[i] ** 2)
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.append(gw)
        out.append(gb)
    return out


def backward_input(net: Mlp, tape: GradientTape, output_grad):
    """Gradient of sum(output * output_grad) wrt the input vector(s)."""
    tape._check_fresh(net)
    delta = _as_output_grad(tape, output_grad)
    for i in range(net.n_layers - 1, 0, -1):
        delta = (delta @ net.weights[i]) * (1.0 - tape.layer_inputs[i] ** 2)
    grad = delta @ net.weights[0]
    return grad[0] if tape.single else grad


def init_mlp(layer_dims, rng: np.random.Generator) -> Mlp:
    """Scaled-uniform init: gain sqrt(2) on hidden layers, 0.01 on the output
    layer (small output weights stabilize early policy-gradient updates)."""
    dims = tuple(int(d) for d in layer_dims)
    weights, biases = [], []
    n_layers = len(dims) - 1
    for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        gain = math.sqrt(2.0) if i < n_layers - 1 else 0.01
        limit = gain * math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return Mlp(dims, weights, biases)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class AdamState:
    """Adam with bias correction over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """In-place Adam update; caller is responsible for bumping net versions."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# Checkpoint format
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT_VERSION = 1


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "layer_dims": list(net.layer_dims),
        "weights": [w.tolist() for w in net.weights],   # row-major, out x in
        "biases": [b.tolist() for b in net.biases],
    }


def mlp_from_dict(d: dict) -> Mlp:
    return Mlp(d["layer_dims"], d["weights"], d["biases"])


def dump_json_bytes(payload: dict) -> bytes:
    """Canonical JSON encoding: sorted keys, fixed separators, repr floats.

    Python's shortest-round-trip float repr makes save/load/save bit-stable.
    """
    return (json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def save_json(path, payload: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_json_bytes(payload))


def load_json(path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()
