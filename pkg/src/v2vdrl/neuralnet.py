"""Fully connected Q-network in plain numpy: forward, backprop, Adam, checkpoints.

Layers are affine maps ``W @ x + b`` with ``W`` of shape (out, in). Hidden
layers use ReLU; the output layer is linear. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = "mlp-v1"


class NetError(ValueError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def equals(self, other: MlpParams) -> bool:
        mine, theirs = self.tensors(), other.tensors()
        return len(mine) == len(theirs) and all(np.array_equal(a, b) for a, b in zip(mine, theirs))


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    m_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_w: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParams, **hyper) -> AdamState:
        z = lambda xs: [np.zeros_like(x) for x in xs]  # noqa: E731
        return cls(z(params.weights), z(params.biases), z(params.weights), z(params.biases), **hyper)


def relu(x):
    return np.maximum(x, 0.0)


def init_params(layer_sizes, rng_seed) -> MlpParams:
    """He initialization: N(0, 2/fan_in) weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise NetError("need at least an input and an output layer")
    if min(sizes) < 1:
        raise NetError(f"zero-width layer in {sizes}")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _forward_cache(params: MlpParams, x: np.ndarray):
    acts = [x]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if i == last else relu(z))
    return acts


def forward(params: MlpParams, x) -> np.ndarray:
    """Q-values for one input vector (n_in,) or a batch (B, n_in)."""
    x = np.asarray(x, dtype=float)
    n_in = params.weights[0].shape[1]
    if x.shape[-1] != n_in or x.ndim not in (1, 2):
        raise NetError(f"input shape {x.shape} does not match {n_in} inputs")
    return _forward_cache(params, x)[-1]


def backward(params: MlpParams, states, actions, targets) -> tuple[GradientSet, float]:
    """Gradient of ``sum_i (y_i - Q(s_i, a_i))**2``.

    Only the taken action's output receives gradient for each sample.
    """
    x = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=int).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if len(x) == 0 or len(x) != len(actions) or len(x) != len(targets):
        raise NetError("batch must be non-empty with matching lengths")
    acts = _forward_cache(params, x)
    rows = np.arange(len(x))
    err = acts[-1][rows, actions] - targets
    loss = float(err @ err)

    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = 2.0 * err
    n = len(params.weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i]) * (acts[i] > 0)
    return GradientSet(gw, gb), loss


def adam_step(params: MlpParams, state: AdamState, grads: GradientSet) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place. Returns its arguments."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    groups = ((params.weights, grads.weights, state.m_w, state.v_w),
              (params.biases, grads.biases, state.m_b, state.v_b))
    for ps, gs, ms, vs in groups:
        for p, g, m, v in zip(ps, gs, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def save_checkpoint(params: MlpParams, path) -> None:
    sizes = params.layer_sizes
    lines = [" ".join([CHECKPOINT_MAGIC, str(len(sizes))] + [str(s) for s in sizes])]
    for t in params.tensors():
        lines.append(" ".join(format(v, ".17g") for v in t.ravel()))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpParams:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise NetError(f"{path}: empty checkpoint")
    head = lines[0].split()
    if head[0] != CHECKPOINT_MAGIC:
        raise NetError(f"{path}: not an {CHECKPOINT_MAGIC} checkpoint")
    n = int(head[1])
    sizes = [int(s) for s in head[2:]]
    if len(sizes) != n or len(lines) - 1 != 2 * (n - 1):
        raise NetError(f"{path}: header does not match contents")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = np.array([float(v) for v in lines[1 + 2 * i].split()]).reshape(fan_out, fan_in)
        b = np.array([float(v) for v in lines[2 + 2 * i].split()]).reshape(fan_out)
        weights.append(w)
        biases.append(b)
    return MlpParams(weights, biases)
