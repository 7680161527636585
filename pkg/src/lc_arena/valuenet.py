"""Dense value network with manual backpropagation.

Just enough machinery for a DQN-style agent: rectified-linear hidden
layers, identity output, squared error through one selected output unit,
adaptive-moment optimizer, and JSON checkpoints that round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_SCHEMA = 1


@dataclass
class Mlp:
    """Fully connected net; weights[l] has shape (sizes[l], sizes[l+1])."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.sizes) - 1:
            raise ValueError("parameter count does not match layer sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[l], self.sizes[l + 1]) or b.shape != (self.sizes[l + 1],):
                raise ValueError(f"layer {l}: parameter shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l}: non-finite parameters")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators, one pair per parameter tensor."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_mlp(sizes: tuple[int, ...] | list[int], seed: int = 0) -> Mlp:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases."""
    sizes = tuple(int(s) for s in sizes)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes=sizes, weights=weights, biases=biases)


def _forward_cached(net: Mlp, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Returns (pre-activations per layer, activations incl. input)."""
    acts = [x]
    pres = []
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pres.append(z)
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    return pres, acts


def forward(net: Mlp, x: np.ndarray | list[float]) -> np.ndarray:
    """Q-values for one state vector (or a batch if x is 2-d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.n_in:
        raise ValueError(f"input size {x.shape[-1]} does not match net input {net.n_in}")
    _, acts = _forward_cached(net, x)
    return acts[-1]


def _zero_grads(net: Mlp) -> Gradients:
    return Gradients(
        weights=[np.zeros_like(w) for w in net.weights],
        biases=[np.zeros_like(b) for b in net.biases],
    )


def backward_batch(
    net: Mlp,
    xs: np.ndarray,
    indices: np.ndarray | list[int],
    targets: np.ndarray | list[float],
) -> tuple[float, Gradients]:
    """Mean squared error through each row's selected output unit.

    Returns (loss, gradients). Only the selected unit of each row carries
    loss gradient; everything upstream of the other units stays zero.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != net.n_in:
        raise ValueError("xs must be (batch, n_in)")
    idx = np.asarray(indices, dtype=int)
    tgt = np.asarray(targets, dtype=float)
    n = xs.shape[0]
    if idx.shape != (n,) or tgt.shape != (n,):
        raise ValueError("indices and targets must match the batch size")
    if (idx < 0).any() or (idx >= net.n_out).any():
        raise ValueError("action index out of range")

    pres, acts = _forward_cached(net, xs)
    q = acts[-1][np.arange(n), idx]
    err = q - tgt
    loss = float(np.mean(err**2))

    grads = _zero_grads(net)
    delta = np.zeros_like(acts[-1])
    delta[np.arange(n), idx] = 2.0 * err / n
    for l in range(len(net.weights) - 1, -1, -1):
        grads.weights[l] = acts[l].T @ delta
        grads.biases[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l].T) * (pres[l - 1] > 0.0)
    return loss, grads


def backward(net: Mlp, x: np.ndarray | list[float], index: int, target: float) -> Gradients:
    """Gradients of (target - Q(x)[index])^2 for a single state."""
    x = np.asarray(x, dtype=float)
    _, grads = backward_batch(net, x[None, :], [index], [target])
    return grads


def init_optimizer(
    net: Mlp,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    return OptimizerState(
        m_weights=[np.zeros_like(w) for w in net.weights],
        v_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_biases=[np.zeros_like(b) for b in net.biases],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def opt_step(net: Mlp, grads: Gradients, state: OptimizerState) -> tuple[Mlp, OptimizerState]:
    """One bias-corrected adaptive-moment update, in place."""
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step

    def update(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray) -> None:
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)

    for l in range(len(net.weights)):
        update(net.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l])
        update(net.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l])
    return net, state


def copy_params(src: Mlp) -> Mlp:
    """Deep copy; later updates to src leave the copy untouched."""
    return Mlp(
        sizes=src.sizes,
        weights=[w.copy() for w in src.weights],
        biases=[b.copy() for b in src.biases],
    )


def save_checkpoint(net: Mlp, path: str | Path) -> Path:
    """JSON checkpoint; float repr round-trips bit-exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "sizes": list(net.sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    path.write_text(json.dumps(payload, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: str | Path) -> Mlp:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {payload.get('schema')!r}")
    return Mlp(
        sizes=tuple(payload["sizes"]),
        weights=[np.asarray(w, dtype=float) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
    )
