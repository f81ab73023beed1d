"""
Small feed-forward networks with hand-written backpropagation.

ReLU hidden layers and a linear output. Weights are stored (out, in) so a layer
computes W @ x + b; batched inputs are rows. Adam keeps its moments in OptState.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union
import struct

import numpy as np

from .errors import CheckpointError, ContractError

MAGIC = b"SGMLP1"


@dataclass
class Mlp:
    sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> List[np.ndarray]:
        """Parameters in layer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            sizes=list(self.sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def mlp_init(sizes: Sequence[int], seed: int, scale: float = 1.0) -> Mlp:
    """Uniform(-scale/sqrt(fan_in), scale/sqrt(fan_in)) weights, zero biases."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ContractError(f"Need at least two positive layer sizes, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes=sizes, weights=weights, biases=biases)


def param_count(mlp: Mlp) -> int:
    return int(sum(p.size for p in mlp.params()))


def _as_batch(mlp: Mlp, x: np.ndarray):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != mlp.sizes[0]:
        raise ContractError(f"Input of shape {x.shape} does not fit input size {mlp.sizes[0]}")
    return batch, single


def _forward_cache(mlp: Mlp, batch: np.ndarray):
    activations = [batch]
    pre_activations = []
    h = batch
    for layer, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w.T + b
        pre_activations.append(z)
        h = np.maximum(z, 0.0) if layer < mlp.n_layers - 1 else z
        activations.append(h)
    return activations, pre_activations


def forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Outputs for one input vector or a batch of rows."""
    batch, single = _as_batch(mlp, x)
    activations, _ = _forward_cache(mlp, batch)
    out = activations[-1]
    return out[0] if single else out


def backward(mlp: Mlp, x: np.ndarray, upstream: np.ndarray) -> List[np.ndarray]:
    """
    Gradients of sum(upstream * forward(x)) with respect to params(), summed
    over the batch.
    """
    batch, single = _as_batch(mlp, x)
    g = np.asarray(upstream, dtype=float)
    g = g[None, :] if single else g
    if g.shape != (batch.shape[0], mlp.sizes[-1]):
        raise ContractError(f"Upstream gradient of shape {np.shape(upstream)} does not fit the output")

    activations, pre_activations = _forward_cache(mlp, batch)
    grads_w = [None] * mlp.n_layers
    grads_b = [None] * mlp.n_layers
    for layer in reversed(range(mlp.n_layers)):
        if layer < mlp.n_layers - 1:
            g = g * (pre_activations[layer] > 0.0)
        grads_w[layer] = g.T @ activations[layer]
        grads_b[layer] = g.sum(axis=0)
        g = g @ mlp.weights[layer]

    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads.extend([gw, gb])
    return grads


@dataclass
class OptState:
    """Adam moments for one model."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, mlp: Mlp, learning_rate: float, **kwargs) -> "OptState":
        params = mlp.params()
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def opt_step(mlp: Mlp, opt: OptState, grads: List[np.ndarray]) -> Mlp:
    """One Adam update with bias correction, applied in place."""
    params = mlp.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ContractError("Gradients do not match the model's parameters")
    opt.step += 1
    correction1 = 1.0 - opt.beta1 ** opt.step
    correction2 = 1.0 - opt.beta2 ** opt.step
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + opt.eps)
    return mlp


def save_mlp(mlp: Mlp, path: Union[str, Path]):
    """Write magic, layer count and sizes (<u4), then parameters (<f8) in layer order."""
    header = MAGIC + struct.pack("<I", len(mlp.sizes)) + struct.pack(f"<{len(mlp.sizes)}I", *mlp.sizes)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in mlp.params())
    Path(path).write_bytes(header + body)


def load_mlp(path: Union[str, Path], expected_sizes: Sequence[int] = None) -> Mlp:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a network file (bad magic)")
    offset = len(MAGIC)
    try:
        (n_sizes,) = struct.unpack_from("<I", data, offset)
        offset += 4
        sizes = list(struct.unpack_from(f"<{n_sizes}I", data, offset))
        offset += 4 * n_sizes
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if expected_sizes is not None and list(expected_sizes) != sizes:
        raise CheckpointError(f"{path}: layer sizes {sizes} do not match expected {list(expected_sizes)}")

    n_values = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
    if len(data) - offset != 8 * n_values:
        raise CheckpointError(f"{path}: expected {n_values} parameters, found {(len(data) - offset) // 8}")
    flat = np.frombuffer(data, dtype="<f8", offset=offset).astype(float)

    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos: pos + fan_out * fan_in].reshape(fan_out, fan_in).copy())
        pos += fan_out * fan_in
        biases.append(flat[pos: pos + fan_out].copy())
        pos += fan_out
    return Mlp(sizes=sizes, weights=weights, biases=biases)
