"""Dense feed-forward networks with hand-written backprop and Adam.

Everything is float64 numpy. Inputs may be a single vector ``(n,)`` or a
batch ``(B, n)``; outputs follow the same rank.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, NumericFault

MAGIC = b"EMPW"
FORMAT_VERSION = 1


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def all_zero(self) -> bool:
        return all(not np.any(a) for a in self.arrays())


@dataclass
class DenseNet:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(int(s) <= 0 for s in self.layer_sizes):
            raise InvalidInput(f"bad layer sizes {self.layer_sizes}")
        if self.hidden_activation != "relu" or self.output_activation != "linear":
            raise InvalidInput("only relu hidden / linear output are supported")
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        n = len(self.layer_sizes) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise InvalidInput("weights/biases do not match layer count")
        for k in range(n):
            shape = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if self.weights[k].shape != shape:
                raise InvalidInput(f"weights[{k}] has shape {self.weights[k].shape}, expected {shape}")
            if self.biases[k].shape != (shape[0],):
                raise InvalidInput(f"biases[{k}] has shape {self.biases[k].shape}")

    @classmethod
    def create(cls, layer_sizes, rng: np.random.Generator) -> "DenseNet":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases)

    @classmethod
    def zeros(cls, layer_sizes) -> "DenseNet":
        weights = [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]
        biases = [np.zeros(o) for o in layer_sizes[1:]]
        return cls(list(layer_sizes), weights, biases)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def load_from(self, other: "DenseNet") -> None:
        """Copy another net's parameters into this one (shapes must match)."""
        if other.layer_sizes != self.layer_sizes:
            raise InvalidInput("layer sizes differ")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise InvalidInput(f"input shape {x.shape} does not match input size {self.input_size}")
        return x, single

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        # activations[0] is the input, activations[-1] the output
        acts = [x]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            if k < last:
                np.maximum(z, 0.0, out=z)
            acts.append(z)
        return acts

    def partial_preactivation(self, x_part, start: int) -> np.ndarray:
        """First-layer contribution (no bias) of input columns ``start:start + width``, any leading shape."""
        x_part = np.asarray(x_part, dtype=np.float64)
        stop = start + x_part.shape[-1]
        if start < 0 or stop > self.input_size:
            raise InvalidInput(f"columns {start}:{stop} outside input size {self.input_size}")
        return x_part @ self.weights[0][:, start:stop].T

    def finish_forward(self, z1) -> np.ndarray:
        """Complete a forward pass from bias-free first-layer pre-activations of any leading shape.

        Lets callers share the first-layer work of inputs that repeat across rows.
        """
        lead = np.shape(z1)[:-1]
        # one 2-D matmul per layer; stacked 3-D matmuls are far slower
        z = np.reshape(z1, (-1, self.layer_sizes[1])) + self.biases[0]
        for w, b in zip(self.weights[1:], self.biases[1:]):
            np.maximum(z, 0.0, out=z)
            z = z @ w.T + b
        return z.reshape(*lead, self.output_size)

    def forward(self, x) -> np.ndarray:
        x, single = self._as_batch(x)
        y = self._forward(x)[-1]
        return y[0] if single else y

    def forward_cached(self, x) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward that also returns the activations for :meth:`backward`."""
        x, _ = self._as_batch(x)
        acts = self._forward(x)
        return acts[-1], acts

    def backward(self, x, output_gradient, cache: list[np.ndarray] | None = None, input_grad: bool = True):
        """Gradients of ``sum(output * output_gradient)`` w.r.t. parameters and input.

        For a batch, parameter gradients are summed over rows and the input
        gradient keeps the batch dimension. With ``input_grad=False`` the
        input gradient is skipped and returned as None.
        """
        x, single = self._as_batch(x)
        g = np.asarray(output_gradient, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != (x.shape[0], self.output_size):
            raise InvalidInput(f"output gradient shape {g.shape} does not match output size {self.output_size}")
        acts = cache if cache is not None else self._forward(x)

        n = len(self.weights)
        dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        for k in range(n - 1, -1, -1):
            a_prev = acts[k]
            dws[k] = g.T @ a_prev
            dbs[k] = g.sum(axis=0)
            if k == 0 and not input_grad:
                return Gradients(dws, dbs), None
            g = g @ self.weights[k]
            if k > 0:
                # relu'(z) expressed through its output: a > 0 iff z > 0
                g = g * (a_prev > 0.0)
        return Gradients(dws, dbs), (g[0] if single else g)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate: float, **kwargs) -> "AdamState":
        if learning_rate <= 0:
            raise InvalidInput("learning rate must be positive")
        m = [np.zeros_like(p) for p in net.parameters()]
        v = [np.zeros_like(p) for p in net.parameters()]
        return cls(m, v, learning_rate=learning_rate, **kwargs)


def adam_step(net: DenseNet, state: AdamState, grads: Gradients) -> None:
    """Apply one bias-corrected Adam step in place.

    An identically-zero gradient is a no-op: parameters, moments and the
    step counter are all left untouched.
    """
    g_arrays = grads.arrays()
    params = net.parameters()
    if len(g_arrays) != len(params) or any(g.shape != p.shape for g, p in zip(g_arrays, params)):
        raise InvalidInput("gradients are not shape-congruent with the network")
    if not grads.all_finite():
        raise NumericFault("non-finite gradient; Adam step rejected")
    if grads.all_zero():
        return

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    step = state.learning_rate / c1
    root_c2 = np.sqrt(c2)
    for p, g, m, v in zip(params, g_arrays, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        g2 = g * g
        g2 *= 1.0 - b2
        v += g2
        # reuse g2 as the denominator sqrt(v / c2) + eps
        np.sqrt(v, out=g2)
        g2 /= root_c2
        g2 += state.epsilon_stab
        np.divide(m, g2, out=g2)
        g2 *= step
        p -= g2
    if not net.all_finite():
        raise NumericFault("non-finite parameter after Adam step")


# -- binary snapshots ---------------------------------------------------------

def to_bytes(net: DenseNet) -> bytes:
    sizes = net.layer_sizes
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
    body = b"".join(
        np.ascontiguousarray(w, dtype="<f8").tobytes() + np.ascontiguousarray(b, dtype="<f8").tobytes()
        for w, b in zip(net.weights, net.biases)
    )
    return header + body


def from_bytes(data: bytes) -> DenseNet:
    if data[:4] != MAGIC:
        raise InvalidInput("not an EMPW snapshot")
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise InvalidInput(f"unsupported snapshot version {version}")
    sizes = list(struct.unpack_from(f"<{count}I", data, 12))
    offset = 12 + 4 * count
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_out * fan_in, offset=offset)
        offset += 8 * fan_out * fan_in
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_out, fan_in).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(data):
        raise InvalidInput("trailing bytes in snapshot")
    return DenseNet(sizes, weights, biases)


def save_snapshot(net: DenseNet, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(net))
    return path


def load_snapshot(path) -> DenseNet:
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"snapshot not found: {path}")
    return from_bytes(path.read_bytes())
