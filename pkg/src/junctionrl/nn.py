"""Dense ReLU Q-network, hand-written backprop and Adam, in numpy.

Parameters are kept as a flat list ``[W1, b1, W2, b2, ...]`` with ``W`` of
shape ``(fan_in, fan_out)`` so a batch is propagated as ``X @ W + b``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

LAYER_SIZES = (280, 500, 1000, 3)
WEIGHTS_MAGIC = b"JRLW"
WEIGHTS_VERSION = 1


class TrainingError(FloatingPointError):
    pass


class WeightsFormatError(ValueError):
    pass


class Network:
    """Multilayer perceptron parameters plus the sizes and seed that created them."""

    def __init__(self, params, sizes, seed=0):
        self.params = params
        self.sizes = tuple(int(s) for s in sizes)
        self.seed = int(seed)
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if params[2 * i].shape != (fan_in, fan_out) or params[2 * i + 1].shape != (fan_out,):
                raise ValueError(f"layer {i} parameters do not match sizes {self.sizes}")

    @classmethod
    def init(cls, sizes=LAYER_SIZES, seed=0, dtype=np.float64):
        """He-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
            params.append(np.zeros(fan_out, dtype=dtype))
        return cls(params, sizes, seed)

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def copy(self) -> "Network":
        return Network([p.copy() for p in self.params], self.sizes, self.seed)

    def __eq__(self, other):
        return (isinstance(other, Network) and self.sizes == other.sizes
                and all(np.array_equal(a, b) for a, b in zip(self.params, other.params)))


def copy_params(src: Network) -> Network:
    """Independent bit-exact duplicate (target network sync)."""
    return src.copy()


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != net.sizes[0]:
        raise ValueError(f"expected input width {net.sizes[0]}, got {x.shape[-1]}")
    h = x
    last = net.n_layers - 1
    for i in range(net.n_layers):
        h = h @ net.params[2 * i] + net.params[2 * i + 1]
        if i < last:
            np.maximum(h, 0.0, out=h)
    return h


def _forward_cache(net, X):
    acts = [X]
    h = X
    last = net.n_layers - 1
    for i in range(net.n_layers):
        h = h @ net.params[2 * i] + net.params[2 * i + 1]
        if i < last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return acts


def loss_and_grads(net: Network, inputs: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared TD error on the taken actions and its gradient.

    Only the output unit of the taken action receives error.  Returns
    ``(loss, grads)`` with ``grads`` aligned to ``net.params``.
    """
    inputs = np.atleast_2d(inputs)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=inputs.dtype)
    batch = inputs.shape[0]
    acts = _forward_cache(net, inputs)
    rows = np.arange(batch)
    err = acts[-1][rows, actions] - targets
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = 2.0 * err / batch
    grads = [None] * len(net.params)
    for i in reversed(range(net.n_layers)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.params[2 * i].T
            delta *= acts[i] > 0
    return loss, grads


def backward(net: Network, inputs, actions, targets):
    """Gradients of the minibatch loss with respect to every parameter."""
    return loss_and_grads(net, inputs, actions, targets)[1]


class Adam:
    def __init__(self, params, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """In-place bias-corrected Adam update of ``params``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        out = {"t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.m = [np.array(state[f"m{i}"]) for i in range(len(self.m))]
        self.v = [np.array(state[f"v{i}"]) for i in range(len(self.v))]


def adam_step(net: Network, adam: Adam, grads):
    adam.step(net.params, grads)
    return net


def weights_to_bytes(net: Network) -> bytes:
    sizes = net.sizes
    header = WEIGHTS_MAGIC + struct.pack("<II", WEIGHTS_VERSION, len(sizes))
    header += struct.pack(f"<{len(sizes)}I", *sizes) + struct.pack("<q", net.seed)
    return header + b"".join(p.astype("<f8").tobytes() for p in net.params)


def weights_from_bytes(blob: bytes, expected_sizes=None) -> Network:
    if blob[:4] != WEIGHTS_MAGIC:
        raise WeightsFormatError("not a weights file (bad magic)")
    try:
        return _parse_weights(blob, expected_sizes)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, WeightsFormatError):
            raise
        raise WeightsFormatError(f"truncated or corrupt weights file: {exc}") from exc


def _parse_weights(blob, expected_sizes):
    version, n = struct.unpack_from("<II", blob, 4)
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"unsupported weights format version {version}")
    sizes = struct.unpack_from(f"<{n}I", blob, 12)
    (seed,) = struct.unpack_from("<q", blob, 12 + 4 * n)
    if expected_sizes is not None and tuple(sizes) != tuple(expected_sizes):
        raise WeightsFormatError(f"layer sizes {sizes} do not match expected {tuple(expected_sizes)}")
    offset = 12 + 4 * n + 8
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
            params.append(arr.astype(np.float64))
            offset += 8 * count
    if offset != len(blob):
        raise WeightsFormatError("weights payload length does not match header")
    return Network(params, sizes, seed)


def save_weights(net: Network, path):
    Path(path).write_bytes(weights_to_bytes(net))


def load_weights(path, expected_sizes=None) -> Network:
    return weights_from_bytes(Path(path).read_bytes(), expected_sizes)
