"""Dense feedforward networks with explicit forward/backward passes.

All parameters are float64 numpy arrays. ``Mlp.forward`` accepts a single
input vector or a batch matrix (one row per sample). ``Mlp.backward``
consumes the gradient of a scalar loss with respect to the output and
returns per-layer parameter gradients plus the gradient with respect to
the input. Gradients are summed over batch rows, so a loss gradient that
already carries a 1/batch factor yields batch-averaged parameter
gradients; the loss helpers in this package follow that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity")

# cache entry per layer: (layer input, pre-activation)
Cache = list[tuple[np.ndarray, np.ndarray]]


class TrainingDivergence(RuntimeError):
    """A loss or gradient stopped being finite."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2:
            raise ValueError("layer weight must be a 2-d matrix")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias length must match weight rows")


@dataclass
class Mlp:
    layers: list[Layer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Cache]:
        """Evaluate the network; returns (output, cache for backward)."""
        a = np.asarray(x, dtype=np.float64)
        if a.shape[-1] != self.in_dim:
            raise ValueError(
                f"input has dimension {a.shape[-1]}, network expects {self.in_dim}"
            )
        cache: Cache = []
        for layer in self.layers:
            z = a @ layer.weight.T + layer.bias
            cache.append((a, z))
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return a, cache

    def backward(
        self, cache: Cache, dout: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Backpropagate ``dout`` (gradient w.r.t. the output).

        Returns (parameter gradients in ``params()`` order, gradient
        w.r.t. the network input). Pure function of its arguments.
        """
        if len(cache) != len(self.layers):
            raise ValueError("cache does not match network depth")
        d = np.asarray(dout, dtype=np.float64)
        if d.shape[-1] != self.out_dim:
            raise ValueError("output gradient has wrong dimension")
        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.layers))
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            a_in, z = cache[idx]
            dz = d * (z > 0.0) if layer.activation == "relu" else d
            if dz.ndim == 1:
                grads[2 * idx] = np.outer(dz, a_in)
                grads[2 * idx + 1] = dz.copy()
            else:
                grads[2 * idx] = dz.T @ a_in
                grads[2 * idx + 1] = dz.sum(axis=0)
            d = dz @ layer.weight
        return grads, d


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Build an Mlp with Kaiming-uniform weights and zero biases.

    ``dims`` lists layer sizes input-first; ``activations`` has one tag
    per layer (``len(dims) - 1`` entries).
    """
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        weight = kaiming_uniform((fan_out, fan_in), fan_in, rng)
        layers.append(Layer(weight, np.zeros(fan_out), act))
    return Mlp(layers)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Batch-averaged cross-entropy of integer ``labels`` under softmax.

    Returns (loss, gradient w.r.t. logits). The gradient carries the
    1/batch factor, matching this package's averaging convention.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError("labels must have one entry per logits row")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label index out of range")
    ls = log_softmax(logits)
    rows = np.arange(n)
    loss = -ls[rows, labels].mean()
    dlogits = np.exp(ls)
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return float(loss), dlogits


@dataclass
class SgdState:
    """Momentum buffers plus the decaying learning-rate schedule.

    The current rate is computed as ``lr0 * decay**epoch`` so that after
    k epoch boundaries it equals the closed form exactly.
    """

    lr0: float
    momentum: float
    decay: float = 1.0
    epoch: int = 0
    velocity: list[np.ndarray] = field(default_factory=list)

    @property
    def lr(self) -> float:
        return self.lr0 * self.decay**self.epoch


def init_sgd(
    params: list[np.ndarray], lr0: float, momentum: float, decay: float = 1.0
) -> SgdState:
    if lr0 < 0:
        raise ValueError("learning rate must be nonnegative")
    return SgdState(lr0, momentum, decay, 0, [np.zeros_like(p) for p in params])


def sgd_step(params: list[np.ndarray], state: SgdState, grads: list[np.ndarray]) -> None:
    """Classical momentum update, in place.

    buffer <- momentum * buffer + grad; param <- param - lr * buffer.
    """
    if len(params) != len(state.velocity) or len(grads) != len(params):
        raise ValueError("parameter/gradient/buffer counts disagree")
    lr = state.lr
    for p, v, g in zip(params, state.velocity, grads):
        if p.shape != g.shape:
            raise ValueError("gradient shape does not match parameter")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence("non-finite gradient entries")
        v *= state.momentum
        v += g
        p -= lr * v


def decay_lr(state: SgdState) -> None:
    """Advance one epoch boundary: lr becomes lr0 * decay**(epoch+1)."""
    state.epoch += 1
