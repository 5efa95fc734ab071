"""Minimal dense-network core: forward pass, exact backprop, plain SGD.

Everything is float64 numpy. Networks are value-like: `clone` gives an
independent copy and `sgd_step` returns a new network, so separate training
runs never share state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, TrainingError

ACTIVATIONS = ("relu", "tanh", "identity")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return z
    raise ConfigurationError(f"unknown activation {kind!r}")


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "identity":
        return np.ones_like(z)
    raise ConfigurationError(f"unknown activation {kind!r}")


@dataclass
class Layer:
    w: np.ndarray  # (in_dim, out_dim)
    b: np.ndarray  # (out_dim,)
    activation: str


@dataclass
class DenseNet:
    layers: list[Layer]

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    def clone(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.w.copy(), l.b.copy(), l.activation) for l in self.layers]
        )

    def n_params(self) -> int:
        return sum(l.w.size + l.b.size for l in self.layers)


@dataclass
class Gradients:
    """Parameter gradients, shape-congruent with a DenseNet."""

    dw: list[np.ndarray] = field(default_factory=list)
    db: list[np.ndarray] = field(default_factory=list)

    def scaled(self, c: float) -> "Gradients":
        return Gradients([c * w for w in self.dw], [c * b for b in self.db])


@dataclass
class SgdConfig:
    learning_rate: float = 0.001
    epochs: int = 150
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")


def init_net(dims, activations=None, seed=0) -> DenseNet:
    """Build a network with seeded uniform init in +-sqrt(6/(fan_in+fan_out)).

    `dims` chains layer sizes, e.g. (2, 32, 4) gives one hidden layer.
    `activations` defaults to tanh on hidden layers and identity on the
    output (logits).
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ConfigurationError("need at least input and output dims")
    if activations is None:
        activations = ["tanh"] * (len(dims) - 2) + ["identity"]
    if len(activations) != len(dims) - 1:
        raise ConfigurationError("one activation per layer required")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for d_in, d_out, act in zip(dims[:-1], dims[1:], activations):
        if act not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {act!r}")
        bound = np.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-bound, bound, size=(d_in, d_out))
        layers.append(Layer(w, np.zeros(d_out), act))
    return DenseNet(layers)


def forward_batch(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Logits for a batch, shape (n, out_dim)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ConfigurationError(
            f"input has shape {a.shape}, network expects (*, {net.in_dim})"
        )
    for layer in net.layers:
        a = _act(a @ layer.w + layer.b, layer.activation)
    return a


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Logits for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigurationError("forward expects a 1-D input; use forward_batch")
    return forward_batch(net, x[None, :])[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax (max subtraction); components sum to 1."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("softmax requires finite logits")
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def backward_batch(net: DenseNet, x: np.ndarray, upstream: np.ndarray) -> Gradients:
    """Exact parameter gradients, summed over the batch.

    `upstream` is dL/d(output) for each sample; any 1/n averaging belongs to
    the caller's loss definition.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim != 2 or upstream.ndim != 2:
        raise ConfigurationError("backward_batch expects 2-D input and upstream")
    if upstream.shape != (x.shape[0], net.out_dim):
        raise ConfigurationError(
            f"upstream shape {upstream.shape} does not match (n, {net.out_dim})"
        )
    # forward pass, caching pre-activations and inputs per layer
    pre, inputs = [], []
    a = x
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.w + layer.b
        pre.append(z)
        a = _act(z, layer.activation)
    grads = Gradients([np.empty_like(l.w) for l in net.layers],
                      [np.empty_like(l.b) for l in net.layers])
    da = upstream
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        dz = da * _act_grad(pre[i], layer.activation)
        grads.dw[i] = inputs[i].T @ dz
        grads.db[i] = dz.sum(axis=0)
        da = dz @ layer.w.T
    return grads


def backward(net: DenseNet, x: np.ndarray, upstream: np.ndarray) -> Gradients:
    """Gradients of a scalar loss whose output-gradient is `upstream`."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim != 1 or upstream.ndim != 1:
        raise ConfigurationError("backward expects 1-D input and upstream")
    return backward_batch(net, x[None, :], upstream[None, :])


def sgd_step(net: DenseNet, grads: Gradients, cfg: SgdConfig) -> DenseNet:
    """Return a new network with params <- params - lr * grads."""
    lr = cfg.learning_rate if isinstance(cfg, SgdConfig) else float(cfg)
    new_layers = []
    for layer, dw, db in zip(net.layers, grads.dw, grads.db):
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise TrainingError(
                "non-finite gradient encountered "
                f"(|dw|max={np.max(np.abs(dw)):.3g})"
            )
        new_layers.append(Layer(layer.w - lr * dw, layer.b - lr * db, layer.activation))
    return DenseNet(new_layers)


def sgd_step_(net: DenseNet, grads: Gradients, lr: float) -> None:
    """In-place update used inside training loops (hot path)."""
    for layer, dw, db in zip(net.layers, grads.dw, grads.db):
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise TrainingError(
                "non-finite gradient encountered "
                f"(|dw|max={np.max(np.abs(dw)):.3g})"
            )
        layer.w -= lr * dw
        layer.b -= lr * db


# ---------------------------------------------------------------------------
# FiLM-style conditioning: a network on x whose first hidden activation is
# modulated feature-wise by an affine transform computed from h.
# ---------------------------------------------------------------------------


@dataclass
class FilmNet:
    """Two-input network: hidden = act(W1 x + b1) * (1 + Ws h) + Wt h.

    An alternative to concatenating h onto x for the enriched predictor.
    """

    base: DenseNet          # layers on x; first layer's output is modulated
    w_scale: np.ndarray     # (h_dim, hidden)
    w_shift: np.ndarray     # (h_dim, hidden)

    @property
    def in_dim(self) -> int:
        return self.base.in_dim

    @property
    def h_dim(self) -> int:
        return self.w_scale.shape[0]

    @property
    def out_dim(self) -> int:
        return self.base.out_dim

    def clone(self) -> "FilmNet":
        return FilmNet(self.base.clone(), self.w_scale.copy(), self.w_shift.copy())


def init_film_net(x_dim: int, h_dim: int, hidden: int, out_dim: int, seed=0) -> FilmNet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    base = init_net((x_dim, hidden, out_dim), seed=rng)
    bound = np.sqrt(6.0 / (h_dim + hidden))
    w_scale = rng.uniform(-bound, bound, size=(h_dim, hidden))
    w_shift = rng.uniform(-bound, bound, size=(h_dim, hidden))
    return FilmNet(base, w_scale, w_shift)


def film_forward_batch(net: FilmNet, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    first = net.base.layers[0]
    a = _act(x @ first.w + first.b, first.activation)
    a = a * (1.0 + h @ net.w_scale) + h @ net.w_shift
    for layer in net.base.layers[1:]:
        a = _act(a @ layer.w + layer.b, layer.activation)
    return a


def film_backward_batch(net: FilmNet, x: np.ndarray, h: np.ndarray,
                        upstream: np.ndarray):
    """Gradients for base layers plus the scale/shift maps, summed over batch.

    Returns (Gradients for base, d_w_scale, d_w_shift).
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    first = net.base.layers[0]
    z0 = x @ first.w + first.b
    a0 = _act(z0, first.activation)
    scale = 1.0 + h @ net.w_scale
    a = a0 * scale + h @ net.w_shift
    pre, inputs = [], []
    for layer in net.base.layers[1:]:
        inputs.append(a)
        z = a @ layer.w + layer.b
        pre.append(z)
        a = _act(z, layer.activation)

    grads = Gradients([np.empty_like(l.w) for l in net.base.layers],
                      [np.empty_like(l.b) for l in net.base.layers])
    da = np.asarray(upstream, dtype=np.float64)
    for i in reversed(range(len(net.base.layers) - 1)):
        layer = net.base.layers[i + 1]
        dz = da * _act_grad(pre[i], layer.activation)
        grads.dw[i + 1] = inputs[i].T @ dz
        grads.db[i + 1] = dz.sum(axis=0)
        da = dz @ layer.w.T
    # through the modulation
    d_w_scale = h.T @ (da * a0)
    d_w_shift = h.T @ da
    da0 = da * scale
    dz0 = da0 * _act_grad(z0, first.activation)
    grads.dw[0] = x.T @ dz0
    grads.db[0] = dz0.sum(axis=0)
    return grads, d_w_scale, d_w_shift


# ---------------------------------------------------------------------------
# Plain-text serialization (layer dims, activations, row-major weights)
# ---------------------------------------------------------------------------


def net_to_text(net: DenseNet) -> str:
    lines = []
    dims = [net.in_dim] + [l.w.shape[1] for l in net.layers]
    lines.append("dims " + " ".join(str(d) for d in dims))
    lines.append("activations " + " ".join(l.activation for l in net.layers))
    for i, layer in enumerate(net.layers):
        lines.append(f"w{i} " + " ".join(format(v, ".17g") for v in layer.w.ravel()))
        lines.append(f"b{i} " + " ".join(format(v, ".17g") for v in layer.b))
    return "\n".join(lines) + "\n"


def net_from_text(text: str) -> DenseNet:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    fields = {r[0]: r[1:] for r in rows}
    dims = [int(v) for v in fields["dims"]]
    acts = fields["activations"]
    layers = []
    for i, (d_in, d_out, act) in enumerate(zip(dims[:-1], dims[1:], acts)):
        w = np.array([float(v) for v in fields[f"w{i}"]]).reshape(d_in, d_out)
        b = np.array([float(v) for v in fields[f"b{i}"]])
        layers.append(Layer(w, b, act))
    return DenseNet(layers)


def minibatch_indices(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle, then contiguous batches; yields index arrays."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
