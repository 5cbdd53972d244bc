"""Dense ReLU feedforward network trained by minibatch gradient descent.

The network is the basis factory: after training on the first half of the
data, the last hidden layer is cut off and its unit activations become the
regression basis functions.  Weights follow the convention W[i] of shape
(width_out, width_in); the final linear map carries no bias and no
activation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet
from .synth import Dataset, NetShape

__all__ = [
    "Network",
    "TrainOptions",
    "TrainingDivergence",
    "init_network",
    "forward",
    "forward_batch",
    "train",
    "DnnBasis",
    "extract_basis",
    "SparsityReport",
    "check_sparsity",
    "basis_sup_bound",
    "save_network",
    "load_network",
]

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Network:
    """ReLU net parameters; weights[i] has shape (widths[i+1], widths[i])."""

    shape: NetShape
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        widths = self.shape.widths
        if len(self.weights) != len(widths) - 1:
            raise ValueError("need one weight matrix per layer")
        if len(self.biases) != len(widths) - 2:
            raise ValueError("biases exist for hidden layers only")
        for i, w in enumerate(self.weights):
            if w.shape != (widths[i + 1], widths[i]):
                raise ValueError(f"weight {i} has shape {w.shape}, expected {(widths[i+1], widths[i])}")
            w.setflags(write=False)
        for i, b in enumerate(self.biases):
            if b.shape != (widths[i + 1],):
                raise ValueError(f"bias {i} has shape {b.shape}, expected {(widths[i+1],)}")
            b.setflags(write=False)
        if not all(np.isfinite(w).all() for w in self.weights) or not all(
            np.isfinite(b).all() for b in self.biases
        ):
            raise ValueError("network parameters must be finite")

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass(frozen=True)
class TrainOptions:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "sgd" or "adam"
    seed: int = 0
    clip_sup: float | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")


class TrainingDivergence(RuntimeError):
    """Raised when the training loss becomes non-finite; carries the trace so far."""

    def __init__(self, trace: list[float]):
        super().__init__("training diverged (non-finite loss)")
        self.trace = trace


def init_network(shape: NetShape, seed: int) -> Network:
    """He-style initialization: zero-mean normals scaled by sqrt(2/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    widths = shape.widths
    weights = []
    biases = []
    for i in range(len(widths) - 1):
        fan_in = widths[i]
        weights.append(rng.standard_normal((widths[i + 1], fan_in)) * np.sqrt(2.0 / fan_in))
        if i < len(widths) - 2:
            biases.append(np.zeros(widths[i + 1]))
    return Network(shape=shape, weights=tuple(weights), biases=tuple(biases))


def _forward_arrays(weights, biases, x: np.ndarray):
    """Batch pass returning the output and every post-activation (input included)."""
    activations = [x]
    a = x
    for i in range(len(weights) - 1):
        a = np.maximum(a @ weights[i].T + biases[i], 0.0)
        activations.append(a)
    out = (a @ weights[-1].T).ravel()
    return out, activations


def forward_batch(net: Network, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the net on (m, d) points; returns (outputs (m,), last hidden (m, k))."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if net.shape.input_width == 1 else pts.reshape(1, -1)
    if pts.shape[1] != net.shape.input_width:
        raise ValueError(f"points must have dimension {net.shape.input_width}")
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise ValueError("points must lie in [0,1]^d")
    out, acts = _forward_arrays(net.weights, net.biases, pts)
    hidden = acts[-1]
    if not (np.isfinite(out).all() and np.isfinite(hidden).all()):
        raise ArithmeticError("non-finite values in forward pass")
    return out, hidden


def forward(net: Network, x) -> tuple[float, np.ndarray]:
    """Single-point evaluation: (scalar output, last-hidden vector of length k)."""
    pts = np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(1, -1)
    out, hidden = forward_batch(net, pts)
    return float(out[0]), hidden[0]


def mse_loss_and_grads(weights, biases, x, y, clip_sup=None):
    """Mean-squared-error loss and its gradients by backpropagation.

    Returns (loss, weight grads, bias grads) with the same structure as the
    parameters.  With clip_sup set, predictions are clamped to [-F, F] and
    clamped examples contribute zero gradient.
    """
    out, acts = _forward_arrays(weights, biases, x)
    n = y.shape[0]
    if clip_sup is not None:
        pred = np.clip(out, -clip_sup, clip_sup)
        resid = pred - y
        dout = 2.0 * resid * (np.abs(out) < clip_sup) / n
    else:
        resid = out - y
        dout = 2.0 * resid / n
    loss = float(np.mean(resid**2))

    n_layers = len(weights)
    grads_w = [None] * n_layers
    grads_b = [None] * (n_layers - 1)
    delta = dout[:, None]
    grads_w[-1] = delta.T @ acts[-1]
    upstream = delta @ weights[-1]
    for i in range(n_layers - 2, -1, -1):
        dz = upstream * (acts[i + 1] > 0)
        grads_w[i] = dz.T @ acts[i]
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            upstream = dz @ weights[i]
    return loss, grads_w, grads_b


def _full_mse(weights, biases, x, y, clip_sup=None) -> float:
    out, _ = _forward_arrays(weights, biases, x)
    if clip_sup is not None:
        out = np.clip(out, -clip_sup, clip_sup)
    return float(np.mean((out - y) ** 2))


def train(net: Network, data: Dataset, opts: TrainOptions) -> tuple[Network, list[float]]:
    """Minibatch gradient descent on the MSE; returns the trained net and the
    per-epoch training-loss trace.

    The shuffle stream is seeded by opts.seed and batches run serially (the
    final partial batch included), so the trace is reproducible byte for
    byte.  A non-finite loss aborts with TrainingDivergence carrying the
    trace accumulated so far.
    """
    if len(data) < opts.batch_size:
        raise ValueError("batch_size exceeds the training set size")
    if data.dim != net.shape.input_width:
        raise ValueError("dataset dimension does not match the network input width")
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    rng = np.random.default_rng(opts.seed)
    x, y = data.x, data.y
    n = len(data)

    adam_m = adam_v = None
    if opts.optimizer == "adam":
        adam_m = [np.zeros_like(p) for p in weights + biases]
        adam_v = [np.zeros_like(p) for p in weights + biases]
    step = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    trace: list[float] = []
    for _ in range(opts.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, opts.batch_size):
            idx = perm[start : start + opts.batch_size]
            loss, gw, gb = mse_loss_and_grads(weights, biases, x[idx], y[idx], opts.clip_sup)
            if not np.isfinite(loss):
                raise TrainingDivergence(trace)
            params = weights + biases
            grads = gw + gb
            if opts.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= opts.learning_rate * g
            else:
                step += 1
                corr1 = 1.0 - beta1**step
                corr2 = 1.0 - beta2**step
                for j, (p, g) in enumerate(zip(params, grads)):
                    adam_m[j] = beta1 * adam_m[j] + (1.0 - beta1) * g
                    adam_v[j] = beta2 * adam_v[j] + (1.0 - beta2) * g**2
                    p -= opts.learning_rate * (adam_m[j] / corr1) / (np.sqrt(adam_v[j] / corr2) + eps)
        epoch_loss = _full_mse(weights, biases, x, y, opts.clip_sup)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergence(trace)
        trace.append(epoch_loss)

    trained = Network(shape=net.shape, weights=tuple(weights), biases=tuple(biases))
    return trained, trace


@dataclass(frozen=True)
class DnnBasis(BasisSet):
    """Basis functions computed by the last hidden layer of a network."""

    net: Network

    @property
    def k(self) -> int:
        return self.net.shape.basis_width

    @property
    def dim(self) -> int:
        return self.net.shape.input_width

    def eval_batch(self, points: np.ndarray) -> np.ndarray:
        _, hidden = forward_batch(self.net, self._check_points(points))
        return hidden


def extract_basis(net: Network) -> DnnBasis:
    """Cut off the output layer; the last hidden layer becomes the basis."""
    return DnnBasis(net=net)


@dataclass(frozen=True)
class SparsityReport:
    nonzero_count: int
    max_abs_param: float
    s_bound: int

    @property
    def is_s_sparse(self) -> bool:
        return self.nonzero_count <= self.s_bound and self.max_abs_param <= 1.0


def check_sparsity(net: Network, s_bound: int) -> SparsityReport:
    """Exact-zero parameter count and sup-norm, judged against the sparsity budget."""
    params = list(net.weights) + list(net.biases)
    nonzero = int(sum(np.count_nonzero(p) for p in params))
    max_abs = float(max(np.max(np.abs(p)) for p in params))
    return SparsityReport(nonzero_count=nonzero, max_abs_param=max_abs, s_bound=s_bound)


def basis_sup_bound(basis: BasisSet, grid_points: np.ndarray) -> float:
    """max over the grid of sum_j |phi_j(x)|: the sup-norm certificate for
    coefficient vectors in the unit sup-ball."""
    pts = np.asarray(grid_points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("grid must be nonempty")
    vals = basis.eval_batch(pts)
    return float(np.max(np.sum(np.abs(vals), axis=1)))


def save_network(net: Network, path) -> None:
    """Checkpoint: npz archive with a format-version field, the layer widths,
    and one array per weight matrix / bias vector."""
    payload = {
        "format_version": np.int64(CHECKPOINT_FORMAT_VERSION),
        "input_width": np.int64(net.shape.input_width),
        "hidden_widths": np.asarray(net.shape.hidden_widths, dtype=np.int64),
        "output_width": np.int64(net.shape.output_width),
    }
    for i, w in enumerate(net.weights):
        payload[f"weight_{i}"] = w
    for i, b in enumerate(net.biases):
        payload[f"bias_{i}"] = b
    np.savez(path, **payload)


def load_network(path) -> Network:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        shape = NetShape(
            input_width=int(data["input_width"]),
            hidden_widths=tuple(int(w) for w in data["hidden_widths"]),
            output_width=int(data["output_width"]),
        )
        n_layers = len(shape.widths) - 1
        weights = tuple(data[f"weight_{i}"] for i in range(n_layers))
        biases = tuple(data[f"bias_{i}"] for i in range(n_layers - 1))
    return Network(shape=shape, weights=weights, biases=biases)
