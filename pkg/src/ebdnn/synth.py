"""Ground-truth targets, synthetic regression data, and architecture sizing.

The data model is ``Y_i = f0(X_i) + noise_sd * Z_i`` with ``X_i`` uniform on
``[0,1]^d`` and ``Z_i`` standard normal.  Everything here is a pure function
of its arguments (including seeds), so datasets are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "TargetKind",
    "TargetFunction",
    "fourier_f1",
    "fourier_f2",
    "bspline_combo",
    "tabulated",
    "eval_target",
    "Dataset",
    "generate_dataset",
    "split_dataset",
    "sieve_dimension",
    "NetShape",
    "network_shape",
]

DEFAULT_TRUNCATION = 1000

# Evaluation of Fourier targets is chunked so that n=50000 points never
# materializes an (n x truncation) matrix larger than ~32 MB.
_EVAL_CHUNK = 4096


class TargetKind(Enum):
    FOURIER_F1 = "fourier_f1"
    FOURIER_F2 = "fourier_f2"
    BSPLINE_COMBO = "bspline_combo"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class TargetFunction:
    """Evaluable ground-truth regression function on [0,1]^d.

    ``payload`` depends on the kind: Fourier targets precompute their
    cosine coefficients, the spline combination stores (order, segments,
    coefficients), and tabulated targets store per-axis grids plus values.
    """

    kind: TargetKind
    dim: int
    truncation: int = DEFAULT_TRUNCATION
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")
        if self.kind in (TargetKind.FOURIER_F1, TargetKind.FOURIER_F2) and self.dim != 1:
            raise ValueError(f"{self.kind.value} requires dim = 1")


def _fourier_coefficients(kind: TargetKind, truncation: int) -> np.ndarray:
    i = np.arange(1, truncation + 1, dtype=np.float64)
    if kind is TargetKind.FOURIER_F1:
        return np.sin(i) / i**1.5
    return np.sin(i**2) / i**1.5


def fourier_f1(truncation: int = DEFAULT_TRUNCATION) -> TargetFunction:
    """Cosine series with coefficients sin(i)/i^1.5, truncated."""
    return TargetFunction(TargetKind.FOURIER_F1, dim=1, truncation=truncation)


def fourier_f2(truncation: int = DEFAULT_TRUNCATION) -> TargetFunction:
    """Cosine series with coefficients sin(i^2)/i^1.5, truncated."""
    return TargetFunction(TargetKind.FOURIER_F2, dim=1, truncation=truncation)


def bspline_combo(order: int, segments: int, coefficients, dim: int = 1) -> TargetFunction:
    """Fixed linear combination of tensor B-splines (exactly representable target)."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    expected = (segments + order - 1) ** dim
    if coefficients.size != expected:
        raise ValueError(
            f"need {expected} coefficients for order={order}, segments={segments}, dim={dim}; "
            f"got {coefficients.size}"
        )
    payload = {"order": order, "segments": segments, "coefficients": coefficients}
    return TargetFunction(TargetKind.BSPLINE_COMBO, dim=dim, payload=payload)


def tabulated(grids, values) -> TargetFunction:
    """Target given by values on a rectangular grid, multilinearly interpolated.

    ``grids`` is a sequence of 1-d sorted arrays (one per axis), ``values`` an
    array of shape ``tuple(len(g) for g in grids)``.
    """
    grids = [np.asarray(g, dtype=np.float64) for g in grids]
    values = np.asarray(values, dtype=np.float64)
    if values.shape != tuple(len(g) for g in grids):
        raise ValueError("values shape must match the grid sizes")
    for g in grids:
        if g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise ValueError("each axis grid must increase strictly from 0 to 1")
    return TargetFunction(
        TargetKind.TABULATED, dim=len(grids), payload={"grids": grids, "values": values}
    )


def _as_points(x, dim: int) -> np.ndarray:
    """Normalize x to an (m, dim) float array; reject wrong dimensions."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar point given for a {dim}-dimensional target")
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.shape[0] == dim:
            arr = arr.reshape(1, dim)
        else:
            raise ValueError(f"point of length {arr.shape[0]} for a {dim}-dimensional target")
    elif arr.ndim == 2:
        if arr.shape[1] != dim:
            raise ValueError(f"points have dimension {arr.shape[1]}, expected {dim}")
    else:
        raise ValueError("points must be scalar, 1-d, or 2-d")
    return arr


def eval_target(f: TargetFunction, x) -> np.ndarray | float:
    """Evaluate the target at x.

    x may be a scalar (d=1), a single point of length d, or an (m, d) array;
    a scalar/point input returns a float, an array input returns a length-m
    array.  Raises ValueError if any coordinate leaves [0,1].
    """
    scalar_in = np.asarray(x).ndim < 2 and not (
        np.asarray(x).ndim == 1 and f.dim == 1 and np.asarray(x).shape[0] != 1
    )
    pts = _as_points(x, f.dim)
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise ValueError("points must lie in [0,1]^d")

    if f.kind in (TargetKind.FOURIER_F1, TargetKind.FOURIER_F2):
        coef = _fourier_coefficients(f.kind, f.truncation)
        freq = np.pi * (np.arange(1, f.truncation + 1, dtype=np.float64) - 0.5)
        x1 = pts[:, 0]
        out = np.empty(x1.shape[0], dtype=np.float64)
        for start in range(0, x1.shape[0], _EVAL_CHUNK):
            block = x1[start : start + _EVAL_CHUNK]
            out[start : start + _EVAL_CHUNK] = np.cos(np.outer(block, freq)) @ coef
        # every cos(pi*(i-1/2)*x) vanishes at x=1; keep that exact in floats
        out[x1 == 1.0] = 0.0
        return float(out[0]) if scalar_in else out

    if f.kind is TargetKind.BSPLINE_COMBO:
        from .bspline import make_bspline_basis

        basis = make_bspline_basis(f.payload["segments"], f.payload["order"], f.dim)
        out = basis.eval_batch(pts) @ f.payload["coefficients"]
        return float(out[0]) if scalar_in else out

    # tabulated: multilinear interpolation on the stored rectangular grid
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(f.payload["grids"], f.payload["values"], method="linear")
    out = interp(pts)
    return float(out[0]) if scalar_in else out


@dataclass(frozen=True)
class Dataset:
    """Immutable regression sample; x has shape (n, dim), y shape (n,)."""

    dim: int
    x: np.ndarray
    y: np.ndarray
    noise_sd: float
    seed: int

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] != self.dim:
            raise ValueError("x must have shape (n, dim)")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("y must have shape (n,)")
        if len(self) < 2:
            raise ValueError("a dataset needs at least 2 points")
        if self.x.size and (self.x.min() < 0.0 or self.x.max() > 1.0):
            raise ValueError("design points must lie in [0,1]^d")
        self.x.setflags(write=False)
        self.y.setflags(write=False)

    def __len__(self) -> int:
        return self.x.shape[0]


def generate_dataset(f: TargetFunction, n: int, noise_sd: float, seed: int) -> Dataset:
    """Draw n design points uniform on [0,1]^d and add Gaussian noise.

    The stream order is fixed (all design points first, then all noise
    variates), so the result is byte-identical across runs for a fixed
    seed.  noise_sd = 0 yields exact function values.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    x = rng.random((n, f.dim))
    z = rng.standard_normal(n)
    y = eval_target(f, x) + noise_sd * z
    return Dataset(dim=f.dim, x=x, y=y, noise_sd=noise_sd, seed=seed)


def split_dataset(data: Dataset) -> tuple[Dataset, Dataset]:
    """Split into the first floor(n/2) pairs and the remainder, in order."""
    n = len(data)
    if n < 4:
        raise ValueError("need at least 4 points to split")
    half = n // 2
    first = Dataset(data.dim, data.x[:half].copy(), data.y[:half].copy(), data.noise_sd, data.seed)
    second = Dataset(data.dim, data.x[half:].copy(), data.y[half:].copy(), data.noise_sd, data.seed)
    return first, second


def sieve_dimension(n: int, d: int, beta: float) -> int:
    """Basis count n^(d/(d+2*beta)), rounded to the nearest integer, at least 1."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if d < 1:
        raise ValueError("d must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    k = int(math.floor(n ** (d / (d + 2.0 * beta)) + 0.5))
    return max(k, 1)


@dataclass(frozen=True)
class NetShape:
    """Layer widths of the regression network; the basis is the last hidden layer."""

    input_width: int
    hidden_widths: tuple[int, ...]
    output_width: int = 1

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("widths must be >= 1")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be a nonempty list of positive integers")

    @property
    def basis_width(self) -> int:
        return self.hidden_widths[-1]

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_width, *self.hidden_widths, self.output_width)


def network_shape(n: int, d: int, beta: float) -> NetShape:
    """Architecture sizing: depth ceil(log2(beta)*log2(n)) hidden layers
    (floored at 2 so a multilayer net is always produced), the first ones of
    width 6k and the last of width k = sieve_dimension(n, d, beta).
    """
    k = sieve_dimension(n, d, beta)
    hidden = max(2, math.ceil(math.log2(beta) * math.log2(n)))
    widths = (6 * k,) * (hidden - 1) + (k,)
    return NetShape(input_width=d, hidden_widths=widths)
