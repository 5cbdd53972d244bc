"""Basis-set abstraction, evaluation grids, and quadrature specifications."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BasisSet", "RescaledBasis", "rescale", "Grid", "default_grid", "QuadSpec"]


class BasisSet:
    """k real-valued functions on [0,1]^d with batch evaluation.

    Subclasses implement ``eval_batch(points) -> (m, k) array``; points are
    (m, d).  Instances are immutable and safe to share across threads.
    """

    k: int
    dim: int

    def eval_batch(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.dim == 1 else pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points must have shape (m, {self.dim})")
        return pts


@dataclass(frozen=True)
class RescaledBasis(BasisSet):
    """A basis multiplied by a scalar factor (e.g. sqrt(k) near-orthonormalization)."""

    inner: BasisSet
    factor: float

    @property
    def k(self) -> int:
        return self.inner.k

    @property
    def dim(self) -> int:
        return self.inner.dim

    def eval_batch(self, points: np.ndarray) -> np.ndarray:
        return self.factor * self.inner.eval_batch(points)


def rescale(basis: BasisSet, factor: float) -> BasisSet:
    return RescaledBasis(inner=basis, factor=float(factor))


@dataclass(frozen=True)
class Grid:
    """Evaluation grid on [0,1]^d with integration weights summing to 1.

    kind is "trapezoid" (tensor composite-trapezoid nodes) or "monte_carlo"
    (uniform points with equal weights).
    """

    points: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,)
    kind: str

    def __post_init__(self):
        if self.points.ndim != 2 or self.weights.shape != (self.points.shape[0],):
            raise ValueError("points must be (m, d) and weights (m,)")
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def _trapezoid_weights(m: int) -> np.ndarray:
    w = np.full(m, 1.0 / (m - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def default_grid(
    d: int,
    points_per_axis: int = 2049,
    tensor_cap: int = 10**6,
    mc_points: int = 10**5,
    mc_seed: int = 0,
) -> Grid:
    """Default distance grid: 2049 points for d=1, tensor grids capped at
    ``tensor_cap`` total points for d <= 3, seeded Monte Carlo beyond.
    """
    if d <= 3:
        per_axis = points_per_axis
        while per_axis**d > tensor_cap:
            per_axis = int(tensor_cap ** (1.0 / d))
        axes = [np.linspace(0.0, 1.0, per_axis)] * d
        w1 = _trapezoid_weights(per_axis)
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        weights = w1
        for _ in range(d - 1):
            weights = np.outer(weights, w1).ravel()
        return Grid(points=points, weights=weights, kind="trapezoid")
    rng = np.random.default_rng(mc_seed)
    points = rng.random((mc_points, d))
    weights = np.full(mc_points, 1.0 / mc_points)
    return Grid(points=points, weights=weights, kind="monte_carlo")


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature request for Gram matrices and L2 projections.

    rule "gauss": composite Gauss-Legendre with nodes_per_interval nodes on
    every knot interval per axis (spline bases only; exact for the piecewise
    polynomials when nodes_per_interval >= order).
    rule "trapezoid": uniform tensor grid with points_per_axis points.
    rule "monte_carlo": uniform random points, seeded.
    """

    rule: str = "auto"
    nodes_per_interval: int | None = None
    points_per_axis: int = 2048
    points: int = 10**5
    seed: int = 0
    budget: int = 10**7

    def __post_init__(self):
        if self.rule not in ("auto", "gauss", "trapezoid", "monte_carlo"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
