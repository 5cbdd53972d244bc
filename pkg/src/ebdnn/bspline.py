"""Clamped cardinal B-splines on [0,1], tensor products, Gram matrices,
near-orthogonality diagnostics, and L2 projection.

Order q splines on J equispaced segments give J+q-1 basis functions per
axis.  The knot vector repeats 0 and 1 q times each; evaluation uses the
Cox-de Boor recursion with the 0/0 = 0 convention, and x = 1 is assigned
to the last segment so the basis covers the closed interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, QuadSpec, RescaledBasis

__all__ = [
    "Knots",
    "knot_vector",
    "eval_bspline_1d",
    "BSplineBasis",
    "make_bspline_basis",
    "GramMatrix",
    "gram_matrix",
    "OrthoReport",
    "near_orthogonality",
    "project_l2",
]

MAX_BASIS_SIZE = 10**6


@dataclass(frozen=True)
class Knots:
    """Clamped equispaced knot vector: q copies of 0, interior knots i/J, q copies of 1."""

    J: int
    q: int
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n_basis(self) -> int:
        return self.J + self.q - 1


def knot_vector(J: int, q: int) -> Knots:
    if J < 1 or q < 1:
        raise ValueError("J and q must be >= 1")
    idx = np.arange(J + 2 * q - 1, dtype=np.float64) - (q - 1)
    values = np.clip(idx / J, 0.0, 1.0)
    return Knots(J=J, q=q, values=values)


def _eval_all_1d(knots: Knots, x: np.ndarray) -> np.ndarray:
    """Evaluate all J+q-1 basis functions at the points x; returns (m, J+q-1)."""
    t = knots.values
    nx = x.shape[0]
    nslots = t.shape[0] - 1
    level = np.zeros((nx, nslots))
    np.greater_equal(x[:, None], t[None, :-1], out=level)
    level *= x[:, None] < t[None, 1:]
    at_right = x == 1.0
    if np.any(at_right):
        level[at_right, :] = 0.0
        level[at_right, nslots - knots.q] = 1.0  # last nonempty segment, closed on the right
    for p in range(1, knots.q):
        width = nslots - p
        denom_l = t[p : p + width] - t[:width]
        denom_r = t[p + 1 : p + 1 + width] - t[1 : 1 + width]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(denom_l > 0, (x[:, None] - t[:width]) / denom_l, 0.0)
            right = np.where(denom_r > 0, (t[p + 1 : p + 1 + width] - x[:, None]) / denom_r, 0.0)
        level = left * level[:, :width] + right * level[:, 1 : 1 + width]
    return level


def eval_bspline_1d(knots: Knots, j: int, x) -> float | np.ndarray:
    """Value of the j-th basis function (0-based, 0 <= j < J+q-1) at x in [0,1]."""
    if not 0 <= j < knots.n_basis:
        raise IndexError(f"basis index {j} out of range [0, {knots.n_basis})")
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("x must lie in [0,1]")
    vals = _eval_all_1d(knots, arr)[:, j]
    return float(vals[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else vals


@dataclass(frozen=True)
class BSplineBasis(BasisSet):
    """Tensor-product B-spline basis; flattened multi-indices in row-major order."""

    axes: tuple[Knots, ...]

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def k(self) -> int:
        out = 1
        for kn in self.axes:
            out *= kn.n_basis
        return out

    def eval_batch(self, points: np.ndarray) -> np.ndarray:
        pts = self._check_points(points)
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("points must lie in [0,1]^d")
        out = _eval_all_1d(self.axes[0], pts[:, 0])
        for axis in range(1, self.dim):
            nxt = _eval_all_1d(self.axes[axis], pts[:, axis])
            out = (out[:, :, None] * nxt[:, None, :]).reshape(pts.shape[0], -1)
        return out


def make_bspline_basis(J: int, q: int, d: int) -> BSplineBasis:
    if d < 1:
        raise ValueError("d must be >= 1")
    if (J + q - 1) ** d > MAX_BASIS_SIZE:
        raise ValueError(f"basis size (J+q-1)^d exceeds {MAX_BASIS_SIZE}")
    kn = knot_vector(J, q)
    return BSplineBasis(axes=(kn,) * d)


@dataclass(frozen=True)
class GramMatrix:
    """Pairwise L2 inner products of a basis, with the quadrature that built it."""

    matrix: np.ndarray
    rule: str
    node_count: int

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def _unwrap(basis: BasisSet) -> tuple[BasisSet, float]:
    factor = 1.0
    while isinstance(basis, RescaledBasis):
        factor *= basis.factor
        basis = basis.inner
    return basis, factor


def _gauss_axis_nodes(knots: Knots, nodes_per_interval: int) -> tuple[np.ndarray, np.ndarray]:
    ref_x, ref_w = np.polynomial.legendre.leggauss(nodes_per_interval)
    edges = np.linspace(0.0, 1.0, knots.J + 1)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    nodes = (a[:, None] + half[:, None] * (ref_x[None, :] + 1.0)).ravel()
    weights = (half[:, None] * ref_w[None, :]).ravel()
    return nodes, weights


def quadrature_points(basis: BasisSet, quad: QuadSpec) -> tuple[np.ndarray, np.ndarray, str]:
    """Resolve a QuadSpec against a basis: returns (points (m,d), weights, rule name).

    "auto" picks composite Gauss-Legendre for (possibly rescaled) spline bases,
    tensor trapezoid for other bases with d <= 3, and Monte Carlo beyond.
    """
    inner, _ = _unwrap(basis)
    rule = quad.rule
    if rule == "auto":
        if isinstance(inner, BSplineBasis):
            rule = "gauss"
        elif basis.dim <= 3:
            rule = "trapezoid"
        else:
            rule = "monte_carlo"

    if rule == "gauss":
        if not isinstance(inner, BSplineBasis):
            raise ValueError("gauss quadrature requires a (rescaled) B-spline basis")
        if basis.dim > 3:
            raise ValueError("tensor quadrature supports dim <= 3; use monte_carlo")
        per_axis = []
        for kn in inner.axes:
            g = quad.nodes_per_interval if quad.nodes_per_interval is not None else kn.q
            per_axis.append(_gauss_axis_nodes(kn, g))
        total = int(np.prod([len(n) for n, _ in per_axis]))
        if total > quad.budget:
            raise ValueError(f"quadrature budget exceeded: {total} > {quad.budget}")
        pts = per_axis[0][0][:, None]
        wts = per_axis[0][1]
        for nodes, w in per_axis[1:]:
            m0, m1 = pts.shape[0], nodes.shape[0]
            pts = np.concatenate(
                [np.repeat(pts, m1, axis=0), np.tile(nodes, m0)[:, None]], axis=1
            )
            wts = np.outer(wts, w).ravel()
        return pts, wts, "gauss"

    if rule == "trapezoid":
        if basis.dim > 3:
            raise ValueError("tensor quadrature supports dim <= 3; use monte_carlo")
        m = quad.points_per_axis
        if m**basis.dim > quad.budget:
            raise ValueError(f"quadrature budget exceeded: {m**basis.dim} > {quad.budget}")
        axis = np.linspace(0.0, 1.0, m)
        w1 = np.full(m, 1.0 / (m - 1))
        w1[0] *= 0.5
        w1[-1] *= 0.5
        mesh = np.meshgrid(*([axis] * basis.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        wts = w1
        for _ in range(basis.dim - 1):
            wts = np.outer(wts, w1).ravel()
        return pts, wts, "trapezoid"

    if quad.points > quad.budget:
        raise ValueError(f"quadrature budget exceeded: {quad.points} > {quad.budget}")
    rng = np.random.default_rng(quad.seed)
    pts = rng.random((quad.points, basis.dim))
    wts = np.full(quad.points, 1.0 / quad.points)
    return pts, wts, "monte_carlo"


def gram_matrix(basis: BasisSet, quad: QuadSpec = QuadSpec()) -> GramMatrix:
    """Matrix of integrals of phi_i * phi_j over [0,1]^d under the given quadrature."""
    pts, wts, rule = quadrature_points(basis, quad)
    phi = basis.eval_batch(pts)
    g = phi.T @ (wts[:, None] * phi)
    g = 0.5 * (g + g.T)
    return GramMatrix(matrix=g, rule=rule, node_count=len(wts))


@dataclass(frozen=True)
class OrthoReport:
    """Eigenvalue range of a Gram matrix against requested bounds [c1, c2]."""

    lambda_min: float
    lambda_max: float
    c1: float
    c2: float

    @property
    def passes(self) -> bool:
        return self.c1 <= self.lambda_min and self.lambda_max <= self.c2


def near_orthogonality(gram: GramMatrix, c1: float, c2: float) -> OrthoReport:
    if not 0 < c1 < c2:
        raise ValueError("need 0 < c1 < c2")
    g = gram.matrix
    if not np.allclose(g, g.T, atol=1e-9, rtol=0.0):
        raise ValueError("Gram matrix must be symmetric")
    eigs = np.linalg.eigvalsh(g)
    return OrthoReport(lambda_min=float(eigs[0]), lambda_max=float(eigs[-1]), c1=c1, c2=c2)


def project_l2(
    target,
    basis: BasisSet,
    quad: QuadSpec = QuadSpec(),
    singular: str = "error",
) -> tuple[np.ndarray, float]:
    """L2-project a target function onto the span of the basis.

    Solves Gram @ theta = (integrals of f * phi_j), with the Gram and the
    moment integrals under the same quadrature, and returns (theta, residual
    norm).  singular="error" rejects Gram matrices with lambda_min <= 1e-10;
    singular="lstsq" falls back to a minimum-norm least-squares solve (needed
    when the basis contains dead, identically-zero functions).
    """
    from .synth import eval_target

    pts, wts, _ = quadrature_points(basis, quad)
    phi = basis.eval_batch(pts)
    gram = phi.T @ (wts[:, None] * phi)
    gram = 0.5 * (gram + gram.T)
    fvals = np.asarray(eval_target(target, pts), dtype=np.float64)
    moments = phi.T @ (wts * fvals)

    if singular == "error":
        lam_min = float(np.linalg.eigvalsh(gram)[0])
        if lam_min <= 1e-10:
            raise np.linalg.LinAlgError(f"Gram matrix numerically singular (lambda_min={lam_min:.3e})")
        theta = np.linalg.solve(gram, moments)
    elif singular == "lstsq":
        theta, *_ = np.linalg.lstsq(gram, moments, rcond=None)
    else:
        raise ValueError("singular must be 'error' or 'lstsq'")

    gap = fvals - phi @ theta
    return theta, float(np.sqrt(max(float(wts @ gap**2), 0.0)))
