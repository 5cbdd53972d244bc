"""Conjugate Gaussian inference on basis coefficients, credible radii,
pointwise bands, inflation factors, and containment tests.

With a standard-normal prior on the coefficients and Gaussian noise, the
posterior is Normal(m, A^{-1}) with A = Phi' Phi / sigma^2 + I and
A m = Phi' y / sigma^2; everything downstream is computed from draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .basis import BasisSet, Grid
from .synth import Dataset, TargetFunction, eval_target

__all__ = [
    "DesignMatrix",
    "design_matrix",
    "GaussianPosterior",
    "fit_posterior",
    "sample_posterior",
    "draws_from_normals",
    "eval_on_grid",
    "distance",
    "CredibleSummary",
    "credible_radius",
    "INFLATION_KINDS",
    "inflation_factor",
    "pointwise_band",
    "covers",
]

NORMS = ("l2", "sup")
INFLATION_KINDS = ("none", "sqrt_log", "log", "log_cubed")


@dataclass(frozen=True)
class DesignMatrix:
    """Basis functions evaluated at the second-half design points, with the
    empirical Gram Phi' Phi / n2 attached."""

    phi: np.ndarray  # (n2, k)
    empirical_gram: np.ndarray  # (k, k)

    def __post_init__(self):
        self.phi.setflags(write=False)
        self.empirical_gram.setflags(write=False)

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def k(self) -> int:
        return self.phi.shape[1]


def design_matrix(basis: BasisSet, data: Dataset) -> DesignMatrix:
    if basis.dim != data.dim:
        raise ValueError("basis and dataset dimensions differ")
    phi = basis.eval_batch(data.x)
    if not np.isfinite(phi).all():
        raise ArithmeticError("non-finite basis evaluation in the design matrix")
    gram = phi.T @ phi / len(data)
    gram = 0.5 * (gram + gram.T)
    return DesignMatrix(phi=phi, empirical_gram=gram)


@dataclass(frozen=True)
class GaussianPosterior:
    """Normal(mean, precision^{-1}) law on the k basis coefficients."""

    mean: np.ndarray
    precision: np.ndarray
    chol_lower: np.ndarray  # precision = L L'
    noise_sd: float

    def __post_init__(self):
        self.mean.setflags(write=False)
        self.precision.setflags(write=False)
        self.chol_lower.setflags(write=False)

    @property
    def k(self) -> int:
        return self.mean.shape[0]


def fit_posterior(design: DesignMatrix, y: np.ndarray, noise_sd: float) -> GaussianPosterior:
    """Conjugate update under the standard-normal prior on coefficients."""
    if noise_sd <= 0:
        raise ValueError("noise_sd must be > 0")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (design.n,):
        raise ValueError("y must have one entry per design row")
    inv_var = 1.0 / noise_sd**2
    precision = design.phi.T @ design.phi * inv_var + np.eye(design.k)
    precision = 0.5 * (precision + precision.T)
    chol = np.linalg.cholesky(precision)
    rhs = design.phi.T @ y * inv_var
    mean = cho_solve((chol, True), rhs)
    return GaussianPosterior(mean=mean, precision=precision, chol_lower=chol, noise_sd=noise_sd)


def draws_from_normals(post: GaussianPosterior, z: np.ndarray) -> np.ndarray:
    """Map standard normals (S, k) to posterior draws mean + L^{-T} z."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != post.k:
        raise ValueError("z must have shape (S, k)")
    shift = solve_triangular(post.chol_lower, z.T, lower=True, trans="T").T
    return post.mean + shift


def sample_posterior(post: GaussianPosterior, draws: int, seed: int) -> np.ndarray:
    if draws < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    return draws_from_normals(post, rng.standard_normal((draws, post.k)))


def eval_on_grid(basis: BasisSet, theta: np.ndarray, grid: Grid) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (basis.k,):
        raise ValueError(f"theta must have length {basis.k}")
    return basis.eval_batch(grid.points) @ theta


def distance(a: np.ndarray, b: np.ndarray, grid: Grid, norm: str) -> float:
    """L2 (grid quadrature) or sup distance between two curves on the same grid."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.shape != (len(grid),):
        raise ValueError("curves must share the grid")
    diff = a - b
    if norm == "l2":
        return float(np.sqrt(grid.weights @ diff**2))
    if norm == "sup":
        return float(np.max(np.abs(diff)))
    raise ValueError(f"unknown norm {norm!r}")


def _quantile_rank(level: float, count: int) -> int:
    """0-based index of the ceil(level * count)-th smallest order statistic."""
    return max(int(math.ceil(level * count)), 1) - 1


@dataclass(frozen=True)
class CredibleSummary:
    center: np.ndarray
    norm: str
    alpha: float
    radius: float
    inflation_kind: str
    inflation_value: float
    draws_used: int

    @property
    def inflated_radius(self) -> float:
        return self.inflation_value * self.radius


def credible_radius(
    draws: np.ndarray,
    center: np.ndarray,
    basis: BasisSet,
    grid: Grid,
    norm: str,
    alpha: float,
) -> CredibleSummary:
    """Smallest radius whose ball around the center holds >= 1-alpha of the
    draws: the ceil((1-alpha)*S)-th smallest center-to-draw distance."""
    draws = np.asarray(draws, dtype=np.float64)
    n_draws = draws.shape[0]
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0,1)")
    if n_draws < math.ceil(1.0 / alpha):
        raise ValueError("too few draws for the requested alpha")
    phi = basis.eval_batch(grid.points)
    diffs = (draws - center) @ phi.T
    if norm == "l2":
        dists = np.sqrt(diffs**2 @ grid.weights)
    elif norm == "sup":
        dists = np.max(np.abs(diffs), axis=1)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    rank = _quantile_rank(1.0 - alpha, n_draws)
    radius = float(np.partition(dists, rank)[rank])
    return CredibleSummary(
        center=np.asarray(center, dtype=np.float64),
        norm=norm,
        alpha=alpha,
        radius=radius,
        inflation_kind="none",
        inflation_value=1.0,
        draws_used=n_draws,
    )


def inflation_factor(kind: str, n: int) -> float:
    """Multiplicative credible-radius blow-up: 1, sqrt(ln n), ln n, or (ln n)^3."""
    if n < 3:
        raise ValueError("n must be >= 3")
    log_n = math.log(n)
    if kind == "none":
        return 1.0
    if kind == "sqrt_log":
        return math.sqrt(log_n)
    if kind == "log":
        return log_n
    if kind == "log_cubed":
        return log_n**3
    raise ValueError(f"unknown inflation kind {kind!r}")


def pointwise_band(
    draws: np.ndarray, basis: BasisSet, grid: Grid, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid-point empirical alpha/2 and 1-alpha/2 quantiles of the draw curves."""
    draws = np.asarray(draws, dtype=np.float64)
    n_draws = draws.shape[0]
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0,1)")
    if n_draws < math.ceil(2.0 / alpha):
        raise ValueError("too few draws for the requested alpha")
    curves = draws @ basis.eval_batch(grid.points).T
    curves.sort(axis=0)
    lower = curves[_quantile_rank(alpha / 2.0, n_draws)]
    upper = curves[_quantile_rank(1.0 - alpha / 2.0, n_draws)]
    return lower, upper


def covers(
    center: np.ndarray,
    r_inflated: float,
    f0: TargetFunction,
    basis: BasisSet,
    grid: Grid,
    norm: str,
) -> bool:
    """Closed-ball containment: does the inflated ball around the center curve
    contain the true function sampled on the grid?"""
    if r_inflated < 0:
        raise ValueError("radius must be >= 0")
    center_curve = eval_on_grid(basis, center, grid)
    f0_curve = np.asarray(eval_target(f0, grid.points), dtype=np.float64)
    return distance(center_curve, f0_curve, grid, norm) <= r_inflated
