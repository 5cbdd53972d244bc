"""Seeded Monte Carlo harness: single end-to-end repetitions, coverage
aggregation across repetitions and inflation factors, contraction-rate
scans, and basis diagnostics.

Repetitions are embarrassingly parallel; every repetition derives its own
RNG streams from (master_seed, n, rep_index) via a fixed 64-bit hash, and
aggregation sorts results by (n, rep_index) before reducing, so reports do
not depend on the worker count or scheduling.
"""

from __future__ import annotations

import dataclasses
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import Grid, QuadSpec, default_grid, rescale
from .bspline import GramMatrix, OrthoReport, gram_matrix, make_bspline_basis, near_orthogonality
from .bspline import _unwrap as _unwrap_basis
from .neuralnet import (
    SparsityReport,
    TrainingDivergence,
    TrainOptions,
    basis_sup_bound,
    check_sparsity,
    extract_basis,
    init_network,
    train,
)
from .posterior import (
    INFLATION_KINDS,
    credible_radius,
    design_matrix,
    distance,
    fit_posterior,
    inflation_factor,
    pointwise_band,
    sample_posterior,
)
from .synth import (
    TargetFunction,
    bspline_combo,
    eval_target,
    fourier_f1,
    fourier_f2,
    generate_dataset,
    network_shape,
    sieve_dimension,
    split_dataset,
)

__all__ = [
    "ConfigError",
    "TargetSpec",
    "DnnMode",
    "OracleMode",
    "ExperimentConfig",
    "RepResult",
    "CoverageCell",
    "CoverageReport",
    "ContractionReport",
    "BasisDiagnostics",
    "mix64",
    "build_target",
    "oracle_segments",
    "run_repetition",
    "run_coverage",
    "contraction_scan",
    "basis_diagnostics",
]

VALID_NORMS = ("l2", "sup", "pointwise")

# Posterior noise level substituted when the data are generated noiselessly
# (the conjugate update needs sigma > 0).
NOISELESS_POSTERIOR_SD = 1e-6


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def mix64(*parts: int) -> int:
    """Deterministic 64-bit hash of integers (splitmix64 finalizer, chained).

    Used to derive per-repetition seeds from (master_seed, n, rep_index);
    the constants are fixed forever so stored results stay reproducible.
    """
    mask = (1 << 64) - 1
    h = 0
    for part in parts:
        h = (h ^ (int(part) & mask)) & mask
        h = (h + 0x9E3779B97F4A7C15) & mask
        h ^= h >> 30
        h = (h * 0xBF58476D1CE4E5B9) & mask
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & mask
        h ^= h >> 31
    return h


@dataclass(frozen=True)
class TargetSpec:
    """Config-level description of the ground-truth function."""

    kind: str = "f1"  # "f1" | "f2" | "bspline_combo"
    truncation: int = 1000
    order: int = 2
    segments: int = 4
    coefficients: tuple[float, ...] | None = None

    def validate(self, d: int) -> None:
        if self.kind not in ("f1", "f2", "bspline_combo"):
            raise ConfigError(f"target.kind: unknown kind {self.kind!r}")
        if self.truncation < 1:
            raise ConfigError("target.truncation: must be >= 1")
        if self.kind in ("f1", "f2") and d != 1:
            raise ConfigError(f"target.kind: {self.kind} requires d = 1")
        if self.kind == "bspline_combo":
            if self.coefficients is None:
                raise ConfigError("target.coefficients: required for bspline_combo")
            expected = (self.segments + self.order - 1) ** d
            if len(self.coefficients) != expected:
                raise ConfigError(f"target.coefficients: expected {expected} values")


def build_target(spec: TargetSpec, d: int) -> TargetFunction:
    spec.validate(d)
    if spec.kind == "f1":
        return fourier_f1(spec.truncation)
    if spec.kind == "f2":
        return fourier_f2(spec.truncation)
    return bspline_combo(spec.order, spec.segments, np.asarray(spec.coefficients), dim=d)


@dataclass(frozen=True)
class DnnMode:
    """Train a network on the first half and reuse its last hidden layer."""

    kind: str = "dnn"
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    clip_sup: float | None = None

    def validate(self) -> None:
        if self.kind != "dnn":
            raise ConfigError("basis_mode.kind: expected 'dnn'")
        if self.epochs < 1:
            raise ConfigError("basis_mode.epochs: must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("basis_mode.batch_size: must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("basis_mode.learning_rate: must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("basis_mode.optimizer: must be 'sgd' or 'adam'")


@dataclass(frozen=True)
class OracleMode:
    """Deterministic sqrt(k)-rescaled B-spline basis instead of a trained net;
    isolates the posterior and coverage machinery from training noise."""

    kind: str = "bspline_oracle"
    order: int = 2

    def validate(self) -> None:
        if self.kind != "bspline_oracle":
            raise ConfigError("basis_mode.kind: expected 'bspline_oracle'")
        if self.order < 1:
            raise ConfigError("basis_mode.order: must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetSpec = field(default_factory=TargetSpec)
    n_values: tuple[int, ...] = (1000,)
    reps: int = 100
    master_seed: int = 0
    beta: float = 1.0
    d: int = 1
    noise_sd: float = 1.0
    alpha: float = 0.05
    norms: tuple[str, ...] = ("l2",)
    inflations: tuple[str, ...] = ("none", "sqrt_log", "log", "log_cubed")
    draws: int = 2000
    basis_mode: DnnMode | OracleMode = field(default_factory=DnnMode)
    threads: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d: must be >= 1")
        self.target.validate(self.d)
        if not self.n_values or any(n < 8 for n in self.n_values):
            raise ConfigError("n_values: need at least one value, all >= 8")
        if self.reps < 1:
            raise ConfigError("reps: must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha: must lie in (0,1)")
        if self.beta <= 0:
            raise ConfigError("beta: must be > 0")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd: must be >= 0")
        if not self.norms or any(n not in VALID_NORMS for n in self.norms):
            raise ConfigError(f"norms: must be a nonempty subset of {VALID_NORMS}")
        if not self.inflations or any(i not in INFLATION_KINDS for i in self.inflations):
            raise ConfigError(f"inflations: must be a nonempty subset of {INFLATION_KINDS}")
        if self.draws < math.ceil(2.0 / self.alpha):
            raise ConfigError("draws: need at least ceil(2/alpha) posterior draws")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        self.basis_mode.validate()


@dataclass(frozen=True)
class RepResult:
    """Everything measured in one end-to-end repetition."""

    rep_index: int
    n: int
    dist_to_f0: dict
    dist_to_fstar: dict
    radius: dict
    covered: dict  # (norm, inflation) -> bool
    train_final_mse: float | None
    gram_lambda_min: float
    gram_lambda_max: float


def oracle_segments(k: int, q: int, d: int) -> int:
    """Smallest segment count J with (J+q-1)^d >= k."""
    J = 1
    while (J + q - 1) ** d < k:
        J += 1
    return J


def _build_basis(cfg: ExperimentConfig, n: int, data1, net_seed: int, train_seed: int):
    """Returns (basis, train_final_mse or None)."""
    mode = cfg.basis_mode
    if isinstance(mode, OracleMode):
        k = sieve_dimension(n, cfg.d, cfg.beta)
        J = oracle_segments(k, mode.order, cfg.d)
        raw = make_bspline_basis(J, mode.order, cfg.d)
        return rescale(raw, math.sqrt(raw.k)), None
    shape = network_shape(n, cfg.d, cfg.beta)
    net = init_network(shape, net_seed)
    opts = TrainOptions(
        epochs=mode.epochs,
        batch_size=min(mode.batch_size, len(data1)),
        learning_rate=mode.learning_rate,
        optimizer=mode.optimizer,
        seed=train_seed,
        clip_sup=mode.clip_sup,
    )
    trained, trace = train(net, data1, opts)
    return extract_basis(trained), trace[-1]


def _grid_for(cfg: ExperimentConfig) -> Grid:
    return default_grid(cfg.d, mc_seed=mix64(cfg.master_seed, 997))


def _project_on_grid(phi_grid: np.ndarray, weights: np.ndarray, f0_curve: np.ndarray) -> np.ndarray:
    """Population-L2 projection of f0 in the grid inner product; least-squares
    solve so dead (identically zero) basis functions are tolerated."""
    gram = phi_grid.T @ (weights[:, None] * phi_grid)
    gram = 0.5 * (gram + gram.T)
    moments = phi_grid.T @ (weights * f0_curve)
    theta, *_ = np.linalg.lstsq(gram, moments, rcond=None)
    return theta


def run_repetition(cfg: ExperimentConfig, n: int, rep_index: int) -> RepResult:
    """One end-to-end pass: data, split, basis, posterior, draws, radii,
    distances, and containment per (norm, inflation)."""
    rep_seed = mix64(cfg.master_seed, n, rep_index)
    data_seed = mix64(rep_seed, 1)
    net_seed = mix64(rep_seed, 2)
    train_seed = mix64(rep_seed, 3)
    draw_seed = mix64(rep_seed, 4)

    target = build_target(cfg.target, cfg.d)
    data = generate_dataset(target, n, cfg.noise_sd, data_seed)
    data1, data2 = split_dataset(data)
    basis, train_final_mse = _build_basis(cfg, n, data1, net_seed, train_seed)

    sigma = cfg.noise_sd if cfg.noise_sd > 0 else NOISELESS_POSTERIOR_SD
    design = design_matrix(basis, data2)
    post = fit_posterior(design, data2.y, sigma)
    draws = sample_posterior(post, cfg.draws, draw_seed)

    grid = _grid_for(cfg)
    phi_grid = basis.eval_batch(grid.points)
    center_curve = phi_grid @ post.mean
    f0_curve = np.asarray(eval_target(target, grid.points), dtype=np.float64)
    theta_star = _project_on_grid(phi_grid, grid.weights, f0_curve)
    fstar_curve = phi_grid @ theta_star

    dist_to_f0 = {}
    dist_to_fstar = {}
    radius = {}
    covered = {}
    for norm in cfg.norms:
        dist_norm = "sup" if norm == "pointwise" else norm
        dist_to_f0[norm] = distance(center_curve, f0_curve, grid, dist_norm)
        dist_to_fstar[norm] = distance(center_curve, fstar_curve, grid, dist_norm)
        if norm == "pointwise":
            lower, upper = pointwise_band(draws, basis, grid, cfg.alpha)
            radius[norm] = float(np.mean(0.5 * (upper - lower)))
            for kind in cfg.inflations:
                factor = inflation_factor(kind, n)
                lo = center_curve + factor * (lower - center_curve)
                up = center_curve + factor * (upper - center_curve)
                covered[(norm, kind)] = bool(np.all((lo <= f0_curve) & (f0_curve <= up)))
        else:
            summary = credible_radius(draws, post.mean, basis, grid, norm, cfg.alpha)
            radius[norm] = summary.radius
            for kind in cfg.inflations:
                factor = inflation_factor(kind, n)
                covered[(norm, kind)] = dist_to_f0[norm] <= factor * summary.radius

    # Gram spectrum of the realized basis on the distance grid (the harness
    # diagnostic; basis_diagnostics offers the exact-quadrature version).
    gram = phi_grid.T @ (grid.weights[:, None] * phi_grid)
    gram = 0.5 * (gram + gram.T)
    eigs = np.linalg.eigvalsh(gram)

    return RepResult(
        rep_index=rep_index,
        n=n,
        dist_to_f0=dist_to_f0,
        dist_to_fstar=dist_to_fstar,
        radius=radius,
        covered=covered,
        train_final_mse=train_final_mse,
        gram_lambda_min=float(eigs[0]),
        gram_lambda_max=float(eigs[-1]),
    )


def _rep_task(task):
    cfg, n, rep_index = task
    try:
        return (n, rep_index, "ok", run_repetition(cfg, n, rep_index))
    except (TrainingDivergence, ArithmeticError):
        return (n, rep_index, "failed", None)


def _run_tasks(tasks, threads: int):
    if threads <= 1:
        return [_rep_task(t) for t in tasks]
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
        chunk = max(1, len(tasks) // (4 * threads))
        return list(pool.map(_rep_task, tasks, chunksize=chunk))


@dataclass(frozen=True)
class CoverageCell:
    n: int
    norm: str
    inflation: str
    coverage: float
    mean_dist: float
    sd_dist: float
    mean_radius: float
    sd_radius: float
    reps_used: int
    failures: int


@dataclass(frozen=True)
class CoverageReport:
    cells: tuple[CoverageCell, ...]
    config: ExperimentConfig
    runtime_seconds: float  # informational; never serialized (outputs must be pure)


def _mean_sd(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, sd


def run_coverage(cfg: ExperimentConfig) -> CoverageReport:
    """Run reps x |n_values| repetitions and aggregate per (n, norm, inflation).

    Results are sorted by (n, rep_index) before reduction, so the report is a
    pure function of the config regardless of thread count or scheduling.
    Diverged repetitions are excluded from the statistics and counted.
    """
    start = time.perf_counter()
    tasks = [(cfg, n, r) for n in cfg.n_values for r in range(cfg.reps)]
    outcomes = sorted(_run_tasks(tasks, cfg.threads), key=lambda t: (t[0], t[1]))

    cells = []
    for n in cfg.n_values:
        ok = [res for (tn, _, status, res) in outcomes if tn == n and status == "ok"]
        failures = cfg.reps - len(ok)
        if not ok:
            raise RuntimeError(f"all {cfg.reps} repetitions failed for n={n}")
        for norm in cfg.norms:
            mean_dist, sd_dist = _mean_sd([r.dist_to_f0[norm] for r in ok])
            mean_radius, sd_radius = _mean_sd([r.radius[norm] for r in ok])
            for kind in cfg.inflations:
                coverage = float(np.mean([r.covered[(norm, kind)] for r in ok]))
                cells.append(
                    CoverageCell(
                        n=n,
                        norm=norm,
                        inflation=kind,
                        coverage=coverage,
                        mean_dist=mean_dist,
                        sd_dist=sd_dist,
                        mean_radius=mean_radius,
                        sd_radius=sd_radius,
                        reps_used=len(ok),
                        failures=failures,
                    )
                )
    runtime = time.perf_counter() - start
    return CoverageReport(cells=tuple(cells), config=cfg, runtime_seconds=runtime)


@dataclass(frozen=True)
class ContractionReport:
    n_values: tuple[int, ...]
    mean_l2: tuple[float, ...]
    sd_l2: tuple[float, ...]
    reps_used: tuple[int, ...]
    failures: tuple[int, ...]
    slope: float | None
    degenerate: bool
    config: ExperimentConfig
    runtime_seconds: float


def contraction_scan(cfg: ExperimentConfig) -> ContractionReport:
    """Least-squares slope of log mean L2 error against log n."""
    if len(set(cfg.n_values)) < 3:
        raise ConfigError("n_values: contraction scan needs >= 3 distinct values")
    if "l2" not in cfg.norms:
        cfg = dataclasses.replace(cfg, norms=("l2",) + cfg.norms)
    start = time.perf_counter()
    report = run_coverage(cfg)
    first_inflation = cfg.inflations[0]
    means, sds, used, fails = [], [], [], []
    for n in cfg.n_values:
        cell = next(
            c for c in report.cells if c.n == n and c.norm == "l2" and c.inflation == first_inflation
        )
        means.append(cell.mean_dist)
        sds.append(cell.sd_dist)
        used.append(cell.reps_used)
        fails.append(cell.failures)
    degenerate = any(m < 1e-8 for m in means)
    slope = None
    if not degenerate:
        slope = float(np.polyfit(np.log(np.asarray(cfg.n_values, dtype=float)), np.log(means), 1)[0])
    return ContractionReport(
        n_values=tuple(cfg.n_values),
        mean_l2=tuple(means),
        sd_l2=tuple(sds),
        reps_used=tuple(used),
        failures=tuple(fails),
        slope=slope,
        degenerate=degenerate,
        config=cfg,
        runtime_seconds=time.perf_counter() - start,
    )


@dataclass(frozen=True)
class BasisDiagnostics:
    ortho: OrthoReport
    sup_bound: float
    k: int
    sparsity: SparsityReport | None


def basis_diagnostics(
    cfg: ExperimentConfig, n: int, rep_index: int, c1: float = 0.1, c2: float = 10.0
) -> BasisDiagnostics:
    """Structural checks on the repetition's realized basis: eigenvalue range
    of the sqrt(k)-rescaled Gram (exact quadrature for spline bases, dense
    grid otherwise), the sup-norm certificate of the raw basis, and a
    sparsity report in network mode.  Failing near-orthogonality is recorded,
    never rejected.
    """
    rep_seed = mix64(cfg.master_seed, n, rep_index)
    data_seed = mix64(rep_seed, 1)
    net_seed = mix64(rep_seed, 2)
    train_seed = mix64(rep_seed, 3)
    target = build_target(cfg.target, cfg.d)
    data = generate_dataset(target, n, cfg.noise_sd, data_seed)
    data1, _ = split_dataset(data)
    basis, _ = _build_basis(cfg, n, data1, net_seed, train_seed)

    gram = gram_matrix(basis, QuadSpec())
    inner, factor = _unwrap_basis(basis)
    scale = basis.k / factor**2  # spectrum of the sqrt(k)-rescaled raw basis
    rescaled = GramMatrix(matrix=gram.matrix * scale, rule=gram.rule, node_count=gram.node_count)
    ortho = near_orthogonality(rescaled, c1, c2)

    grid = _grid_for(cfg)
    sup_bound = basis_sup_bound(inner, grid.points)

    sparsity = None
    if isinstance(cfg.basis_mode, DnnMode):
        s_bound = int(round(basis.k * math.log(n)))
        sparsity = check_sparsity(inner.net, s_bound)
    return BasisDiagnostics(ortho=ortho, sup_bound=sup_bound, k=basis.k, sparsity=sparsity)
