"""Two-step empirical Bayes regression: train a ReLU network on half the
data, reuse its last hidden layer as a basis, and fit a conjugate Gaussian
posterior on the other half; includes a B-spline oracle basis and a
frequentist-coverage simulation harness."""

from .basis import BasisSet, Grid, QuadSpec, RescaledBasis, default_grid, rescale
from .bspline import (
    BSplineBasis,
    GramMatrix,
    Knots,
    OrthoReport,
    eval_bspline_1d,
    gram_matrix,
    knot_vector,
    make_bspline_basis,
    near_orthogonality,
    project_l2,
)
from .experiments import (
    ConfigError,
    ContractionReport,
    CoverageCell,
    CoverageReport,
    DnnMode,
    ExperimentConfig,
    OracleMode,
    RepResult,
    TargetSpec,
    basis_diagnostics,
    build_target,
    contraction_scan,
    mix64,
    run_coverage,
    run_repetition,
)
from .neuralnet import (
    DnnBasis,
    Network,
    SparsityReport,
    TrainingDivergence,
    TrainOptions,
    basis_sup_bound,
    check_sparsity,
    extract_basis,
    forward,
    forward_batch,
    init_network,
    load_network,
    save_network,
    train,
)
from .posterior import (
    CredibleSummary,
    DesignMatrix,
    GaussianPosterior,
    covers,
    credible_radius,
    design_matrix,
    distance,
    draws_from_normals,
    eval_on_grid,
    fit_posterior,
    inflation_factor,
    pointwise_band,
    sample_posterior,
)
from .synth import (
    Dataset,
    NetShape,
    TargetFunction,
    TargetKind,
    bspline_combo,
    eval_target,
    fourier_f1,
    fourier_f2,
    generate_dataset,
    network_shape,
    sieve_dimension,
    split_dataset,
    tabulated,
)

__version__ = "0.1.0"
