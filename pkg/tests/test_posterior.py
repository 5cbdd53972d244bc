import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebdnn import (
    BasisSet,
    DesignMatrix,
    bspline_combo,
    covers,
    credible_radius,
    default_grid,
    design_matrix,
    distance,
    draws_from_normals,
    eval_on_grid,
    fit_posterior,
    fourier_f1,
    generate_dataset,
    inflation_factor,
    make_bspline_basis,
    pointwise_band,
    rescale,
    sample_posterior,
)

GAUSS_Q975 = 1.959964  # standard normal 97.5% quantile


class ConstantBasis(BasisSet):
    """Single basis function identically equal to one."""

    k = 1
    dim = 1

    def eval_batch(self, points):
        return np.ones((np.asarray(points).reshape(-1, 1).shape[0], 1))


def gauss_jordan_solve(a, b):
    """Dense elimination with partial pivoting; independent of the Cholesky path."""
    a = a.astype(np.float64).copy()
    b = b.astype(np.float64).copy()
    n = a.shape[0]
    for col in range(n):
        pivot = col + np.argmax(np.abs(a[col:, col]))
        a[[col, pivot]] = a[[pivot, col]]
        b[[col, pivot]] = b[[pivot, col]]
        b[col] /= a[col, col]
        a[col] /= a[col, col]
        for row in range(n):
            if row != col:
                b[row] -= a[row, col] * b[col]
                a[row] -= a[row, col] * a[col]
    return b


class TestDesignMatrix:
    def test_constant_basis(self):
        data = generate_dataset(fourier_f1(), 3, 1.0, seed=0)
        design = design_matrix(ConstantBasis(), data)
        np.testing.assert_array_equal(design.phi, np.ones((3, 1)))
        np.testing.assert_allclose(design.empirical_gram, [[1.0]])

    def test_order1_rows_one_hot(self):
        basis = make_bspline_basis(4, 1, 1)
        data = generate_dataset(fourier_f1(), 20, 1.0, seed=3)
        design = design_matrix(basis, data)
        np.testing.assert_array_equal(design.phi.sum(axis=1), np.ones(20))
        assert set(np.unique(design.phi)) == {0.0, 1.0}

    def test_empirical_gram_matches_triple_loop(self):
        rng = np.random.default_rng(8)
        basis = make_bspline_basis(5, 2, 1)
        data = generate_dataset(fourier_f1(), 15, 1.0, seed=5)
        design = design_matrix(basis, data)
        phi = design.phi
        n, k = phi.shape
        oracle = np.zeros((k, k))
        for i in range(k):
            for j in range(k):
                for r in range(n):
                    oracle[i, j] += phi[r, i] * phi[r, j]
        oracle /= n
        np.testing.assert_allclose(design.empirical_gram, oracle, atol=1e-12)

    def test_dimension_mismatch(self):
        basis = make_bspline_basis(4, 1, 2)
        data = generate_dataset(fourier_f1(), 10, 1.0, seed=0)
        with pytest.raises(ValueError):
            design_matrix(basis, data)


class TestFitPosterior:
    def test_no_observations_gives_prior(self):
        design = DesignMatrix(phi=np.zeros((0, 3)), empirical_gram=np.zeros((3, 3)))
        post = fit_posterior(design, np.zeros(0), 1.0)
        np.testing.assert_array_equal(post.mean, np.zeros(3))
        np.testing.assert_array_equal(post.precision, np.eye(3))

    def test_scalar_ridge(self):
        design = DesignMatrix(phi=np.ones((1, 1)), empirical_gram=np.ones((1, 1)))
        post = fit_posterior(design, np.array([2.0]), 1.0)
        assert post.precision[0, 0] == pytest.approx(2.0)
        assert post.mean[0] == pytest.approx(1.0)
        cov = np.linalg.inv(post.precision)
        assert cov[0, 0] == pytest.approx(0.5)

    def test_mean_matches_gauss_jordan(self):
        rng = np.random.default_rng(10)
        phi = rng.random((40, 6))
        y = rng.standard_normal(40)
        sigma = 0.8
        design = DesignMatrix(phi=phi, empirical_gram=phi.T @ phi / 40)
        post = fit_posterior(design, y, sigma)
        a = phi.T @ phi / sigma**2 + np.eye(6)
        oracle = gauss_jordan_solve(a, phi.T @ y / sigma**2)
        rel = np.max(np.abs(post.mean - oracle)) / max(np.max(np.abs(oracle)), 1e-12)
        assert rel < 1e-10

    def test_rejects_bad_sigma(self):
        design = DesignMatrix(phi=np.ones((1, 1)), empirical_gram=np.ones((1, 1)))
        with pytest.raises(ValueError):
            fit_posterior(design, np.array([1.0]), 0.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_mean_solves_normal_equations(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 7))
        n = int(rng.integers(5, 30))
        phi = rng.standard_normal((n, k))
        y = rng.standard_normal(n)
        design = DesignMatrix(phi=phi, empirical_gram=phi.T @ phi / n)
        post = fit_posterior(design, y, 1.0)
        rhs = phi.T @ y
        gap = np.max(np.abs(post.precision @ post.mean - rhs))
        assert gap < 1e-10 * (1.0 + np.max(np.abs(rhs)))


class TestSampling:
    def test_zero_normals_return_mean(self):
        design = DesignMatrix(phi=np.ones((1, 1)), empirical_gram=np.ones((1, 1)))
        post = fit_posterior(design, np.array([2.0]), 1.0)
        np.testing.assert_array_equal(draws_from_normals(post, np.zeros((1, 1))), [post.mean])

    def test_prior_moments(self):
        design = DesignMatrix(phi=np.zeros((0, 1)), empirical_gram=np.zeros((1, 1)))
        post = fit_posterior(design, np.zeros(0), 1.0)
        draws = sample_posterior(post, 10**5, seed=42)
        assert abs(draws.mean()) < 4.0 / np.sqrt(10**5)
        assert abs(draws.var() - 1.0) < 0.05

    def test_covariance_matches_inverse(self):
        rng = np.random.default_rng(5)
        phi = rng.random((40, 4))
        design = DesignMatrix(phi=phi, empirical_gram=phi.T @ phi / 40)
        post = fit_posterior(design, rng.standard_normal(40), 0.7)
        draws = sample_posterior(post, 2 * 10**5, seed=9)
        sample_cov = np.cov(draws.T)
        exact = np.linalg.inv(post.precision)
        rel = np.linalg.norm(sample_cov - exact) / np.linalg.norm(exact)
        assert rel < 0.05

    def test_deterministic(self):
        design = DesignMatrix(phi=np.ones((2, 1)), empirical_gram=np.ones((1, 1)))
        post = fit_posterior(design, np.array([1.0, 3.0]), 1.0)
        np.testing.assert_array_equal(
            sample_posterior(post, 100, seed=3), sample_posterior(post, 100, seed=3)
        )


class TestEvalOnGrid:
    def test_zero_coefficients(self):
        grid = default_grid(1)
        basis = make_bspline_basis(4, 2, 1)
        np.testing.assert_array_equal(eval_on_grid(basis, np.zeros(basis.k), grid), 0.0)

    def test_unit_vector_picks_function(self):
        grid = default_grid(1, points_per_axis=33)
        basis = make_bspline_basis(4, 2, 1)
        e2 = np.zeros(basis.k)
        e2[2] = 1.0
        np.testing.assert_array_equal(
            eval_on_grid(basis, e2, grid), basis.eval_batch(grid.points)[:, 2]
        )

    def test_linearity(self):
        grid = default_grid(1, points_per_axis=65)
        basis = make_bspline_basis(6, 2, 1)
        rng = np.random.default_rng(2)
        t1, t2 = rng.standard_normal((2, basis.k))
        lhs = eval_on_grid(basis, t1 + t2, grid)
        rhs = eval_on_grid(basis, t1, grid) + eval_on_grid(basis, t2, grid)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestDistance:
    def test_identical_curves(self):
        grid = default_grid(1)
        a = np.sin(grid.points[:, 0])
        assert distance(a, a, grid, "l2") == 0.0
        assert distance(a, a, grid, "sup") == 0.0

    def test_unit_constant_gap(self):
        grid = default_grid(1)
        ones = np.ones(len(grid))
        zeros = np.zeros(len(grid))
        assert distance(ones, zeros, grid, "l2") == pytest.approx(1.0, abs=1e-12)
        assert distance(ones, zeros, grid, "sup") == 1.0

    def test_linear_ramp_l2(self):
        grid = default_grid(1)  # 2049 points
        ramp = grid.points[:, 0]
        assert distance(ramp, np.zeros_like(ramp), grid, "l2") == pytest.approx(
            1.0 / np.sqrt(3.0), abs=1e-6
        )

    def test_grid_mismatch(self):
        grid = default_grid(1)
        with pytest.raises(ValueError):
            distance(np.zeros(10), np.zeros(10), grid, "l2")


class TestCredibleRadius:
    def test_degenerate_draws(self):
        grid = default_grid(1, points_per_axis=65)
        center = np.array([1.5])
        draws = np.tile(center, (50, 1))
        summary = credible_radius(draws, center, ConstantBasis(), grid, "l2", 0.05)
        assert summary.radius == 0.0

    def test_order_statistic_convention(self):
        # distances exactly 1..100 and alpha=0.05: the 95th smallest
        grid = default_grid(1, points_per_axis=65)
        draws = np.arange(1.0, 101.0).reshape(-1, 1)
        summary = credible_radius(draws, np.zeros(1), ConstantBasis(), grid, "l2", 0.05)
        assert summary.radius == 95.0

    def test_gaussian_quantile(self):
        tau = 0.8
        rng = np.random.default_rng(7)
        draws = 0.3 + tau * rng.standard_normal((10**5, 1))
        grid = default_grid(1, points_per_axis=65)
        summary = credible_radius(draws, np.array([0.3]), ConstantBasis(), grid, "l2", 0.05)
        assert summary.radius == pytest.approx(GAUSS_Q975 * tau, rel=0.02)

    def test_too_few_draws(self):
        grid = default_grid(1, points_per_axis=65)
        with pytest.raises(ValueError):
            credible_radius(np.zeros((10, 1)), np.zeros(1), ConstantBasis(), grid, "l2", 0.05)

    def test_radius_nonincreasing_in_alpha(self):
        rng = np.random.default_rng(1)
        grid = default_grid(1, points_per_axis=65)
        draws = rng.standard_normal((500, 1))
        radii = [
            credible_radius(draws, np.zeros(1), ConstantBasis(), grid, "l2", a).radius
            for a in (0.05, 0.1, 0.2, 0.5)
        ]
        assert all(r1 >= r2 for r1, r2 in zip(radii, radii[1:]))

    def test_affine_equivariance(self):
        rng = np.random.default_rng(4)
        basis = make_bspline_basis(6, 2, 1)
        grid = default_grid(1, points_per_axis=129)
        draws = rng.standard_normal((200, basis.k))
        center = rng.standard_normal(basis.k)
        shift = rng.standard_normal(basis.k)
        base = credible_radius(draws, center, basis, grid, "l2", 0.1).radius
        moved = credible_radius(draws + shift, center + shift, basis, grid, "l2", 0.1).radius
        assert moved == pytest.approx(base, rel=1e-12)


class TestInflation:
    def test_values(self):
        assert inflation_factor("none", 123456) == 1.0
        assert inflation_factor("log", 20) == pytest.approx(2.995732273553991)
        assert inflation_factor("sqrt_log", 20) == pytest.approx(np.sqrt(np.log(20.0)))
        # (ln 1000)^3, cross-checked with 50-digit arithmetic
        assert inflation_factor("log_cubed", 1000) == pytest.approx(329.6179319515431, rel=1e-12)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            inflation_factor("log", 2)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            inflation_factor("double_log", 10)


class TestPointwiseBand:
    def test_degenerate(self):
        grid = default_grid(1, points_per_axis=65)
        draws = np.full((50, 1), 2.0)
        lower, upper = pointwise_band(draws, ConstantBasis(), grid, 0.05)
        np.testing.assert_array_equal(lower, upper)

    def test_symmetric_two_point(self):
        grid = default_grid(1, points_per_axis=65)
        c = 1.7
        draws = np.concatenate([np.full((50, 1), -c), np.full((50, 1), c)])
        lower, upper = pointwise_band(draws, ConstantBasis(), grid, 0.5)
        assert np.all(lower >= -c) and np.all(upper <= c)

    def test_gaussian_band(self):
        rng = np.random.default_rng(11)
        draws = rng.standard_normal((10**5, 1))
        grid = default_grid(1, points_per_axis=65)
        lower, upper = pointwise_band(draws, ConstantBasis(), grid, 0.05)
        assert lower[0] == pytest.approx(-GAUSS_Q975, rel=0.02)
        assert upper[0] == pytest.approx(GAUSS_Q975, rel=0.02)


class TestCovers:
    def test_representable_center_always_covered(self):
        coef = np.array([0.4, -0.6, 1.1, 0.0, 0.3])
        target = bspline_combo(2, 4, coef)
        basis = make_bspline_basis(4, 2, 1)
        grid = default_grid(1)
        assert covers(coef, 0.0, target, basis, grid, "l2")

    def test_zero_radius_off_center(self):
        target = bspline_combo(1, 4, np.ones(4))
        basis = make_bspline_basis(4, 1, 1)
        grid = default_grid(1)
        assert not covers(np.zeros(4), 0.0, target, basis, grid, "l2")

    def test_boundary_is_covered(self):
        # distance exactly equals the radius: closed ball counts it
        target = bspline_combo(1, 4, np.ones(4))
        basis = make_bspline_basis(4, 1, 1)
        grid = default_grid(1)
        gap = distance(
            eval_on_grid(basis, np.zeros(4), grid),
            np.ones(len(grid)),
            grid,
            "sup",
        )
        assert covers(np.zeros(4), gap, target, basis, grid, "sup")

    @settings(max_examples=15, deadline=None)
    @given(r1=st.floats(0.0, 2.0), extra=st.floats(0.0, 2.0), seed=st.integers(0, 2**31))
    def test_monotone_in_radius(self, r1, extra, seed):
        rng = np.random.default_rng(seed)
        basis = make_bspline_basis(4, 1, 1)
        grid = default_grid(1, points_per_axis=129)
        target = bspline_combo(1, 4, rng.standard_normal(4))
        center = rng.standard_normal(4)
        if covers(center, r1, target, basis, grid, "l2"):
            assert covers(center, r1 + extra, target, basis, grid, "l2")


class TestDefaultGrid:
    def test_one_dimensional(self):
        grid = default_grid(1)
        assert len(grid) == 2049 and grid.kind == "trapezoid"
        assert grid.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_tensor_cap_d2(self):
        grid = default_grid(2)
        assert len(grid) <= 10**6
        assert grid.dim == 2
        assert grid.weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_monte_carlo_beyond_d3(self):
        grid = default_grid(4)
        assert grid.kind == "monte_carlo"
        assert len(grid) == 10**5
        assert grid.weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_monte_carlo_seeded(self):
        a = default_grid(4, mc_seed=3)
        b = default_grid(4, mc_seed=3)
        np.testing.assert_array_equal(a.points, b.points)


def test_empirical_norm_equivalence_regime():
    # for the rescaled spline basis and n2 >= 50 k, random coefficient vectors
    # satisfy 0.5 ||f||_2 <= ||f||_n <= 2 ||f||_2 in at least 95% of trials
    rng = np.random.default_rng(21)
    basis = rescale(make_bspline_basis(9, 2, 1), np.sqrt(10))
    k = basis.k
    n2 = 50 * k
    grid = default_grid(1)
    phi_grid = basis.eval_batch(grid.points)
    hits = 0
    trials = 200
    for _ in range(trials):
        x = rng.random((n2, 1))
        phi_n = basis.eval_batch(x)
        theta = rng.standard_normal(k)
        pop = np.sqrt(grid.weights @ (phi_grid @ theta) ** 2)
        emp = np.sqrt(np.mean((phi_n @ theta) ** 2))
        if 0.5 * pop <= emp <= 2.0 * pop:
            hits += 1
    assert hits / trials >= 0.95
