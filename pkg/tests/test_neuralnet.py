import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebdnn import (
    Dataset,
    NetShape,
    Network,
    TrainingDivergence,
    TrainOptions,
    basis_sup_bound,
    check_sparsity,
    extract_basis,
    forward,
    forward_batch,
    fourier_f1,
    generate_dataset,
    init_network,
    load_network,
    make_bspline_basis,
    save_network,
    train,
)
from ebdnn.neuralnet import mse_loss_and_grads


def single_unit_net(w1=1.0, b1=-0.5, w2=2.0):
    """x -> w2 * relu(w1 * x + b1)"""
    shape = NetShape(1, (1,))
    return Network(shape, (np.array([[w1]]), np.array([[w2]])), (np.array([b1]),))


class TestInit:
    def test_deterministic(self):
        shape = NetShape(1, (4, 2))
        a = init_network(shape, 9)
        b = init_network(shape, 9)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_dimensions(self):
        net = init_network(NetShape(1, (4, 2)), 0)
        assert [w.shape for w in net.weights] == [(4, 1), (2, 4), (1, 2)]
        assert [b.shape for b in net.biases] == [(4,), (2,)]

    def test_biases_zero(self):
        net = init_network(NetShape(2, (8, 3)), 5)
        for b in net.biases:
            assert np.all(b == 0.0)

    def test_he_variance(self):
        # ~10^5 parameters; per-layer sample variance within 20% of 2/fan_in
        net = init_network(NetShape(1, (300, 300, 10)), 3)
        for w in net.weights[:3]:
            ratio = w.var() / (2.0 / w.shape[1])
            assert 0.8 < ratio < 1.2


class TestForward:
    def test_zero_weights(self):
        shape = NetShape(1, (3,))
        net = Network(shape, (np.zeros((3, 1)), np.zeros((1, 3))), (np.zeros(3),))
        out, hidden = forward(net, 0.4)
        assert out == 0.0
        np.testing.assert_array_equal(hidden, np.zeros(3))

    def test_hand_evaluation(self):
        net = single_unit_net()
        out, hidden = forward(net, 0.75)
        assert hidden[0] == pytest.approx(0.25)
        assert out == pytest.approx(0.5)

    def test_relu_clamps(self):
        out, hidden = forward(single_unit_net(), 0.25)
        assert out == 0.0 and hidden[0] == 0.0

    def test_domain_enforced(self):
        with pytest.raises(ValueError):
            forward(single_unit_net(), 1.2)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), c=st.floats(0.1, 10.0))
    def test_positive_homogeneity_without_biases(self, seed, c):
        # scaling the first-layer weights by c > 0 scales the first hidden layer by c
        shape = NetShape(1, (5, 3))
        net = init_network(shape, seed)
        scaled = Network(
            shape,
            (c * net.weights[0],) + net.weights[1:],
            net.biases,
        )
        x = np.array([[0.3], [0.8]])
        h_base = np.maximum(x @ net.weights[0].T, 0.0)
        h_scaled = np.maximum(x @ scaled.weights[0].T, 0.0)
        np.testing.assert_allclose(h_scaled, c * h_base, rtol=1e-12)


class TestGradients:
    def _max_rel_error(self, seed):
        rng = np.random.default_rng(seed)
        shape = NetShape(2, (5, 3))  # 51 parameters
        net = init_network(shape, seed)
        x = rng.random((4, 2))
        y = rng.standard_normal(4)
        weights = [w.copy() for w in net.weights]
        biases = [b.copy() for b in net.biases]
        _, gw, gb = mse_loss_and_grads(weights, biases, x, y)
        grads = gw + gb
        h = 1e-5
        worst = 0.0
        for p, g in zip(weights + biases, grads):
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = p[idx]
                p[idx] = keep + h
                up, _, _ = mse_loss_and_grads(weights, biases, x, y)
                p[idx] = keep - h
                down, _, _ = mse_loss_and_grads(weights, biases, x, y)
                p[idx] = keep
                fd = (up - down) / (2 * h)
                if abs(g[idx]) > 1e-8:
                    worst = max(worst, abs(fd - g[idx]) / abs(g[idx]))
        return worst

    def test_backprop_matches_central_differences(self):
        for seed in range(5):
            assert self._max_rel_error(seed) < 1e-4


class TestTrain:
    def test_descends_on_zero_target(self):
        rng = np.random.default_rng(0)
        data = Dataset(1, rng.random((80, 1)), np.zeros(80), 0.0, 0)
        net = init_network(NetShape(1, (10, 4)), 1)
        _, trace = train(net, data, TrainOptions(epochs=50, batch_size=20, seed=2))
        assert trace[-1] <= trace[0]

    def test_zero_learning_rate_freezes_loss(self):
        data = generate_dataset(fourier_f1(), 60, 0.5, seed=4)
        net = init_network(NetShape(1, (6,)), 2)
        _, trace = train(net, data, TrainOptions(epochs=5, batch_size=30, learning_rate=0.0, seed=1))
        assert len(set(trace)) == 1

    def test_realizable_teacher_student(self):
        # noiseless data from a 1-hidden-layer teacher; same-architecture student
        teacher = init_network(NetShape(1, (8,)), 100)
        rng = np.random.default_rng(50)
        x = rng.random((300, 1))
        y, _ = forward_batch(teacher, x)
        data = Dataset(1, x, y, 0.0, 0)
        student = init_network(NetShape(1, (8,)), 200)
        _, trace = train(
            student, data, TrainOptions(epochs=500, batch_size=64, learning_rate=1e-2, seed=0)
        )
        assert trace[-1] < 1e-2

    def test_trace_reproducible(self):
        data = generate_dataset(fourier_f1(), 100, 0.5, seed=9)
        net = init_network(NetShape(1, (12, 5)), 3)
        opts = TrainOptions(epochs=8, batch_size=25, seed=6)
        _, trace_a = train(net, data, opts)
        _, trace_b = train(net, data, opts)
        assert trace_a == trace_b

    def test_divergence_raises_with_trace(self):
        # parameters large enough that the forward pass overflows to inf:
        # the non-finite loss must abort with the trace accumulated so far
        data = generate_dataset(fourier_f1(), 100, 0.5, seed=9)
        shape = NetShape(1, (2,))
        net = Network(
            shape,
            (np.full((2, 1), 1e200), np.full((1, 2), 1e200)),
            (np.zeros(2),),
        )
        with np.errstate(over="ignore"), pytest.raises(TrainingDivergence) as info:
            train(net, data, TrainOptions(epochs=3, batch_size=25, seed=0))
        assert info.value.trace == []

    def test_training_leaves_input_net_untouched(self):
        data = generate_dataset(fourier_f1(), 60, 0.5, seed=4)
        net = init_network(NetShape(1, (6,)), 2)
        before = [w.copy() for w in net.weights]
        train(net, data, TrainOptions(epochs=3, batch_size=30, seed=1))
        for w0, w1 in zip(before, net.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_batch_size_guard(self):
        data = generate_dataset(fourier_f1(), 20, 0.5, seed=4)
        net = init_network(NetShape(1, (6,)), 2)
        with pytest.raises(ValueError):
            train(net, data, TrainOptions(batch_size=64))

    def test_sgd_optimizer_runs(self):
        data = generate_dataset(fourier_f1(), 60, 0.5, seed=4)
        net = init_network(NetShape(1, (6,)), 2)
        _, trace = train(net, data, TrainOptions(epochs=20, batch_size=30, optimizer="sgd", learning_rate=0.05, seed=1))
        assert trace[-1] <= trace[0]

    def test_output_clipping_bounds_loss(self):
        # with clip_sup, clamped predictions enter the loss and stop gradients
        rng = np.random.default_rng(5)
        data = Dataset(1, rng.random((40, 1)), np.full(40, 100.0), 0.0, 0)
        net = init_network(NetShape(1, (6,)), 2)
        _, trace = train(net, data, TrainOptions(epochs=5, batch_size=20, clip_sup=1.0, seed=1))
        assert all(loss >= 99.0**2 for loss in trace)  # predictions capped at 1


class TestBasisExtraction:
    def test_single_unit_basis(self):
        basis = extract_basis(single_unit_net())
        xs = np.linspace(0, 1, 11).reshape(-1, 1)
        np.testing.assert_allclose(basis.eval_batch(xs)[:, 0], np.maximum(xs[:, 0] - 0.5, 0.0))

    def test_reports_size_k(self):
        net = init_network(NetShape(1, (12, 7)), 0)
        assert extract_basis(net).k == 7

    def test_linear_head_on_basis_equals_forward(self):
        # theta' phi(x) = forward of the net with the output layer replaced by theta
        net = init_network(NetShape(1, (10, 4)), 8)
        theta = np.array([0.3, -1.2, 0.7, 2.0])
        replaced = Network(net.shape, net.weights[:-1] + (theta.reshape(1, -1),), net.biases)
        xs = np.linspace(0, 1, 9).reshape(-1, 1)
        via_basis = extract_basis(net).eval_batch(xs) @ theta
        via_net, _ = forward_batch(replaced, xs)
        np.testing.assert_allclose(via_basis, via_net, rtol=1e-12)

    def test_extraction_is_read_only(self):
        net = init_network(NetShape(1, (10, 4)), 8)
        before = [w.copy() for w in net.weights]
        basis = extract_basis(net)
        basis.eval_batch(np.linspace(0, 1, 5).reshape(-1, 1))
        for w0, w1 in zip(before, net.weights):
            np.testing.assert_array_equal(w0, w1)


class TestSparsity:
    def test_all_zero_net(self):
        shape = NetShape(1, (3,))
        net = Network(shape, (np.zeros((3, 1)), np.zeros((1, 3))), (np.zeros(3),))
        report = check_sparsity(net, 0)
        assert report.is_s_sparse and report.nonzero_count == 0

    def test_range_violation_dominates(self):
        net = single_unit_net(w2=2.0)
        report = check_sparsity(net, 100)
        assert report.max_abs_param == 2.0
        assert not report.is_s_sparse

    def test_counts_exact_nonzeros(self):
        shape = NetShape(1, (3,))
        w1 = np.array([[0.5], [0.0], [-0.25]])
        w2 = np.array([[0.0, 1.0, 0.0]])
        net = Network(shape, (w1, w2), (np.zeros(3),))
        report = check_sparsity(net, 10)
        assert report.nonzero_count == 3
        assert report.is_s_sparse


class TestSupBound:
    def test_order1_partition(self):
        basis = make_bspline_basis(8, 1, 1)
        assert basis_sup_bound(basis, np.linspace(0, 1, 1001).reshape(-1, 1)) == 1.0

    def test_constant_function(self):
        basis = extract_basis(single_unit_net(w1=0.0, b1=0.7))
        # hidden unit is the constant 0.7
        assert basis_sup_bound(basis, np.linspace(0, 1, 64).reshape(-1, 1)) == pytest.approx(0.7)


def test_checkpoint_round_trip(tmp_path):
    net = init_network(NetShape(2, (6, 3)), 17)
    path = tmp_path / "net.npz"
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.shape == net.shape
    for a, b in zip(net.weights, loaded.weights):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(net.biases, loaded.biases):
        np.testing.assert_array_equal(a, b)
