import numpy as np
import pytest
from hypothesis import given, strategies as st

from askdefer.errors import ConfigurationError, TrainingError
from askdefer.nn_core import (DenseNet, Layer, SgdConfig, backward,
                              backward_batch, film_backward_batch,
                              film_forward_batch, forward, forward_batch,
                              init_film_net, init_net, minibatch_indices,
                              net_from_text, net_to_text, sgd_step, sgd_step_,
                              softmax)


def flat_params(net):
    return np.concatenate([np.concatenate([l.w.ravel(), l.b]) for l in net.layers])


def set_params(net, theta):
    i = 0
    for l in net.layers:
        l.w[:] = theta[i:i + l.w.size].reshape(l.w.shape)
        i += l.w.size
        l.b[:] = theta[i:i + l.b.size]
        i += l.b.size


def flat_grads(g):
    return np.concatenate([np.concatenate([w.ravel(), b])
                           for w, b in zip(g.dw, g.db)])


def numeric_grad(net, x, value_fn, eps=1e-5):
    theta0 = flat_params(net)
    num = np.zeros_like(theta0)
    for j in range(len(theta0)):
        for sign in (1, -1):
            t = theta0.copy()
            t[j] += sign * eps
            set_params(net, t)
            num[j] += sign * value_fn(forward(net, x))
    set_params(net, theta0)
    return num / (2 * eps)


class TestForward:
    def test_identity_layer_passes_input_through(self):
        net = DenseNet([Layer(np.eye(3), np.zeros(3), "identity")])
        x = np.array([0.5, -1.0, 2.0])
        assert np.array_equal(forward(net, x), x)

    def test_zero_weights_give_zero_logits(self):
        net = DenseNet([Layer(np.zeros((2, 4)), np.zeros(4), "identity")])
        assert np.array_equal(forward(net, [1.0, -3.0]), np.zeros(4))

    def test_matches_hand_computed_product(self):
        # one tanh layer then identity output, 2x2 case
        w1 = np.array([[1.0, 0.5], [-0.5, 2.0]])
        b1 = np.array([0.1, -0.1])
        w2 = np.array([[2.0, 0.0], [1.0, -1.0]])
        b2 = np.array([0.0, 0.5])
        net = DenseNet([Layer(w1, b1, "tanh"), Layer(w2, b2, "identity")])
        x = np.array([0.3, -0.7])
        hidden = np.tanh(x @ w1 + b1)
        expected = hidden @ w2 + b2
        np.testing.assert_allclose(forward(net, x), expected, atol=1e-15)

    def test_dimension_mismatch_raises(self):
        net = init_net((3, 4), seed=0)
        with pytest.raises(ConfigurationError):
            forward(net, np.zeros(2))

    def test_batch_matches_single(self):
        net = init_net((3, 5, 2), seed=1)
        X = np.random.default_rng(0).normal(size=(6, 3))
        batched = forward_batch(net, X)
        for i in range(6):
            np.testing.assert_allclose(batched[i], forward(net, X[i]))


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        np.testing.assert_array_equal(softmax(np.zeros(4)), np.full(4, 0.25))

    def test_closed_form_log_inputs(self):
        out = softmax(np.log([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8),
           st.floats(-100, 100))
    def test_shift_invariance(self, logits, c):
        z = np.array(logits)
        np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-12)

    @given(st.lists(st.floats(-350, 350), min_size=2, max_size=8))
    def test_sums_to_one(self, logits):
        # exp underflows to exactly 0 for logit spreads beyond ~745, so
        # strict positivity only holds within this range in float64
        p = softmax(np.array(logits))
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all(p > 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ConfigurationError):
            softmax(np.array([np.nan, 0.0]))


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        net = init_net((3, 4, 2), seed=0)
        g = backward(net, np.ones(3), np.zeros(2))
        assert all(np.all(w == 0) for w in g.dw)
        assert all(np.all(b == 0) for b in g.db)

    def test_linearity_in_upstream(self):
        net = init_net((3, 4, 2), seed=0)
        x = np.array([0.2, -0.4, 1.0])
        up = np.array([0.7, -0.3])
        g1 = backward(net, x, up)
        g2 = backward(net, x, 2 * up)
        for a, b in zip(g1.dw, g2.dw):
            np.testing.assert_allclose(2 * a, b, atol=1e-14)

    @pytest.mark.parametrize("acts", [["tanh", "identity"],
                                      ["relu", "identity"]])
    def test_matches_central_differences(self, acts):
        rng = np.random.default_rng(42)
        for trial in range(5):
            net = init_net((3, 6, 2), activations=acts, seed=trial)
            # retry inputs that land on a relu kink
            for _ in range(10):
                x = rng.normal(size=3)
                z = x @ net.layers[0].w + net.layers[0].b
                if acts[0] != "relu" or np.min(np.abs(z)) > 1e-3:
                    break
            w = rng.normal(size=2)

            def value(logits):
                return float(w @ logits)

            analytic = flat_grads(backward(net, x, w))
            numeric = numeric_grad(net, x, value)
            scale = np.maximum(np.abs(numeric), 1e-6)
            assert np.max(np.abs(analytic - numeric) / scale) < 1e-4

    def test_batch_sums_per_sample_grads(self):
        net = init_net((2, 3, 2), seed=3)
        X = np.random.default_rng(1).normal(size=(4, 2))
        G = np.random.default_rng(2).normal(size=(4, 2))
        total = backward_batch(net, X, G)
        acc = np.zeros_like(flat_grads(total))
        for i in range(4):
            acc += flat_grads(backward(net, X[i], G[i]))
        np.testing.assert_allclose(flat_grads(total), acc, atol=1e-12)


class TestSgdStep:
    def test_zero_lr_leaves_network_unchanged(self):
        net = init_net((2, 3), seed=0)
        g = backward(net, np.ones(2), np.ones(3))
        stepped = sgd_step(net, g, 0.0)
        np.testing.assert_array_equal(stepped.layers[0].w, net.layers[0].w)

    def test_scalar_update_arithmetic(self):
        net = DenseNet([Layer(np.array([[1.0]]), np.zeros(1), "identity")])
        g = backward(net, np.ones(1), np.array([2.0]))  # dw = 2
        stepped = sgd_step(net, g, SgdConfig(learning_rate=0.1))
        assert stepped.layers[0].w[0, 0] == pytest.approx(0.8)

    def test_non_finite_gradients_raise(self):
        net = init_net((2, 3), seed=0)
        g = backward(net, np.ones(2), np.ones(3))
        g.dw[0][0, 0] = np.nan
        with pytest.raises(TrainingError):
            sgd_step(net, g, 0.01)

    def test_loss_decreases_on_convex_problem(self):
        # single linear layer, quadratic loss ||logits - target||^2
        net = init_net((2, 2), seed=5)
        x = np.array([1.0, -0.5])
        target = np.array([0.3, -0.7])
        losses = []
        for _ in range(10):
            out = forward(net, x)
            losses.append(float(np.sum((out - target) ** 2)))
            net = sgd_step(net, backward(net, x, 2 * (out - target)), 0.05)
        assert all(b < a for a, b in zip(losses, losses[1:]))


class TestConfig:
    def test_rejects_bad_learning_rate(self):
        with pytest.raises(ConfigurationError):
            SgdConfig(learning_rate=0.0)

    def test_rejects_negative_epochs(self):
        with pytest.raises(ConfigurationError):
            SgdConfig(epochs=-1)

    def test_init_is_seeded_and_bounded(self):
        a = init_net((3, 7, 2), seed=9)
        b = init_net((3, 7, 2), seed=9)
        for la, lb in zip(a.layers, b.layers):
            np.testing.assert_array_equal(la.w, lb.w)
        bound = np.sqrt(6.0 / (3 + 7))
        assert np.max(np.abs(a.layers[0].w)) <= bound


class TestSerialization:
    def test_roundtrip_is_exact(self):
        net = init_net((3, 5, 4), activations=["relu", "identity"], seed=2)
        clone = net_from_text(net_to_text(net))
        x = np.random.default_rng(0).normal(size=3)
        np.testing.assert_array_equal(forward(net, x), forward(clone, x))
        assert [l.activation for l in clone.layers] == ["relu", "identity"]


class TestFilm:
    def test_forward_matches_manual(self):
        net = init_film_net(2, 3, 4, 2, seed=0)
        x = np.array([[0.5, -1.0]])
        h = np.array([[0.2, 0.0, -0.3]])
        first = net.base.layers[0]
        a0 = np.tanh(x @ first.w + first.b)
        a = a0 * (1 + h @ net.w_scale) + h @ net.w_shift
        out = a @ net.base.layers[1].w + net.base.layers[1].b
        np.testing.assert_allclose(film_forward_batch(net, x, h), out, atol=1e-14)

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(7)
        net = init_film_net(2, 3, 4, 2, seed=7)
        x, h = rng.normal(size=(1, 2)), rng.normal(size=(1, 3))
        w = rng.normal(size=2)
        grads, dws, dwt = film_backward_batch(net, x, h, w[None, :])
        eps = 1e-6
        for mat, dmat in ((net.w_scale, dws), (net.w_shift, dwt)):
            num = np.zeros_like(mat)
            for idx in np.ndindex(mat.shape):
                orig = mat[idx]
                mat[idx] = orig + eps
                up = float(w @ film_forward_batch(net, x, h)[0])
                mat[idx] = orig - eps
                down = float(w @ film_forward_batch(net, x, h)[0])
                mat[idx] = orig
                num[idx] = (up - down) / (2 * eps)
            np.testing.assert_allclose(dmat, num, rtol=1e-5, atol=1e-7)


def test_minibatches_cover_all_indices():
    rng = np.random.default_rng(0)
    seen = np.concatenate(list(minibatch_indices(103, 32, rng)))
    assert sorted(seen) == list(range(103))


def test_inplace_step_matches_functional():
    net = init_net((2, 3), seed=1)
    g = backward(net, np.ones(2), np.ones(3))
    functional = sgd_step(net, g, 0.1)
    sgd_step_(net, g, 0.1)
    np.testing.assert_array_equal(net.layers[0].w, functional.layers[0].w)
