import numpy as np
import pytest

from r2d2bnn import autodiff as ad


def numeric_grads(build, params, eps=1e-6):
    """Central finite differences of build() w.r.t. every entry of params."""
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = build().item()
            flat[i] = orig - eps
            lm = build().item()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2 * eps)
        out.append(g)
    return out


def analytic_grads(build, params):
    for p in params:
        p.zero_grad()
    with ad.Tape():
        loss = build()
        ad.backward(loss)
    return [p.grad.copy() if p.grad is not None else None for p in params]


def assert_grads_match(build, params, tol=1e-5):
    ana = analytic_grads(build, params)
    num = numeric_grads(build, params)
    for a, n in zip(ana, num):
        assert a is not None
        denom = np.maximum(np.abs(n), 1e-4)
        assert np.max(np.abs(a - n) / denom) < tol


class TestLinear:
    def test_identity_under_scaling(self):
        # w = sqrt(d_in) I makes the scaled layer the identity map
        x = np.random.default_rng(0).normal(size=(4, 3))
        w = ad.Tensor(np.eye(3) * np.sqrt(3.0))
        b = ad.Tensor(np.zeros(3))
        y = ad.linear_forward(ad.Tensor(x), w, b)
        assert np.allclose(y.data, x, atol=1e-14)

    def test_gradcheck(self):
        gen = np.random.default_rng(1)
        x = ad.Tensor(gen.normal(size=(3, 4)))
        w = ad.Tensor(gen.normal(size=(2, 4)), requires_grad=True)
        b = ad.Tensor(gen.normal(size=(2,)), requires_grad=True)
        t = gen.normal(size=(3, 2))
        assert_grads_match(lambda: ad.mse_loss(ad.linear_forward(x, w, b), t), [w, b])

    def test_bias_only_gradient(self):
        x = ad.Tensor(np.random.default_rng(2).normal(size=(5, 3)))
        w = ad.Tensor(np.zeros((2, 3)))
        b = ad.Tensor(np.zeros(2), requires_grad=True)
        with ad.Tape():
            y = ad.linear_forward(x, w, b)
            loss = ad.tsum(y)
            ad.backward(loss)
        assert np.allclose(b.grad, np.full(2, 5.0))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.linear_forward(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((2, 4))), ad.Tensor(np.zeros(2)))


class TestConv:
    def test_identity_kernel(self):
        x = np.random.default_rng(3).normal(size=(2, 1, 5, 5))
        k = ad.Tensor(np.ones((1, 1, 1, 1)))
        b = ad.Tensor(np.zeros(1))
        y = ad.conv2d_forward(ad.Tensor(x), k, b)
        assert np.allclose(y.data, x, atol=1e-14)  # scaling 1/sqrt(1*1*1) = 1

    def test_zero_kernel_gives_bias(self):
        x = ad.Tensor(np.random.default_rng(4).normal(size=(2, 3, 4, 4)))
        k = ad.Tensor(np.zeros((2, 3, 3, 3)))
        b = ad.Tensor(np.array([1.5, -0.5]))
        y = ad.conv2d_forward(x, k, b)
        assert np.allclose(y.data[:, 0], 1.5)
        assert np.allclose(y.data[:, 1], -0.5)

    def test_gradcheck(self):
        gen = np.random.default_rng(5)
        x = ad.Tensor(gen.normal(size=(2, 1, 5, 5)))
        k = ad.Tensor(gen.normal(size=(3, 1, 3, 3)), requires_grad=True)
        b = ad.Tensor(gen.normal(size=(3,)), requires_grad=True)
        t = gen.normal(size=(2, 3, 3, 3))
        assert_grads_match(lambda: ad.mse_loss(ad.conv2d_forward(x, k, b), t), [k, b])

    def test_gradcheck_with_padding_and_input_grad(self):
        gen = np.random.default_rng(6)
        x = ad.Tensor(gen.normal(size=(1, 2, 4, 4)), requires_grad=True)
        k = ad.Tensor(gen.normal(size=(2, 2, 3, 3)), requires_grad=True)
        b = ad.Tensor(gen.normal(size=(2,)), requires_grad=True)
        t = gen.normal(size=(1, 2, 4, 4))
        assert_grads_match(lambda: ad.mse_loss(ad.conv2d_forward(x, k, b, padding=1), t), [x, k, b])

    def test_pooling_gradcheck(self):
        gen = np.random.default_rng(7)
        x = ad.Tensor(gen.normal(size=(2, 2, 4, 4)), requires_grad=True)
        t = gen.normal(size=(2, 2, 2, 2))
        assert_grads_match(lambda: ad.mse_loss(ad.max_pool2d(x, 2), t), [x])


class TestActivations:
    def test_relu_values(self):
        y = ad.relu(ad.Tensor(np.array([-2.0, 3.0])))
        assert np.array_equal(y.data, [0.0, 3.0])

    def test_softmax_uniform_on_constant_rows(self):
        y = ad.softmax(ad.Tensor(np.full((3, 5), 2.7)))
        assert np.allclose(y.data, 0.2, atol=1e-15)

    def test_softmax_rows_normalized(self):
        gen = np.random.default_rng(8)
        y = ad.softmax(ad.Tensor(gen.normal(scale=30, size=(50, 7))))
        assert np.all(y.data >= 0.0)
        assert np.all(y.data <= 1.0)
        assert np.max(np.abs(y.data.sum(axis=1) - 1.0)) <= 1e-12

    def test_tanh_gradcheck(self):
        gen = np.random.default_rng(9)
        x = ad.Tensor(gen.normal(size=(4, 3)), requires_grad=True)
        t = gen.normal(size=(4, 3))
        assert_grads_match(lambda: ad.mse_loss(ad.tanh(x), t), [x], tol=1e-6)

    def test_all_kinds_gradcheck(self):
        gen = np.random.default_rng(10)
        for kind in ["relu", "tanh", "sigmoid", "softmax", "log_softmax"]:
            x = ad.Tensor(gen.normal(size=(3, 4)) + 0.05, requires_grad=True)
            t = gen.normal(size=(3, 4))
            assert_grads_match(lambda: ad.mse_loss(ad.activate(x, kind), t), [x])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ad.activate(ad.Tensor(np.zeros(2)), "gelu")


class TestLosses:
    def test_mse_zero_at_target(self):
        t = np.random.default_rng(11).normal(size=(4, 2))
        assert ad.mse_loss(ad.Tensor(t.copy()), t).item() == 0.0

    def test_uniform_cross_entropy(self):
        logits = ad.Tensor(np.zeros((6, 10)))
        targets = np.arange(6) % 10
        assert ad.cross_entropy_loss(logits, targets).item() == pytest.approx(np.log(10.0), rel=1e-12)

    def test_gaussian_nll_gradcheck(self):
        gen = np.random.default_rng(12)
        p = ad.Tensor(gen.normal(size=(5, 2)), requires_grad=True)
        t = gen.normal(size=(5, 2))
        assert_grads_match(lambda: ad.gaussian_nll_loss(p, t, obs_var=2.5), [p])

    def test_cross_entropy_gradcheck(self):
        gen = np.random.default_rng(13)
        p = ad.Tensor(gen.normal(size=(4, 3)), requires_grad=True)
        t = np.array([0, 2, 1, 2])
        assert_grads_match(lambda: ad.cross_entropy_loss(p, t), [p])

    def test_loss_dispatcher(self):
        p = ad.Tensor(np.zeros((2, 2)))
        assert ad.loss(p, np.zeros((2, 2)), "mse").item() == 0.0
        with pytest.raises(ValueError):
            ad.loss(p, np.zeros((2, 2)), "hinge")


class TestBackwardContract:
    def test_sum_gradient_is_ones(self):
        w = ad.Tensor(np.random.default_rng(14).normal(size=(3, 3)), requires_grad=True)
        with ad.Tape():
            loss = ad.tsum(w)
            ad.backward(loss)
        assert np.array_equal(w.grad, np.ones((3, 3)))

    def test_double_backward_raises(self):
        w = ad.Tensor(np.ones(3), requires_grad=True)
        with ad.Tape():
            loss = ad.tsum(w)
            ad.backward(loss)
            with pytest.raises(RuntimeError):
                ad.backward(loss)

    def test_detached_graph_raises(self):
        w = ad.Tensor(np.ones(3), requires_grad=True)
        loss = ad.tsum(w)  # built with no tape
        with pytest.raises(RuntimeError):
            ad.backward(loss)

    def test_non_scalar_rejected(self):
        w = ad.Tensor(np.ones(3), requires_grad=True)
        with ad.Tape():
            y = ad.mul(w, 2.0)
            with pytest.raises(ValueError):
                ad.backward(y)

    def test_composite_mlp_gradcheck(self):
        gen = np.random.default_rng(15)
        x = ad.Tensor(gen.normal(size=(6, 3)))
        w1 = ad.Tensor(gen.normal(size=(4, 3)), requires_grad=True)
        b1 = ad.Tensor(gen.normal(size=(4,)), requires_grad=True)
        w2 = ad.Tensor(gen.normal(size=(2, 4)), requires_grad=True)
        b2 = ad.Tensor(gen.normal(size=(2,)), requires_grad=True)
        t = gen.normal(size=(6, 2))

        def build():
            h = ad.relu(ad.linear_forward(x, w1, b1))
            return ad.gaussian_nll_loss(ad.linear_forward(h, w2, b2), t, obs_var=1.3)

        assert_grads_match(build, [w1, b1, w2, b2])

    def test_determinism(self):
        gen = np.random.default_rng(16)
        x = gen.normal(size=(5, 4))
        w = ad.Tensor(gen.normal(size=(3, 4)), requires_grad=True)
        b = ad.Tensor(gen.normal(size=(3,)), requires_grad=True)
        t = gen.normal(size=(5, 3))

        def once():
            w.zero_grad()
            b.zero_grad()
            with ad.Tape():
                loss = ad.mse_loss(ad.linear_forward(ad.Tensor(x), w, b), t)
                ad.backward(loss)
            return loss.item(), w.grad.copy(), b.grad.copy()

        l1, gw1, gb1 = once()
        l2, gw2, gb2 = once()
        assert l1 == l2
        assert np.array_equal(gw1, gw2)
        assert np.array_equal(gb1, gb2)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = ad.Tensor(np.array([1.0, -2.0]), requires_grad=True)
        st = ad.AdamState()
        ad.adam_step([p], [np.zeros(2)], st, lr=0.1, weight_decay=0.0)
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_first_step_bias_corrected(self):
        # with constant unit gradient the bias-corrected first step is -lr
        p = ad.Tensor(np.array(0.0), requires_grad=True)
        st = ad.AdamState()
        ad.adam_step([p], [np.array(1.0)], st, lr=0.1)
        assert p.data == pytest.approx(-0.1, abs=1e-8)

    def test_decoupled_weight_decay_shrinks(self):
        p = ad.Tensor(np.array([4.0]), requires_grad=True)
        st = ad.AdamState()
        ad.adam_step([p], [np.zeros(1)], st, lr=0.1, weight_decay=0.5)
        assert 0.0 < p.data[0] < 4.0

    def test_deterministic(self):
        def run():
            p = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
            st = ad.AdamState()
            for i in range(10):
                ad.adam_step([p], [np.array([0.3, -0.7]) * (i + 1)], st, lr=0.05, weight_decay=0.01)
            return p.data.copy()

        assert np.array_equal(run(), run())


class TestGradPropertySuite:
    def test_random_small_networks(self):
        # reduced version of the acceptance gradient suite
        gen = np.random.default_rng(99)
        for trial in range(10):
            d_in, d_h, d_out, n = gen.integers(2, 5), gen.integers(2, 6), gen.integers(1, 4), 3
            x = ad.Tensor(gen.normal(size=(n, d_in)))
            w1 = ad.Tensor(gen.normal(size=(d_h, d_in)), requires_grad=True)
            b1 = ad.Tensor(gen.normal(size=(d_h,)), requires_grad=True)
            w2 = ad.Tensor(gen.normal(size=(d_out, d_h)), requires_grad=True)
            b2 = ad.Tensor(gen.normal(size=(d_out,)), requires_grad=True)
            act = ["relu", "tanh", "sigmoid"][trial % 3]
            kind = ["mse", "gaussian_nll"][trial % 2]
            t = gen.normal(size=(n, d_out))

            def build():
                h = ad.activate(ad.linear_forward(x, w1, b1), act)
                return ad.loss(ad.linear_forward(h, w2, b2), t, kind)

            assert_grads_match(build, [w1, b1, w2, b2])
