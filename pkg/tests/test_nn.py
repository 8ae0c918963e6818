import math

import numpy as np
import pytest

from blockcast import nn
from blockcast.core import derive_rng
from blockcast.errors import ArityError, ShapeError, TrainingDivergenceError

TOL = 1e-4


def check_input_gradient(layer, x, training=True, rng_seed=0, tol=TOL):
    """Analytic input gradient vs central finite differences on a random
    scalar projection of the output."""
    proj_rng = np.random.default_rng(rng_seed + 1000)
    out = layer.forward(x.copy(), training=training, rng=derive_rng(rng_seed))
    proj = proj_rng.standard_normal(out.shape)

    def scalar(v):
        return float(
            (layer.forward(v, training=training, rng=derive_rng(rng_seed)) * proj).sum()
        )

    layer.forward(x.copy(), training=training, rng=derive_rng(rng_seed))
    analytic = layer.backward(proj)
    numeric = nn.numerical_gradient(scalar, x.copy())
    err = nn.relative_error(analytic, numeric)
    assert err < tol, f"input gradient rel err {err:.2e}"


def check_param_gradients(layer, x, training=True, rng_seed=0, tol=TOL):
    proj_rng = np.random.default_rng(rng_seed + 2000)
    out = layer.forward(x.copy(), training=training, rng=derive_rng(rng_seed))
    proj = proj_rng.standard_normal(out.shape)
    for p in layer.parameters():
        p.zero_grad()
    layer.forward(x.copy(), training=training, rng=derive_rng(rng_seed))
    layer.backward(proj)
    for p in layer.parameters():
        analytic = p.grad.copy()

        def scalar(v, p=p):
            old = p.data
            p.data = v
            out = layer.forward(x.copy(), training=training, rng=derive_rng(rng_seed))
            p.data = old
            return float((out * proj).sum())

        numeric = nn.numerical_gradient(scalar, p.data.copy())
        err = nn.relative_error(analytic, numeric)
        assert err < tol, f"{p.name} rel err {err:.2e}"


class TestConv2d:
    def test_identity_1x1_kernel(self):
        conv = nn.Conv2d("c", 2, 2, kernel=1, stride=1, padding=0)
        conv.weight.data = np.eye(2).reshape(2, 2, 1, 1)
        conv.bias.data[:] = 0.0
        x = np.random.default_rng(0).standard_normal((3, 2, 5, 5))
        np.testing.assert_allclose(conv.forward(x), x, rtol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), ((4, 2), 1), (1, 0)])
    def test_gradients(self, stride, pad):
        rng = derive_rng(1, "conv-init")
        conv = nn.Conv2d("c", 3, 4, kernel=3, stride=stride, padding=pad, rng=rng)
        x = np.random.default_rng(2).standard_normal((2, 3, 8, 6))
        check_input_gradient(conv, x)
        check_param_gradients(conv, x)

    def test_channel_mismatch(self):
        conv = nn.Conv2d("c", 3, 4)
        with pytest.raises(ShapeError):
            conv.forward(np.zeros((1, 2, 8, 8)))

    def test_input_grad_skip(self):
        conv = nn.Conv2d("c", 3, 4, input_grad=False)
        out = conv.forward(np.random.default_rng(0).standard_normal((1, 3, 6, 6)))
        assert conv.backward(np.ones_like(out)) is None
        assert np.any(conv.weight.grad != 0.0)


class TestLinear:
    def test_gradients(self):
        lin = nn.Linear("l", 7, 3, rng=derive_rng(3))
        x = np.random.default_rng(4).standard_normal((5, 7))
        check_input_gradient(lin, x)
        check_param_gradients(lin, x)

    def test_shape_guard(self):
        with pytest.raises(ShapeError):
            nn.Linear("l", 7, 3).forward(np.zeros((2, 5)))


class TestActivations:
    def test_relu_all_negative(self):
        relu = nn.ReLU()
        x = -np.abs(np.random.default_rng(0).standard_normal((4, 4))) - 0.1
        assert np.all(relu.forward(x) == 0.0)
        assert np.all(relu.backward(np.ones_like(x)) == 0.0)

    def test_relu_gradient(self):
        relu = nn.ReLU()
        x = np.random.default_rng(1).standard_normal((3, 5)) + 0.05
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        check_input_gradient(relu, x)

    def test_sigmoid_gradient_and_range(self):
        sig = nn.Sigmoid()
        x = np.random.default_rng(2).standard_normal((3, 5)) * 3
        y = sig.forward(x)
        assert np.all((y > 0) & (y < 1))
        check_input_gradient(sig, x)

    def test_sigmoid_extreme_values_stable(self):
        y = nn.sigmoid(np.array([-800.0, 800.0]))
        assert y[0] == 0.0 and y[1] == 1.0


class TestDropout:
    def test_eval_mode_identity(self):
        drop = nn.Dropout(0.5)
        x = np.random.default_rng(0).standard_normal((4, 4))
        np.testing.assert_array_equal(drop.forward(x, training=False), x)

    def test_training_requires_rng(self):
        with pytest.raises(ValueError):
            nn.Dropout(0.5).forward(np.zeros((2, 2)), training=True)

    def test_masked_fraction_and_scaling(self):
        drop = nn.Dropout(0.25)
        x = np.ones((100, 100))
        out = drop.forward(x, training=True, rng=derive_rng(5))
        kept = out != 0.0
        assert abs(kept.mean() - 0.75) < 0.02
        np.testing.assert_allclose(out[kept], 1.0 / 0.75)

    def test_gradient_with_frozen_mask(self):
        drop = nn.Dropout(0.3)
        x = np.random.default_rng(6).standard_normal((4, 6))
        check_input_gradient(drop, x, rng_seed=7)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            nn.Dropout(1.0)


class TestBatchNorm:
    def test_training_normalizes(self):
        bn = nn.BatchNorm2d("bn", 3)
        x = np.random.default_rng(0).standard_normal((8, 3, 4, 4)) * 5 + 2
        y = bn.forward(x, training=True)
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1.0, atol=1e-3)

    def test_running_stats_used_in_eval(self):
        bn = nn.BatchNorm2d("bn", 2, momentum=1.0)  # adopt batch stats outright
        x = np.random.default_rng(1).standard_normal((16, 2, 3, 3)) * 2 + 1
        bn.forward(x, training=True)
        y = bn.forward(x, training=False)
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)

    def test_gradients_training_mode(self):
        bn = nn.BatchNorm2d("bn", 2)
        bn.gamma.data = np.array([1.3, 0.7])
        bn.beta.data = np.array([0.2, -0.1])
        x = np.random.default_rng(2).standard_normal((4, 2, 3, 3))
        check_input_gradient(bn, x)
        check_param_gradients(bn, x)


class TestAdaptivePool:
    def test_global_average(self):
        pool = nn.AdaptiveAvgPool2d((1, 1))
        x = np.random.default_rng(0).standard_normal((2, 3, 7, 5))
        out = pool.forward(x)
        np.testing.assert_allclose(out[:, :, 0, 0], x.mean(axis=(2, 3)))

    def test_uneven_bins_cover_input(self):
        pool = nn.AdaptiveAvgPool2d((2, 2))
        x = np.random.default_rng(1).standard_normal((1, 1, 5, 7))
        out = pool.forward(x)
        assert out.shape == (1, 1, 2, 2)

    def test_gradient(self):
        pool = nn.AdaptiveAvgPool2d((2, 2))
        x = np.random.default_rng(2).standard_normal((2, 2, 6, 5))
        check_input_gradient(pool, x)


class TestLstm:
    def test_zero_weights_zero_state(self):
        lstm = nn.LSTM("l", 4, 3)
        for p in lstm.parameters():
            p.data[...] = 0.0
        hs = lstm.forward(np.zeros((2, 5, 4)))
        np.testing.assert_array_equal(hs, np.zeros((2, 5, 3)))

    def test_single_step_equals_cell(self):
        lstm = nn.LSTM("l", 4, 3, rng=derive_rng(8))
        x = np.random.default_rng(9).standard_normal((2, 1, 4))
        hs = lstm.forward(x)
        # manual single cell step from zero state
        z = x[:, 0] @ lstm.w_x.data.T + lstm.b.data
        i = nn.sigmoid(z[:, :3])
        f = nn.sigmoid(z[:, 3:6])
        g = np.tanh(z[:, 6:9])
        o = nn.sigmoid(z[:, 9:])
        np.testing.assert_allclose(hs[:, 0], o * np.tanh(i * g), rtol=1e-12)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ArityError):
            nn.LSTM("l", 4, 3).forward(np.zeros((2, 0, 4)))

    def test_gradient_through_five_steps(self):
        lstm = nn.LSTM("l", 3, 4, rng=derive_rng(10))
        x = np.random.default_rng(11).standard_normal((2, 5, 3))
        check_input_gradient(lstm, x)
        check_param_gradients(lstm, x)


class TestResidualBlock:
    def test_gradients_with_projection(self):
        block = nn.ResidualBlock("rb", 3, 5, stride=2, rng=derive_rng(12))
        x = np.random.default_rng(13).standard_normal((2, 3, 6, 6))
        check_input_gradient(block, x, tol=2e-4)

    def test_identity_skip_path(self):
        block = nn.ResidualBlock("rb", 4, 4, stride=1, rng=derive_rng(14))
        assert block.project is None
        x = np.random.default_rng(15).standard_normal((2, 4, 5, 5))
        check_input_gradient(block, x, tol=2e-4)


class TestLoss:
    def test_weighted_positive_example(self):
        loss, _ = nn.weighted_bce(np.array([0.5]), np.array([1.0]), 9.9)
        assert loss == pytest.approx(9.9 * math.log(2.0), abs=1e-4)
        assert loss == pytest.approx(6.8622, abs=1e-4)

    def test_weight_inactive_on_negatives(self):
        for w in (1.0, 7.3, 100.0):
            loss, _ = nn.weighted_bce(np.array([0.5]), np.array([0.0]), w)
            assert loss == pytest.approx(math.log(2.0), rel=1e-12)

    def test_confident_true_positive_loss_vanishes(self):
        loss, _ = nn.weighted_bce(np.array([1.0 - 1e-9]), np.array([1.0]), 5.0)
        assert loss < 1e-5

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        probs = rng.uniform(0.05, 0.95, 8)
        labels = (rng.random(8) < 0.5).astype(float)

        def f(p):
            return nn.weighted_bce(p, labels, 3.0)[0]

        _, grad = nn.weighted_bce(probs, labels, 3.0)
        numeric = nn.numerical_gradient(f, probs.copy())
        assert nn.relative_error(grad, numeric) < TOL

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.weighted_bce(np.zeros(3), np.zeros(4), 1.0)


class TestOptimizers:
    def _param(self, value):
        p = nn.Parameter("p", np.array(value))
        return p

    def test_zero_gradient_no_change(self):
        p = self._param([1.0, 2.0])
        opt = nn.SGD([p], lr=0.5)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_sgd_arithmetic(self):
        p = self._param([1.0])
        p.grad[:] = 0.5
        nn.SGD([p], lr=1.0).step()
        assert p.data[0] == 0.5

    def test_adam_first_step_magnitude(self):
        for g in (0.001, 0.5, 100.0):
            p = self._param([0.0])
            p.grad[:] = g
            nn.Adam([p], lr=0.01).step()
            # bias-corrected first step is lr * g / (|g| + eps) ~ lr * sign(g)
            assert abs(p.data[0]) == pytest.approx(0.01, rel=1e-4)
            assert np.sign(p.data[0]) == -np.sign(g)

    def test_nan_gradient_raises(self):
        p = self._param([1.0])
        p.grad[:] = np.nan
        with pytest.raises(TrainingDivergenceError):
            nn.Adam([p], lr=0.01).step()

    def test_unknown_optimizer(self):
        with pytest.raises(ValueError):
            nn.make_optimizer("rmsprop", [], 0.1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(17)
        tensors = {
            "layer.weight": rng.standard_normal((4, 3)).astype(np.float32),
            "layer.bias": rng.standard_normal(4).astype(np.float32),
            "deep.block.w": rng.standard_normal((2, 2, 3, 3)).astype(np.float32),
        }
        path = tmp_path / "model.nnp"
        nn.save_params(path, tensors)
        back = nn.load_params(path)
        assert list(back) == list(tensors)
        for name in tensors:
            np.testing.assert_array_equal(back[name].astype(np.float32),
                                          tensors[name])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nnp"
        path.write_bytes(b"XXXX" + b"\x00" * 8)
        from blockcast.errors import FormatError

        with pytest.raises(FormatError):
            nn.load_params(path)


class TestTrainingBehavior:
    def _toy_problem(self, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((120, 2))
        labels = (x[:, 0] + x[:, 1] > 0).astype(float)[:, None]
        return x, labels

    def test_separable_toy_loss_decreases(self):
        x, labels = self._toy_problem()
        lin = nn.Linear("l", 2, 1, rng=derive_rng(18))
        sig = nn.Sigmoid()
        opt = nn.SGD(lin.parameters(), lr=0.1)
        losses = []
        for _ in range(12):
            probs = sig.forward(lin.forward(x))
            loss, dprobs = nn.weighted_bce(probs, labels, 1.0)
            opt.zero_grad()
            lin.backward(sig.backward(dprobs))
            opt.step()
            losses.append(loss)
        assert all(b < a for a, b in zip(losses[3:], losses[4:]))
        assert losses[-1] < losses[0]

    def test_bit_reproducible_updates(self):
        def run():
            lin = nn.Linear("l", 4, 2, rng=derive_rng(19))
            opt = nn.Adam(lin.parameters(), lr=1e-3)
            x = np.random.default_rng(20).standard_normal((16, 4))
            y = np.random.default_rng(21).integers(0, 2, (16, 2)).astype(float)
            sig = nn.Sigmoid()
            drop = nn.Dropout(0.4)
            for step in range(5):
                h = drop.forward(lin.forward(x), training=True,
                                 rng=derive_rng(22, step))
                probs = sig.forward(h)
                _, dprobs = nn.weighted_bce(probs, y, 2.0)
                opt.zero_grad()
                lin.backward(drop.backward(sig.backward(dprobs)))
                opt.step()
            return {p.name: p.data.copy() for p in lin.parameters()}

        r1, r2 = run(), run()
        for name in r1:
            np.testing.assert_array_equal(r1[name], r2[name])


class TestLayerFactory:
    def test_build_each_kind(self):
        rng = derive_rng(23)
        specs = [
            ("conv2d", dict(name="c", in_ch=3, out_ch=4)),
            ("residual_block", dict(name="r", in_ch=3, out_ch=3)),
            ("linear", dict(name="l", in_features=3, out_features=2)),
            ("lstm", dict(name="s", input_size=3, hidden_size=2)),
            ("relu", {}),
            ("sigmoid", {}),
            ("dropout", dict(rate=0.3)),
            ("adaptive_avg_pool", dict(out_hw=(2, 2))),
            ("batch_norm", dict(name="b", channels=3)),
        ]
        for kind, kwargs in specs:
            assert nn.build_layer(kind, rng=rng, **kwargs) is not None

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            nn.build_layer("transformer")

    def test_invalid_hyperparameters(self):
        with pytest.raises(ValueError):
            nn.build_layer("dropout", rate=1.5)
        with pytest.raises(ValueError):
            nn.build_layer("conv2d", name="c", in_ch=0, out_ch=3)
