import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from burstdof import ndgrad
from burstdof.ndgrad import (
    AdamState,
    NonFiniteError,
    Tape,
    Tensor,
    adam_step,
    concat,
    conv2d,
    downsample2,
    grad_check,
    gradient_suite,
    l1_loss,
    leaky_relu,
    load_checkpoint,
    mean_all,
    ms_ssim,
    mul,
    no_grad,
    save_checkpoint,
    sigmoid,
    softmax,
    sub,
    sum_axis,
    upsample2,
)


class TestTape:
    def test_shared_subexpression_accumulates(self):
        x = Tensor(np.array([1.5, -0.5, 2.0]), requires_grad=True)
        with Tape() as tape:
            y = ndgrad.sum_all(mul(x, x) + x)  # f(x) = x*x + x
        tape.backward(y)
        assert np.allclose(x.grad, 2 * x.data + 1)

    def test_no_grad_suppresses_recording(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            with no_grad():
                y = mul(x, x)
            z = ndgrad.sum_all(mul(x, Tensor(y.data)))
        tape.backward(z)
        assert not y.requires_grad or y.grad is None
        assert np.allclose(x.grad, 1.0)

    def test_backward_without_requires_grad_rejected(self):
        x = Tensor(np.ones(2))
        with Tape() as tape:
            y = mul(x, x)
        with pytest.raises(ValueError):
            tape.backward(y)

    def test_records_in_creation_order(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            a = mul(x, 2.0)
            b = a + 1.0
            c = ndgrad.sum_all(b)
        assert (a.node_id, b.node_id, c.node_id) == (0, 1, 2)
        assert len(tape) == 3


class TestElementwise:
    def test_scalar_operands(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            y = ndgrad.sum_all(2.0 * x + 1.0)
        tape.backward(y)
        assert np.allclose(x.grad, 2.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            ndgrad.add(Tensor(np.ones(2)), Tensor(np.ones(3)))

    def test_div_by_zero_trips_finite_check(self):
        with pytest.raises(NonFiniteError):
            ndgrad.div(Tensor(np.ones(2)), Tensor(np.zeros(2)))

    def test_finite_check_toggle(self):
        previous = ndgrad.set_finite_checks(False)
        try:
            out = ndgrad.div(Tensor(np.ones(2)), Tensor(np.zeros(2)))
            assert np.all(np.isinf(out.data))
        finally:
            ndgrad.set_finite_checks(previous)

    def test_l1_loss_of_identical_is_zero(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 3)))
        assert l1_loss(x, x).item() == 0.0

    def test_sum_axis(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            y = ndgrad.sum_all(mul(sum_axis(x, axis=1), Tensor(np.array([[2.0], [3.0]]))))
        tape.backward(y)
        assert np.allclose(x.grad, [[2, 2, 2], [3, 3, 3]])


class TestActivations:
    def test_softmax_equal_logits_uniform(self):
        x = Tensor(np.zeros((1, 3, 4)))
        y = softmax(x, axis=1)
        assert np.allclose(y.data, 1.0 / 3.0)

    @given(st.integers(0, 1000))
    def test_softmax_sums_to_one(self, seed):
        x = Tensor(np.random.default_rng(seed).normal(size=(2, 5, 3)) * 5)
        y = softmax(x, axis=1)
        assert np.abs(y.data.sum(axis=1) - 1.0).max() < 1e-9

    def test_leaky_relu_values(self):
        x = Tensor(np.array([-2.0, 0.0, 3.0]))
        assert np.allclose(leaky_relu(x, 0.1).data, [-0.2, 0.0, 3.0])

    def test_sigmoid_range(self):
        x = Tensor(np.linspace(-20, 20, 11))
        y = sigmoid(x).data
        assert np.all((y > 0) & (y < 1))


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.random.default_rng(1).normal(size=(1, 1, 5, 5)))
        k = Tensor(np.ones((1, 1, 1, 1)))
        assert np.array_equal(conv2d(x, k).data, x.data)

    def test_averaging_kernel_on_constant(self):
        x = Tensor(np.full((1, 1, 5, 5), 0.6))
        k = Tensor(np.full((1, 1, 3, 3), 1.0 / 9.0))
        out = conv2d(x, k, stride=1, padding=1).data[0, 0]
        # interior keeps the constant; zero padding scales the border
        assert np.allclose(out[1:-1, 1:-1], 0.6)
        assert np.allclose(out[0, 0], 0.6 * 4.0 / 9.0)
        assert np.allclose(out[0, 2], 0.6 * 6.0 / 9.0)

    def test_output_shape_formula(self):
        x = Tensor(np.zeros((2, 3, 12, 9)))
        k = Tensor(np.zeros((4, 3, 3, 3)))
        assert conv2d(x, k, stride=1, padding=1).data.shape == (2, 4, 12, 9)
        assert conv2d(x, k, stride=3, padding=0).data.shape == (2, 4, 4, 3)

    def test_strided_gradient(self):
        rng = np.random.default_rng(2)
        k = Tensor(rng.normal(size=(2, 1, 3, 3)))
        r = rng.normal(size=(1, 2, 3, 3))
        err = grad_check(
            lambda t: mean_all(mul(conv2d(t, k, stride=2, padding=1), Tensor(r))),
            rng.normal(size=(1, 1, 5, 5)),
        )
        assert err < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="channels"):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_non_tiling_stride_rejected(self):
        with pytest.raises(ValueError, match="tile"):
            conv2d(Tensor(np.zeros((1, 1, 6, 6))), Tensor(np.zeros((1, 1, 3, 3))), stride=2)


class TestResampling:
    def test_downsample_constant(self):
        x = Tensor(np.full((1, 2, 6, 6), 0.3))
        assert np.allclose(downsample2(x).data, 0.3)

    def test_downsample_is_2x2_mean(self):
        x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
        out = downsample2(x).data[0, 0]
        assert out[0, 0] == np.mean([0, 1, 4, 5])
        assert out[1, 1] == np.mean([10, 11, 14, 15])

    def test_upsample_of_downsample_constant(self):
        x = Tensor(np.full((1, 1, 8, 8), 0.42))
        assert np.allclose(upsample2(downsample2(x)).data, 0.42)

    def test_upsample_shape(self):
        x = Tensor(np.zeros((1, 3, 5, 7)))
        assert upsample2(x).data.shape == (1, 3, 10, 14)

    def test_odd_downsample_rejected(self):
        with pytest.raises(ValueError, match="even"):
            downsample2(Tensor(np.zeros((1, 1, 5, 6))))


class TestMsSsim:
    def test_identical_images(self):
        x = Tensor(np.random.default_rng(3).uniform(0, 1, (1, 1, 16, 16)))
        assert abs(ms_ssim(x, x).item() - 1.0) < 1e-9

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.uniform(0, 1, (1, 1, 16, 16)))
        b = Tensor(rng.uniform(0, 1, (1, 1, 16, 16)))
        assert ms_ssim(a, b).item() == pytest.approx(ms_ssim(b, a).item(), abs=1e-12)

    def test_range(self):
        # positively correlated pairs (the loss's operating regime) score in
        # (0, 1]; anti-correlated structure can drive SSIM negative, so the
        # hard bound is [-1, 1]
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = Tensor(rng.uniform(0, 1, (1, 1, 16, 16)))
            noisy = Tensor(np.clip(a.data + rng.normal(size=(1, 1, 16, 16)) * 0.2, 0, 1))
            v = ms_ssim(a, noisy).item()
            assert 0.0 < v <= 1.0
            other = Tensor(rng.uniform(0, 1, (1, 1, 16, 16)))
            assert -1.0 <= ms_ssim(a, other).item() <= 1.0

    def test_too_small_rejected(self):
        x = Tensor(np.zeros((1, 1, 12, 12)))
        with pytest.raises(ValueError, match="too small"):
            ms_ssim(x, x)

    def test_less_than_one_for_different_images(self):
        rng = np.random.default_rng(6)
        a = Tensor(rng.uniform(0, 1, (1, 1, 16, 16)))
        b = Tensor(np.clip(a.data + rng.normal(size=a.data.shape) * 0.05, 0, 1))
        assert ms_ssim(a, b).item() < 1.0


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = {"w": Tensor(np.array([1.0, 2.0]), requires_grad=True)}
        before = p["w"].data.copy()
        adam_step(p, {"w": np.zeros(2)}, AdamState())
        assert np.array_equal(p["w"].data, before)

    def test_constant_gradient_descends(self):
        p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
        state = AdamState(lr=0.01)
        for _ in range(50):
            adam_step(p, {"w": np.array([3.0])}, state)
        assert p["w"].data[0] < 0  # moves opposite the gradient sign

    def test_quadratic_step_decreases_x(self):
        p = {"x": Tensor(np.array([1.0]), requires_grad=True)}
        adam_step(p, {"x": np.array([2.0])}, AdamState(lr=0.1))  # df/dx of x^2 at 1
        assert 0 < p["x"].data[0] < 1.0

    def test_shape_mismatch(self):
        p = {"w": Tensor(np.zeros(2), requires_grad=True)}
        with pytest.raises(ValueError, match="shape"):
            adam_step(p, {"w": np.zeros(3)}, AdamState())

    def test_deterministic(self):
        def run():
            p = {"w": Tensor(np.array([1.0, -1.0]), requires_grad=True)}
            state = AdamState(lr=0.05)
            for i in range(20):
                adam_step(p, {"w": np.array([0.3, -0.2]) * (i + 1)}, state)
            return p["w"].data
        assert np.array_equal(run(), run())


class TestGradientSuite:
    def test_all_ops_pass(self):
        results = gradient_suite(n_seeds=10)
        for r in results:
            assert r.passed, f"{r.op}: {r.max_rel_err}"

    def test_grad_check_requires_scalar(self):
        with pytest.raises(ValueError, match="scalar"):
            grad_check(lambda t: mul(t, t), np.ones(3))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        params = {
            "a.w": Tensor(rng.normal(size=(2, 3, 3, 3))),
            "a.b": Tensor(rng.normal(size=(2,))),
            "scalar": Tensor(np.float64(1.25)),
        }
        path = tmp_path / "model.ndg"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert list(loaded) == ["a.w", "a.b", "scalar"]
        for name, p in params.items():
            assert loaded[name].shape == p.data.shape
            assert np.array_equal(loaded[name], p.data.astype(np.float32))

    def test_magic_validated(self, tmp_path):
        path = tmp_path / "bogus.ndg"
        path.write_bytes(b"XXXX")
        with pytest.raises(ValueError, match="NDG1"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "model.ndg"
        save_checkpoint({"w": Tensor(np.ones((4, 4)))}, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_deterministic_bytes(self, tmp_path):
        params = {"w": Tensor(np.linspace(0, 1, 12).reshape(3, 4))}
        save_checkpoint(params, tmp_path / "a.ndg")
        save_checkpoint(params, tmp_path / "b.ndg")
        assert (tmp_path / "a.ndg").read_bytes() == (tmp_path / "b.ndg").read_bytes()
