import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from univnet import tensor as T
from univnet.errors import DimensionError
from univnet.gradcheck import OP_TOLERANCE, check_gradients, op_cases
from univnet.tensor import Tensor


def leaf(data):
    return Tensor(np.asarray(data, dtype=T.get_default_dtype()), requires_grad=True)


class TestConv1d:
    def test_hand_example(self):
        out = T.conv1d(Tensor([[1.0, 2.0, 3.0]]), Tensor([[[1.0, 1.0]]]), Tensor([0.0]))
        np.testing.assert_allclose(out.data, [[3.0, 5.0]])

    def test_identity_kernel(self, rng):
        x = rng.standard_normal((2, 3, 11)).astype(np.float32)
        w = np.eye(3, dtype=np.float32)[:, :, None]
        out = T.conv1d(Tensor(x), Tensor(w), Tensor(np.zeros(3, np.float32)))
        np.testing.assert_array_equal(out.data, x)

    @pytest.mark.parametrize("t,k,stride,dilation,pad", [(10, 3, 1, 1, 0), (17, 5, 2, 3, 4), (9, 1, 3, 1, 2)])
    def test_output_length(self, t, k, stride, dilation, pad):
        out = T.conv1d(Tensor(np.ones((1, 2, t))), Tensor(np.ones((3, 2, k))), stride=stride,
                       dilation=dilation, padding=pad)
        assert out.shape[-1] == (t + 2 * pad - dilation * (k - 1) - 1) // stride + 1

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            T.conv1d(Tensor(np.ones((1, 2, 5))), Tensor(np.ones((1, 3, 3))))

    def test_matches_direct_sum(self, rng, f64):
        x = rng.standard_normal((1, 2, 13))
        w = rng.standard_normal((3, 2, 3))
        out = T.conv1d(Tensor(x), Tensor(w), stride=2, dilation=2).data
        expected = np.zeros_like(out)
        for o in range(3):
            for t in range(out.shape[-1]):
                expected[0, o, t] = sum(w[o, c, j] * x[0, c, 2 * t + 2 * j] for c in range(2) for j in range(3))
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestConvTranspose:
    def test_upsampled_length(self):
        x = Tensor(np.ones((1, 4, 20)))
        w = Tensor(np.ones((4, 4, 16)))
        assert T.conv_transpose1d(x, w, stride=8, padding=4).shape == (1, 4, 160)

    def test_impulse_places_kernel(self, f64):
        x = np.zeros((1, 1, 5))
        x[0, 0, 2] = 1.0
        kernel = np.arange(1.0, 5.0)
        out = T.conv_transpose1d(Tensor(x), Tensor(kernel.reshape(1, 1, 4)), stride=2, padding=0).data[0, 0]
        expected = np.zeros(12)
        expected[4:8] = kernel
        np.testing.assert_array_equal(out, expected)

    def test_adjoint_of_strided_conv(self, rng, f64):
        # <conv(x), y> == <x, conv_T(y)> for matching stride and padding
        x = rng.standard_normal((1, 3, 16))
        w = rng.standard_normal((2, 3, 4))
        y = rng.standard_normal((1, 2, 8))
        lhs = np.sum(T.conv1d(Tensor(x), Tensor(w), stride=2, padding=1).data * y)
        rhs = np.sum(x * T.conv_transpose1d(Tensor(y), Tensor(w), stride=2, padding=1).data)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestConv2d:
    def test_identity(self, rng):
        x = rng.standard_normal((1, 1, 4, 5)).astype(np.float32)
        out = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1), np.float32)))
        np.testing.assert_array_equal(out.data, x)

    def test_average_of_constant(self):
        x = Tensor(np.full((1, 1, 6, 7), 3.0, np.float32))
        out = T.conv2d(x, Tensor(np.full((1, 1, 3, 3), 1 / 9, np.float32)))
        np.testing.assert_allclose(out.data, 3.0, rtol=1e-6)

    def test_same_shape_arithmetic(self):
        out = T.conv2d(Tensor(np.ones((2, 3, 10, 33))), Tensor(np.ones((4, 3, 3, 9))), stride=(1, 2),
                       padding=(1, 4))
        assert out.shape == (2, 4, 10, 17)


class TestPointwise:
    def test_leaky_relu(self):
        assert T.leaky_relu(Tensor(-1.0), 0.2).item() == pytest.approx(-0.2)

    def test_frobenius_identity(self):
        assert T.frobenius_norm(Tensor(np.eye(3))).item() == pytest.approx(np.sqrt(3))

    def test_tanh_grad_at_zero(self):
        x = leaf(0.0)
        T.tanh(x).backward()
        assert x.grad == pytest.approx(1.0)

    def test_sigmoid_stable_at_extremes(self):
        out = T.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])

    def test_frobenius_grad_zero_at_origin(self):
        x = leaf(np.zeros(4))
        T.frobenius_norm(x).backward()
        np.testing.assert_array_equal(x.grad, 0.0)


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = leaf(rng.standard_normal((3, 4)))
        T.tsum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_sum_of_squares(self, rng, f64):
        data = rng.standard_normal(7)
        x = leaf(data)
        T.tsum(x * x).backward()
        np.testing.assert_allclose(x.grad, 2 * data)

    def test_shared_subexpression_accumulates(self, f64):
        x = leaf(3.0)
        y = x * x
        (y + y * x).backward()
        assert x.grad == pytest.approx(2 * 3.0 + 3 * 9.0)

    def test_non_scalar_needs_seed(self):
        with pytest.raises(ValueError):
            leaf(np.ones(3)).backward()

    def test_no_grad_builds_no_graph(self):
        x = leaf(np.ones(3))
        with T.no_grad():
            y = x * 2
        assert not y.requires_grad

    def test_float32_preserved_with_scalars(self):
        x = Tensor(np.ones(3, np.float32))
        assert (x * 0.5 + 1.0).dtype == np.float32

    def test_repeated_backward_accumulates(self):
        x = leaf(np.ones(2))
        T.tsum(x).backward()
        T.tsum(x).backward()
        np.testing.assert_array_equal(x.grad, 2.0)


class TestPadding:
    def test_reflect_excludes_edge(self):
        out = T.pad_last(Tensor(np.array([1.0, 2.0, 3.0, 4.0])), 2, 1, "reflect").data
        np.testing.assert_array_equal(out, [3, 2, 1, 2, 3, 4, 3])

    def test_edge(self):
        out = T.pad_last(Tensor(np.array([1.0, 2.0])), 2, 1, "edge").data
        np.testing.assert_array_equal(out, [1, 1, 1, 2, 2])

    def test_reflect_too_short(self):
        with pytest.raises(DimensionError):
            T.pad_last(Tensor(np.ones(3)), 3, 0, "reflect")


class TestWeightNorm:
    @given(hnp.arrays(np.float64, (3, 2, 4), elements=st.floats(-3, 3)).filter(
               lambda v: np.all(np.linalg.norm(v.reshape(3, -1), axis=1) > 1e-3)),
           hnp.arrays(np.float64, 3, elements=st.floats(-2, 2)))
    def test_row_norm_equals_g(self, v, g):
        w = T.weight_norm(Tensor(v), Tensor(g), 0).data
        np.testing.assert_allclose(np.linalg.norm(w.reshape(3, -1), axis=1), np.abs(g), atol=1e-5)

    def test_transposed_layout(self, rng):
        v, g = rng.standard_normal((2, 3, 4)), np.array([0.5, 1.0, 2.0])
        w = T.weight_norm(Tensor(v), Tensor(g), 1).data
        np.testing.assert_allclose(np.linalg.norm(w.transpose(1, 0, 2).reshape(3, -1), axis=1), g, rtol=1e-6)


class TestInvariants:
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=5),
                      elements=st.floats(-5, 5)))
    def test_grad_shape_matches_and_is_finite(self, data):
        x = Tensor(data, requires_grad=True)
        loss = T.tsum(T.tanh(x) * T.sigmoid(x) + T.leaky_relu(x) * x)
        loss.backward()
        assert x.grad.shape == x.shape
        assert np.all(np.isfinite(x.grad))
        assert x.data.size == int(np.prod(x.shape))

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(4, 12), st.integers(1, 4),
           st.integers(1, 3), st.integers(1, 2))
    def test_conv1d_length_formula(self, c_in, c_out, t, k, dilation, stride):
        if dilation * (k - 1) + 1 > t:
            return
        out = T.conv1d(Tensor(np.ones((1, c_in, t))), Tensor(np.ones((c_out, c_in, k))),
                       stride=stride, dilation=dilation)
        assert out.shape == (1, c_out, (t - dilation * (k - 1) - 1) // stride + 1)


@pytest.mark.parametrize("index", range(len(op_cases(np.random.default_rng(0)))))
def test_op_gradient(index):
    with T.default_dtype(np.float64):
        rng = np.random.default_rng(index)
        name, fn, inputs = op_cases(rng)[index]
        result = check_gradients(name, fn, inputs, OP_TOLERANCE, rng)
    assert result.passed, f"{name}: {result.rel_error:.3e}"
