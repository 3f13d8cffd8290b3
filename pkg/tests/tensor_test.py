'''
    tensor_test
    ===========

    Tests for the differentiable operations.
'''

import math
import unittest

import numpy as np
import numpy.testing as npt
from hypothesis import given, settings, strategies as st

from qimnet import errors
from qimnet import tensor


def constant(value):
    return tensor.constant(np.array(value, dtype=np.float64))


def param(value):
    return tensor.parameter(np.array(value, dtype=np.float64))


class PrecisionTest(unittest.TestCase):

    def test_dtypes(self):
        self.assertEqual(tensor.Precision.TRAIN.dtype, np.float32)
        self.assertEqual(tensor.Precision.VERIFY.dtype, np.float64)

    def test_parse(self):
        self.assertIs(tensor.Precision.parse('verify'), tensor.Precision.VERIFY)
        self.assertIs(tensor.Precision.parse(' Train '), tensor.Precision.TRAIN)
        with self.assertRaises(errors.ConfigError):
            tensor.Precision.parse('half')

    def test_as_tensor(self):
        value = tensor.as_tensor([[1, 2], [3, 4]])
        self.assertEqual(value.shape, (2, 2))
        self.assertFalse(value.flags.writeable)
        with self.assertRaises(errors.DimensionError):
            tensor.as_tensor([])
        with self.assertRaises(errors.NumericalError):
            tensor.as_tensor([1.0, math.nan])


class NodeTest(unittest.TestCase):

    def test_value_is_immutable(self):
        array = np.ones(3)
        node = tensor.parameter(array)
        with self.assertRaises(ValueError):
            node.value[0] = 2.0
        self.assertTrue(array.flags.writeable)

    def test_gradient_shape(self):
        node = param(np.zeros((2, 3)))
        self.assertEqual(node.grad.shape, node.value.shape)

    def test_backward_requires_scalar(self):
        x = param([1.0, 2.0])
        with self.assertRaises(errors.DimensionError):
            tensor.backward(tensor.relu(x))

    def test_backward_resets_gradients(self):
        x = param([1.0, -2.0, 3.0])
        loss = tensor.inner(x, x)
        tensor.backward(loss)
        first = x.grad.copy()
        tensor.backward(loss)
        npt.assert_array_equal(x.grad, first)
        npt.assert_array_equal(first, [2.0, -4.0, 6.0])

    def test_shared_node_accumulates(self):
        x = param([1.0, 2.0])
        y = tensor.relu(x)
        loss = tensor.add(tensor.inner(y, constant([1.0, 1.0])), tensor.inner(y, constant([2.0, 3.0])))
        tensor.backward(loss)
        npt.assert_array_equal(x.grad, [3.0, 4.0])

    def test_assign_checks_shape(self):
        node = param([1.0, 2.0])
        with self.assertRaises(errors.DimensionError):
            node.assign([1.0])


class Conv2dValidTest(unittest.TestCase):

    def test_identity_kernel(self):
        out = tensor.conv2d_valid(constant([[1, 2], [3, 4]]), constant([[1]]))
        npt.assert_array_equal(out.value, [[1, 2], [3, 4]])

    def test_sum_kernel(self):
        out = tensor.conv2d_valid(constant([[1, 2], [3, 4]]), constant([[1, 1], [1, 1]]))
        npt.assert_array_equal(out.value, [[10]])

    def test_no_kernel_flip(self):
        image = np.arange(1, 10).reshape(3, 3)
        out = tensor.conv2d_valid(constant(image), constant([[0, 0], [0, 1]]))
        npt.assert_array_equal(out.value, [[5, 6], [8, 9]])

    def test_kernel_too_large(self):
        with self.assertRaises(errors.DimensionError):
            tensor.conv2d_valid(constant(np.ones((2, 3))), constant(np.ones((3, 3))))

    def test_gradients(self):
        x = param(np.arange(9.0).reshape(3, 3))
        kernel = param([[1.0, 2.0], [3.0, 4.0]])
        loss = tensor.inner(tensor.conv2d_valid(x, kernel), constant(np.ones((2, 2))))
        tensor.backward(loss)
        # Each kernel entry sees the sum of a 2x2 block of the input.
        npt.assert_array_equal(kernel.grad, [[8.0, 12.0], [20.0, 24.0]])
        npt.assert_array_equal(x.grad, [[1, 3, 2], [4, 10, 6], [3, 7, 4]])

    @settings(deadline=None, max_examples=30)
    @given(
        st.integers(1, 16),
        st.integers(1, 16),
        st.integers(1, 16),
        st.integers(0, 2 ** 32 - 1),
    )
    def test_linearity(self, height, width, k, seed):
        k = min(k, height, width)
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((height, width))
        b = rng.standard_normal((height, width))
        kernel = constant(rng.standard_normal((k, k)))
        alpha, beta = rng.standard_normal(2)

        combined = tensor.conv2d_valid(constant(alpha * a + beta * b), kernel).value
        separate = (
            alpha * tensor.conv2d_valid(constant(a), kernel).value
            + beta * tensor.conv2d_valid(constant(b), kernel).value
        )
        npt.assert_allclose(combined, separate, rtol=0, atol=1e-12 * max(1.0, np.abs(separate).max()))


class Conv2dTest(unittest.TestCase):

    def test_matches_single_channel(self):
        rng = np.random.default_rng(3)
        image = rng.standard_normal((5, 6))
        kernel = rng.standard_normal((3, 3))
        batched = tensor.conv2d(constant(image[None, None]), constant(kernel[None, None]))
        single = tensor.conv2d_valid(constant(image), constant(kernel))
        npt.assert_allclose(batched.value[0, 0], single.value, atol=1e-12)

    def test_shape_and_bias(self):
        x = constant(np.zeros((2, 3, 6, 5)))
        weight = constant(np.zeros((4, 3, 3, 3)))
        bias = constant([1.0, 2.0, 3.0, 4.0])
        out = tensor.conv2d(x, weight, bias)
        self.assertEqual(out.shape, (2, 4, 4, 3))
        npt.assert_array_equal(out.value[1, :, 2, 1], [1.0, 2.0, 3.0, 4.0])

    def test_channel_mismatch(self):
        with self.assertRaises(errors.DimensionError):
            tensor.conv2d(constant(np.zeros((1, 2, 4, 4))), constant(np.zeros((1, 3, 2, 2))))


class ReluTest(unittest.TestCase):

    def test_values(self):
        npt.assert_array_equal(tensor.relu(constant([-1, 0, 2])).value, [0, 0, 2])
        npt.assert_array_equal(tensor.relu(constant([-3, -1, -0.5])).value, [0, 0, 0])

    def test_gradient_at_zero(self):
        x = param([0.0, 1.0, -1.0])
        tensor.backward(tensor.inner(tensor.relu(x), constant([1.0, 1.0, 1.0])))
        npt.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_pattern(self):
        out = tensor.relu(constant([1.0, -1.0]))
        self.assertEqual(out.pattern, np.packbits([True, False]).tobytes())


class MaxPoolTest(unittest.TestCase):

    def test_floor_on_odd_sides(self):
        x = constant(np.arange(35.0).reshape(1, 1, 5, 7))
        out = tensor.max_pool2d(x, 2)
        self.assertEqual(out.shape, (1, 1, 2, 3))
        npt.assert_array_equal(out.value[0, 0], [[8, 10, 12], [22, 24, 26]])

    def test_ties_route_to_lowest_index(self):
        x = param(np.ones((1, 1, 2, 2)))
        tensor.backward(tensor.inner(tensor.max_pool2d(x, 2), constant(np.ones((1, 1, 1, 1)))))
        npt.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])

    def test_underflow(self):
        with self.assertRaises(errors.DimensionError):
            tensor.max_pool2d(constant(np.ones((1, 1, 1, 4))), 2)


class RowColMaxTest(unittest.TestCase):

    def test_values(self):
        pooled = tensor.row_col_max(constant([[1, 5], [3, 2]]))
        npt.assert_array_equal(pooled.rows.value, [5, 3])
        npt.assert_array_equal(pooled.cols.value, [3, 5])

    def test_tie_breaks_low(self):
        rows, argmax = tensor.row_max(constant([[2, 2], [0, 1]]))
        self.assertEqual(rows.value[0], 2)
        self.assertEqual(argmax[0], 0)

    def test_single_entry(self):
        pooled = tensor.row_col_max(constant([[7]]))
        npt.assert_array_equal(pooled.rows.value, [7])
        npt.assert_array_equal(pooled.cols.value, [7])

    def test_empty(self):
        with self.assertRaises(errors.DimensionError):
            tensor.row_col_max(constant(np.zeros((0, 0))))

    def test_not_square(self):
        with self.assertRaises(errors.DimensionError):
            tensor.row_col_max(constant(np.zeros((2, 3))))

    def test_gradient_routes_to_argmax(self):
        maps = param([[1.0, 5.0], [3.0, 2.0]])
        pooled = tensor.row_col_max(maps)
        loss = tensor.add(
            tensor.inner(pooled.rows, constant([1.0, 10.0])),
            tensor.inner(pooled.cols, constant([100.0, 1000.0])),
        )
        tensor.backward(loss)
        npt.assert_array_equal(maps.grad, [[0.0, 1001.0], [110.0, 0.0]])

    @settings(deadline=None, max_examples=30)
    @given(st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
    def test_symmetric_rows_equal_cols(self, size, seed):
        a = np.random.default_rng(seed).standard_normal((size, size))
        pooled = tensor.row_col_max(constant(a + a.T))
        npt.assert_array_equal(pooled.rows.value, pooled.cols.value)


class AffineTest(unittest.TestCase):

    def test_identity(self):
        x = constant([1.5, -2.0])
        out = tensor.affine(x, constant(np.eye(2)), constant([0.0, 0.0]))
        npt.assert_array_equal(out.value, [1.5, -2.0])

    def test_zero_weight(self):
        out = tensor.affine(constant([1.0, 2.0]), constant(np.zeros((3, 2))), constant([1.0, 2.0, 3.0]))
        npt.assert_array_equal(out.value, [1.0, 2.0, 3.0])

    def test_example(self):
        out = tensor.affine(constant([1, 1]), constant([[1, 2], [3, 4]]), constant([0, 0]))
        npt.assert_array_equal(out.value, [3, 7])

    def test_batch(self):
        x = constant([[1, 1], [0, 1]])
        out = tensor.affine(x, constant([[1, 2], [3, 4]]), constant([1, 1]))
        npt.assert_array_equal(out.value, [[4, 8], [3, 5]])

    def test_mismatch(self):
        with self.assertRaises(errors.DimensionError):
            tensor.affine(constant([1, 2, 3]), constant(np.eye(2)), constant([0, 0]))
        with self.assertRaises(errors.DimensionError):
            tensor.affine(constant([1, 2]), constant(np.eye(2)), constant([0, 0, 0]))


class SoftmaxCrossEntropyTest(unittest.TestCase):

    def test_uniform_logits(self):
        loss = tensor.softmax_cross_entropy(constant(np.zeros(10)), 3)
        self.assertAlmostEqual(float(loss.value), math.log(10), places=12)

    def test_gradient(self):
        logits = param([0.0, 0.0])
        tensor.backward(tensor.softmax_cross_entropy(logits, 0))
        npt.assert_allclose(logits.grad, [-0.5, 0.5])

    def test_confident_limit(self):
        loss = tensor.softmax_cross_entropy(constant([50.0, 0.0, 0.0]), 0)
        self.assertLess(float(loss.value), 1e-20)

    def test_label_out_of_range(self):
        with self.assertRaises(errors.DataError):
            tensor.softmax_cross_entropy(constant([0.0, 0.0]), 2)
        with self.assertRaises(errors.DataError):
            tensor.softmax_cross_entropy(constant([0.0, 0.0]), -1)

    def test_batch_mean(self):
        logits = constant([[0.0, 0.0], [0.0, 0.0]])
        loss = tensor.softmax_cross_entropy(logits, [0, 1])
        self.assertAlmostEqual(float(loss.value), math.log(2), places=12)

    def test_softmax_rows_sum_to_one(self):
        probs = tensor.softmax(np.array([[1000.0, 0.0, -1000.0], [1.0, 2.0, 3.0]]))
        npt.assert_allclose(probs.sum(axis=1), [1.0, 1.0])

    @settings(deadline=None, max_examples=50)
    @given(st.integers(2, 20), st.integers(0, 2 ** 32 - 1))
    def test_non_negative(self, classes, seed):
        rng = np.random.default_rng(seed)
        logits = constant(10 * rng.standard_normal(classes))
        label = int(rng.integers(classes))
        self.assertGreaterEqual(float(tensor.softmax_cross_entropy(logits, label).value), 0.0)


if __name__ == '__main__':
    unittest.main()
