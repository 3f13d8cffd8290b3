'''
    gradcheck_test
    ==============

    Tests for the finite-difference gradient checker and the gate suite.
'''

import math
import unittest
from unittest import mock

import numpy as np
import numpy.testing as npt

from qimnet import errors
from qimnet import gradcheck
from qimnet import tensor


def ones_like(node):
    return tensor.constant(np.ones(node.shape))


def broken_relu_grad(mask, grad):
    return 2 * grad * mask


class RelativeErrorTest(unittest.TestCase):

    def test_values(self):
        npt.assert_allclose(gradcheck.relative_error([2.0, 0.0], [1.0, 0.0]), [0.5, 0.0])

    def test_floor(self):
        self.assertAlmostEqual(float(gradcheck.relative_error(1e-12, 0.0)), 1e-4)


class GradCheckTest(unittest.TestCase):

    def test_square(self):
        error = gradcheck.grad_check(lambda x: tensor.inner(x, x), [np.array([3.0])])
        self.assertLess(error, 1e-8)

    def test_relu_away_from_kink(self):
        error = gradcheck.grad_check(lambda x: tensor.inner(tensor.relu(x), ones_like(x)), [np.array([1.0])])
        self.assertLess(error, 1e-8)

    def test_per_input_errors(self):
        inputs = [np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.5, -1.0])]
        errors_ = gradcheck.grad_check_each(
            lambda w, x: tensor.inner(tensor.affine(x, w, tensor.constant(np.zeros(2))), ones_like(x)),
            inputs,
        )
        self.assertEqual(len(errors_), 2)
        self.assertTrue(all(error < 1e-8 for error in errors_))

    def test_requires_scalar(self):
        with self.assertRaises(errors.DimensionError):
            gradcheck.grad_check(tensor.relu, [np.array([1.0, 2.0])])

    def test_kink_crossing(self):
        with self.assertRaises(errors.KinkCrossingError) as context:
            gradcheck.grad_check(lambda x: tensor.inner(tensor.relu(x), ones_like(x)), [np.array([1e-7])])
        self.assertEqual(context.exception.input_index, 0)
        self.assertEqual(context.exception.coordinate, 0)

    def test_detects_wrong_gradient(self):
        with mock.patch.object(tensor, '_relu_grad', broken_relu_grad):
            error = gradcheck.grad_check(lambda x: tensor.inner(tensor.relu(x), ones_like(x)), [np.array([1.0])])
        self.assertAlmostEqual(error, 0.5, places=6)

    def test_max_coords(self):
        calls = []

        def function(x):
            calls.append(1)
            return tensor.inner(x, x)

        gradcheck.grad_check(function, [np.arange(50.0)], max_coords=5)
        # One analytic pass, then two perturbed passes per sampled coordinate.
        self.assertEqual(len(calls), 1 + 2 * 5)


class SuiteTest(unittest.TestCase):

    def test_case_names(self):
        names = list(gradcheck.suite_cases())
        for name in ('conv2d_valid', 'relu', 'row_col_max', 'affine', 'softmax_cross_entropy'):
            self.assertIn(name, names)
        for mode in ('summed', 'paired'):
            for kernel in ('naive', 'fused'):
                for dim, k, filters in gradcheck.QIM_GRID:
                    self.assertIn(gradcheck.qim_case_name(mode, kernel, dim, k, filters), names)
        self.assertEqual(len([name for name in names if name.startswith('qim_block')]), 4 * 12)

    def test_qim_grid(self):
        self.assertEqual(len(gradcheck.QIM_GRID), 12)
        self.assertIn((12, 5, 3), gradcheck.QIM_GRID)
        self.assertEqual(gradcheck.qim_case_name('paired', 'naive', 6, 2, 1), 'qim_block[paired,naive,d=6,k=2,c=1]')

    def test_qim_block(self):
        names = [name for name in gradcheck.suite_cases() if name.startswith('qim_block')]
        results = gradcheck.run_suite(seeds=2, names=names)
        for result in results:
            self.assertTrue(result.passed, msg=str(result))
        name = gradcheck.qim_case_name('summed', 'fused', 12, 5, 3)
        parameters = {result.parameter for result in results if result.component == name}
        self.assertEqual(parameters, {'vectors', 'kernels', 'biases', 'logits'})

    def test_suite_passes(self):
        results = gradcheck.run_suite()
        failed = [str(result) for result in results if not result.passed]
        self.assertEqual(failed, [])
        self.assertGreaterEqual(gradcheck.SUITE_SEEDS, 20)
        self.assertTrue(all(result.seeds == gradcheck.SUITE_SEEDS for result in results))
        # Every operation and every QIM grid point reports.
        self.assertEqual({result.component for result in results}, set(gradcheck.suite_cases()))

    def test_suite_catches_broken_relu(self):
        with mock.patch.object(tensor, '_relu_grad', broken_relu_grad):
            results = gradcheck.run_suite(seeds=3, names=['relu', 'affine'])
        failed = {result.component for result in results if not result.passed}
        self.assertEqual(failed, {'relu'})
        self.assertTrue(str(next(r for r in results if r.component == 'relu')).endswith('FAIL'))

    def test_error_result(self):
        def factory(rng, index):
            raise errors.DimensionError('bad case')

        results = gradcheck.check_component('broken', factory, seeds=1)
        self.assertEqual(len(results), 1)
        self.assertFalse(results[0].passed)
        self.assertTrue(math.isinf(results[0].error))
        self.assertEqual(results[0].parameter, '-')


if __name__ == '__main__':
    unittest.main()
