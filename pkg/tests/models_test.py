'''
    models_test
    ===========

    Tests for the backbones, QIM insertion and parameter accounting.
'''

import collections
import json
import unittest

import numpy as np
import numpy.testing as npt
from hypothesis import given, settings, strategies as st

from qimnet import errors
from qimnet import gradcheck
from qimnet import models
from qimnet import qim
from qimnet import tensor

MNIST = (28, 28, 1)
CIFAR = (32, 32, 3)


def images(count, shape, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(count,) + shape)


def network_grad_check(net, batch, labels, max_coords=8, attempts=10):
    '''Gradient check of the loss against every parameter of a network.'''

    names = list(net.params)

    def function(*nodes):
        return net.loss(batch, labels, params=collections.OrderedDict(zip(names, nodes)))

    inputs = list(net.state().values())
    for seed in range(attempts):
        try:
            return gradcheck.grad_check_each(function, inputs, max_coords=max_coords, seed=seed)
        except errors.KinkCrossingError:
            continue
    raise AssertionError('every draw crossed a switching point')


class ModelSpecTest(unittest.TestCase):

    def test_unknown_backbone(self):
        with self.assertRaises(errors.ConfigError):
            models.ModelSpec('resnet', MNIST, 10)

    def test_invalid_insertion(self):
        with self.assertRaises(errors.ConfigError):
            models.ModelSpec('lenet5', MNIST, 10, qim.QimConfig(), qim_after=5)

    def test_default_insertion(self):
        self.assertEqual(models.default_insertion('standardcnn'), 5)
        self.assertEqual(models.default_insertion('lenet5'), 3)
        self.assertEqual(models.default_insertion('tinycnn'), 1)
        spec = models.ModelSpec('standardcnn', MNIST, 10)
        self.assertIsNone(spec.insertion)
        self.assertEqual(spec.with_qim(qim.QimConfig()).insertion, 5)

    def test_approach(self):
        spec = models.ModelSpec('standardcnn', MNIST, 10)
        self.assertEqual(spec.approach, 'StandardCNN')
        self.assertEqual(spec.with_qim(qim.QimConfig()).approach, 'StandardCNN+QIM')
        self.assertEqual(models.ModelSpec('lenet5', MNIST, 10, qim.QimConfig()).approach, 'LeNet+QIM')

    def test_descriptor(self):
        spec = models.ModelSpec('lenet5', MNIST, 10, qim.QimConfig(filters=8, size=6))
        data = json.loads(spec.descriptor())
        self.assertEqual(data['backbone'], 'lenet5')
        self.assertEqual(data['qim']['filters'], 8)
        self.assertEqual(data['qim_after'], 3)
        self.assertNotEqual(spec.descriptor(), spec.baseline().descriptor())
        self.assertNotIn(' ', spec.descriptor())


class ShapeTest(unittest.TestCase):

    def shapes(self, spec):
        return models.resolve_layers(spec)[1]

    def test_standardcnn(self):
        self.assertEqual(self.shapes(models.ModelSpec('standardcnn', MNIST, 10)), [
            (32, 26, 26), (32, 13, 13), (64, 11, 11), (64, 5, 5), (128, 3, 3), (128, 1, 1),
            (128,), (128,), (10,),
        ])
        self.assertEqual(self.shapes(models.ModelSpec('standardcnn', CIFAR, 10)), [
            (32, 30, 30), (32, 15, 15), (64, 13, 13), (64, 6, 6), (128, 4, 4), (128, 2, 2),
            (512,), (128,), (10,),
        ])

    def test_lenet5(self):
        self.assertEqual(self.shapes(models.ModelSpec('lenet5', MNIST, 10)), [
            (6, 24, 24), (6, 12, 12), (16, 8, 8), (16, 4, 4), (256,), (84,), (10,),
        ])
        self.assertEqual(self.shapes(models.ModelSpec('lenet5', CIFAR, 100)), [
            (6, 28, 28), (6, 14, 14), (16, 10, 10), (16, 5, 5), (400,), (84,), (100,),
        ])

    def test_qim_dimension(self):
        config = qim.QimConfig(filters=32, size=8)
        layers, shapes = models.resolve_layers(models.ModelSpec('standardcnn', MNIST, 10, config))
        self.assertEqual(shapes[4], (128, 3, 3))
        self.assertEqual(layers[5].config.dim, 9)
        self.assertEqual(layers[5].config.kernel_size, 2)
        self.assertEqual(shapes[5], (512,))

        layers, _ = models.resolve_layers(models.ModelSpec('lenet5', MNIST, 10, config))
        self.assertEqual(layers[3].config.dim, 64)
        layers, _ = models.resolve_layers(models.ModelSpec('standardcnn', CIFAR, 10, config))
        self.assertEqual(layers[5].config.dim, 16)

    def test_clamped_size(self):
        config = qim.QimConfig(filters=4, size=12)
        layers, shapes = models.resolve_layers(models.ModelSpec('standardcnn', MNIST, 10, config))
        self.assertTrue(layers[5].config.clamped)
        self.assertEqual(shapes[5], (2 * 4 * 9,))

    def test_underflow(self):
        with self.assertRaises(errors.DimensionError):
            models.resolve_layers(models.ModelSpec('lenet5', (8, 8, 1), 10))
        with self.assertRaises(errors.DimensionError):
            models.resolve_layers(models.ModelSpec('standardcnn', (8, 8, 1), 10))

    def test_paired_needs_matching_channels(self):
        config = qim.QimConfig(filters=3, size=4, mode='paired')
        with self.assertRaises(errors.ConfigError):
            models.resolve_layers(models.ModelSpec('tinycnn', (8, 8, 1), 3, config))
        config = qim.QimConfig(filters=4, size=4, mode='paired')
        layers, _ = models.resolve_layers(models.ModelSpec('tinycnn', (8, 8, 1), 3, config))
        self.assertEqual(layers[1].config.dim, 36)


class ParamCountTest(unittest.TestCase):

    def test_lenet5(self):
        net = models.build_model(models.ModelSpec('lenet5', MNIST, 10), seed=0)
        self.assertEqual(models.param_count(net), 25010)

    def test_standardcnn(self):
        net = models.build_model(models.ModelSpec('standardcnn', MNIST, 10), seed=0)
        self.assertEqual(models.param_count(net), 110474)

    def test_standardcnn_qim(self):
        config = qim.QimConfig(filters=32, size=8)
        net = models.build_model(models.ModelSpec('standardcnn', MNIST, 10, config), seed=0)
        self.assertEqual(models.param_count(net), 159914)
        # QIM adds c k^2 + c + C parameters and widens the first dense layer.
        baseline = 110474
        qim_params = 32 * 2 * 2 + 32 + 128
        self.assertEqual(models.param_count(net), baseline + qim_params + (512 - 128) * 128)

    def test_matches_shapes(self):
        net = models.build_model(models.ModelSpec('lenet5', CIFAR, 100, qim.QimConfig(8, 10)), seed=0)
        self.assertEqual(net.param_count(), sum(value.size for value in net.state().values()))

    def test_empty(self):
        spec = models.ModelSpec('tinycnn', (8, 8, 1), 3)
        empty = models.Network(spec, [], [], collections.OrderedDict(), tensor.Precision.TRAIN)
        self.assertEqual(models.param_count(empty), 0)

    def test_names(self):
        net = models.build_model(models.ModelSpec('tinycnn', (8, 8, 1), 3, qim.QimConfig(2, 4)), seed=0)
        self.assertEqual(list(net.params), [
            'layer0.weight', 'layer0.bias',
            'layer1.kernels', 'layer1.biases', 'layer1.logits',
            'layer2.weight', 'layer2.bias',
            'layer3.weight', 'layer3.bias',
        ])


class ForwardTest(unittest.TestCase):

    def test_logits_shape(self):
        net = models.build_model(models.ModelSpec('standardcnn', MNIST, 10), seed=0)
        self.assertEqual(models.forward(net, images(2, MNIST)).shape, (2, 10))

    def test_qim_logits_shape(self):
        spec = models.ModelSpec('standardcnn', MNIST, 10, qim.QimConfig(filters=32, size=8))
        net = models.build_model(spec, seed=0)
        logits = models.forward(net, images(2, MNIST))
        self.assertEqual(logits.shape, (2, 10))
        self.assertEqual(logits.dtype, np.float32)
        npt.assert_allclose(tensor.softmax(logits).sum(axis=1), [1.0, 1.0], rtol=1e-6)

    def test_wrong_image_shape(self):
        net = models.build_model(models.ModelSpec('tinycnn', (8, 8, 1), 3), seed=0)
        with self.assertRaises(errors.DimensionError):
            models.forward(net, images(1, (8, 8, 3)))

    def test_deterministic(self):
        spec = models.ModelSpec('lenet5', MNIST, 10, qim.QimConfig(filters=4, size=6))
        batch = images(3, MNIST)
        first = models.forward(models.build_model(spec, 5, tensor.Precision.VERIFY), batch)
        second = models.forward(models.build_model(spec, 5, tensor.Precision.VERIFY), batch)
        npt.assert_array_equal(first, second)
        third = models.forward(models.build_model(spec, 6, tensor.Precision.VERIFY), batch)
        self.assertFalse(np.array_equal(first, third))

    def test_load_state(self):
        spec = models.ModelSpec('tinycnn', (8, 8, 1), 3)
        source = models.build_model(spec, 1)
        target = models.build_model(spec, 2)
        target.load_state(source.state())
        batch = images(2, (8, 8, 1))
        npt.assert_array_equal(models.forward(target, batch), models.forward(source, batch))
        with self.assertRaises(errors.DimensionError):
            target.load_state(collections.OrderedDict(list(source.state().items())[:1]))

    @settings(deadline=None, max_examples=15)
    @given(st.integers(1, 8), st.integers(1, 40), st.sampled_from(qim.MODES))
    def test_qim_preserves_logits_shape(self, filters, size, mode):
        if mode == 'paired':
            filters = 4
        spec = models.ModelSpec('tinycnn', (8, 8, 1), 3, qim.QimConfig(filters, size, mode))
        net = models.build_model(spec, seed=0)
        self.assertEqual(models.forward(net, images(2, (8, 8, 1))).shape, (2, 3))


class NetworkGradientTest(unittest.TestCase):

    def check(self, spec):
        net = models.build_model(spec, seed=3, precision=tensor.Precision.VERIFY)
        # Zero conv biases leave many outputs exactly at the ReLU kink, where
        # every finite-difference draw would cross a switching point.
        state = net.state()
        state['layer0.bias'] = np.full_like(state['layer0.bias'], 2.0)
        net.load_state(state)
        batch = images(2, (8, 8, 1), seed=4)
        errors_ = network_grad_check(net, batch, np.array([0, 2]))
        for name, error in zip(net.params, errors_):
            self.assertLess(error, gradcheck.TOLERANCE, msg=name)

    def test_baseline(self):
        self.check(models.ModelSpec('tinycnn', (8, 8, 1), 3))

    def test_summed_qim(self):
        self.check(models.ModelSpec('tinycnn', (8, 8, 1), 3, qim.QimConfig(filters=2, size=4)))

    def test_paired_qim(self):
        self.check(models.ModelSpec('tinycnn', (8, 8, 1), 3, qim.QimConfig(filters=4, size=4, mode='paired')))


if __name__ == '__main__':
    unittest.main()
