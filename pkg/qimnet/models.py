'''
    models
    ======

    Backbone CNNs with an optional QIM insertion point.

    Layers are declarative: each resolves its output shape from its input
    shape, allocates its parameters, and applies itself on the tape.
    Feature maps travel channel-first, (B, C, H, W); images arrive as
    (B, H, W, C) and are transposed on entry.

    Backbones (valid 3x3 or 5x5 convolution + ReLU, 2x2 max-pool, floor
    on odd sides):

    - standardcnn: conv(32,3)/pool/conv(64,3)/pool/conv(128,3)/pool,
      FC(128), FC(classes).
    - lenet5: conv(6,5)/pool/conv(16,5)/pool, FC(84), FC(classes).
    - tinycnn: conv(4,3)/pool, FC(16), FC(classes), small enough for
      whole-network gradient checks.

    With QIM enabled, the feature layers are cut after `qim_after` layers
    (default: after the last convolution), and the plain flatten is
    replaced by the QIM block feeding the same two-layer FC head.
'''

import collections
import dataclasses
import json
import math
import typing

import numpy as np

from . import errors
from . import log
from . import qim as qim_module
from . import tensor

# Logger for Models.
LOGGER = log.new_logger('Models')


# LAYERS
# ------


def _uniform(rng, limit, shape, dtype):
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclasses.dataclass(frozen=True)
class Conv2d:
    '''Valid stride-1 convolution followed by ReLU.'''

    filters: int
    kernel: int = 3

    kind = 'conv'

    def resolve(self, shape):
        channels, height, width = shape
        if self.kernel > height or self.kernel > width:
            raise errors.DimensionError(
                f'{self.kernel}x{self.kernel} convolution underflows a {height}x{width} input.'
            )
        return self, (self.filters, height - self.kernel + 1, width - self.kernel + 1)

    def init(self, shape, rng, dtype):
        fan_in = shape[0] * self.kernel * self.kernel
        limit = math.sqrt(6 / fan_in)
        return collections.OrderedDict(
            weight=_uniform(rng, limit, (self.filters, shape[0], self.kernel, self.kernel), dtype),
            bias=np.zeros(self.filters, dtype=dtype),
        )

    def forward(self, x, params):
        return tensor.relu(tensor.conv2d(x, params['weight'], params['bias']))


@dataclasses.dataclass(frozen=True)
class MaxPool2d:
    size: int = 2

    kind = 'pool'

    def resolve(self, shape):
        channels, height, width = shape
        if height < self.size or width < self.size:
            raise errors.DimensionError(f'{self.size}x{self.size} pooling underflows a {height}x{width} input.')
        return self, (channels, height // self.size, width // self.size)

    def init(self, shape, rng, dtype):
        return collections.OrderedDict()

    def forward(self, x, params):
        return tensor.max_pool2d(x, self.size)


@dataclasses.dataclass(frozen=True)
class Flatten:
    kind = 'flatten'

    def resolve(self, shape):
        return self, (int(np.prod(shape)),)

    def init(self, shape, rng, dtype):
        return collections.OrderedDict()

    def forward(self, x, params):
        return tensor.flatten(x)


@dataclasses.dataclass(frozen=True)
class Dense:
    '''Fully connected layer, optionally followed by ReLU.'''

    units: int
    activation: typing.Optional[str] = None

    kind = 'dense'

    def resolve(self, shape):
        if len(shape) != 1:
            raise errors.DimensionError(f'Dense layers need flat inputs, got shape {shape}.')
        return self, (self.units,)

    def init(self, shape, rng, dtype):
        fan_in = shape[0]
        if self.activation == 'relu':
            limit = math.sqrt(6 / fan_in)
        else:
            limit = math.sqrt(6 / (fan_in + self.units))
        return collections.OrderedDict(
            weight=_uniform(rng, limit, (self.units, fan_in), dtype),
            bias=np.zeros(self.units, dtype=dtype),
        )

    def forward(self, x, params):
        out = tensor.affine(x, params['weight'], params['bias'])
        if self.activation == 'relu':
            out = tensor.relu(out)
        return out


@dataclasses.dataclass(frozen=True)
class Qim:
    '''QIM block over the flattened channels of its input maps.'''

    config: qim_module.QimConfig

    kind = 'qim'

    def resolve(self, shape):
        channels, height, width = shape
        config = self.config.bind(height * width)
        if config.mode == 'paired' and config.filters != channels:
            raise errors.ConfigError(
                f'Paired QIM needs one filter per input channel: {config.filters} filters, {channels} channels.'
            )
        return Qim(config), (config.feature_length,)

    def init(self, shape, rng, dtype):
        params = qim_module.init_qim_params(self.config, shape[0], rng, dtype)
        result = collections.OrderedDict(kernels=params.kernels, biases=params.biases)
        if params.logits is not None:
            result['logits'] = params.logits
        return result

    def forward(self, x, params):
        return qim_module.qim_block(x, params['kernels'], params['biases'], params.get('logits'), self.config)


# BACKBONES
# ---------

Backbone = collections.namedtuple('Backbone', 'label features hidden')

BACKBONES = {
    'standardcnn': Backbone(
        'StandardCNN',
        (Conv2d(32, 3), MaxPool2d(2), Conv2d(64, 3), MaxPool2d(2), Conv2d(128, 3), MaxPool2d(2)),
        128,
    ),
    'lenet5': Backbone(
        'LeNet',
        (Conv2d(6, 5), MaxPool2d(2), Conv2d(16, 5), MaxPool2d(2)),
        84,
    ),
    'tinycnn': Backbone(
        'TinyCNN',
        (Conv2d(4, 3), MaxPool2d(2)),
        16,
    ),
}


def default_insertion(backbone):
    '''Number of feature layers kept before QIM: through the last convolution.'''

    features = BACKBONES[backbone].features
    return max(i + 1 for i, layer in enumerate(features) if layer.kind == 'conv')


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    '''
    Declarative architecture.

    :param backbone: One of `BACKBONES`.
    :param input_shape: Image shape (H, W, C).
    :param classes: Number of classes.
    :param qim: (Optional) Unbound QimConfig enabling the QIM block.
    :param qim_after: (Optional) Number of backbone feature layers applied
        before QIM, 0 for the raw image.
    '''

    backbone: str
    input_shape: typing.Tuple[int, int, int]
    classes: int
    qim: typing.Optional[qim_module.QimConfig] = None
    qim_after: typing.Optional[int] = None

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise errors.ConfigError(f'Unknown backbone "{self.backbone}", expected one of {sorted(BACKBONES)}.')
        shape = tuple(int(i) for i in self.input_shape)
        if len(shape) != 3 or min(shape) < 1:
            raise errors.DimensionError(f'Input shape must be positive (H, W, C), got {self.input_shape}.')
        object.__setattr__(self, 'input_shape', shape)
        if self.classes < 1:
            raise errors.ConfigError(f'Class count must be positive, got {self.classes}.')
        if self.qim_after is not None:
            count = len(BACKBONES[self.backbone].features)
            if not 0 <= self.qim_after <= count:
                raise errors.ConfigError(f'QIM insertion must lie in [0, {count}] for {self.backbone}.')

    @property
    def insertion(self):
        '''Resolved insertion point, or None without QIM.'''

        if self.qim is None:
            return None
        if self.qim_after is None:
            return default_insertion(self.backbone)
        return self.qim_after

    @property
    def approach(self):
        '''Label used in reports, e.g. "StandardCNN+QIM".'''

        label = BACKBONES[self.backbone].label
        if self.qim is None:
            return label
        return f'{label}+QIM'

    def layers(self):
        '''Unresolved layer chain.'''

        backbone = BACKBONES[self.backbone]
        head = (Dense(backbone.hidden, 'relu'), Dense(self.classes))
        if self.qim is None:
            return backbone.features + (Flatten(),) + head
        return backbone.features[:self.insertion] + (Qim(self.qim),) + head

    def descriptor(self):
        '''Canonical JSON identifying the parameter layout.'''

        data = {
            'backbone': self.backbone,
            'input_shape': list(self.input_shape),
            'classes': self.classes,
            'qim': None if self.qim is None else self.qim.describe(),
            'qim_after': self.insertion,
        }
        return json.dumps(data, sort_keys=True, separators=(',', ':'))

    def with_qim(self, config, qim_after=None):
        return dataclasses.replace(self, qim=config, qim_after=qim_after)

    def baseline(self):
        return dataclasses.replace(self, qim=None, qim_after=None)


# NETWORK
# -------


class Network:
    '''
    Resolved layer chain and its parameters.

    Parameters are named `layer<index>.<role>`, e.g. `layer0.weight`,
    `layer6.kernels`, in initialization order.
    '''

    def __init__(self, spec, layers, shapes, params, precision):
        self.spec = spec
        self.layers = layers
        self.shapes = shapes
        self.params = params
        self.precision = precision

    @property
    def dtype(self):
        return self.precision.dtype

    @property
    def qim_layer(self):
        for layer in self.layers:
            if layer.kind == 'qim':
                return layer
        return None

    def param_count(self):
        return sum(node.size for node in self.params.values())

    def _layer_params(self, index, params):
        prefix = f'layer{index}.'
        return {
            name[len(prefix):]: node
            for name, node in params.items()
            if name.startswith(prefix)
        }

    def logits(self, images, params=None):
        '''
        Logits node for a batch of images.

        :param images: Array (B, H, W, C) of pixels in [0, 1].
        :param params: (Optional) Mapping of parameter names to nodes,
            replacing the network's own.
        '''

        images = np.asarray(images)
        if images.ndim != 4 or images.shape[1:] != self.spec.input_shape:
            raise errors.DimensionError(
                f'Expected images of shape (B, {", ".join(map(str, self.spec.input_shape))}), got {images.shape}.'
            )
        params = self.params if params is None else params
        x = tensor.constant(np.ascontiguousarray(images.transpose(0, 3, 1, 2)), dtype=self.dtype)
        for index, layer in enumerate(self.layers):
            x = layer.forward(x, self._layer_params(index, params))
        return x

    def loss(self, images, labels, params=None):
        '''Mean softmax cross-entropy over the batch.'''
        return tensor.softmax_cross_entropy(self.logits(images, params), labels)

    def state(self):
        '''Parameter arrays by name.'''
        return collections.OrderedDict((name, node.value) for name, node in self.params.items())

    def load_state(self, state):
        '''Assign parameter arrays by name; names and shapes must match.'''

        if list(state) != list(self.params):
            raise errors.DimensionError('Parameter names do not match the network.')
        for name, value in state.items():
            self.params[name].assign(value)

    def __repr__(self):
        return f'Network({self.spec.approach}, params={self.param_count()})'


def resolve_layers(spec):
    '''Resolve every layer against its input shape, returning layers and output shapes.'''

    height, width, channels = spec.input_shape
    shape = (channels, height, width)
    layers = []
    shapes = []
    for layer in spec.layers():
        layer, shape = layer.resolve(shape)
        layers.append(layer)
        shapes.append(shape)
    return layers, shapes


def build_model(spec, seed, precision=tensor.Precision.TRAIN):
    '''
    Instantiate a network with parameters drawn deterministically from seed.

    .. code-block:: python

        spec = ModelSpec('lenet5', (28, 28, 1), 10)
        net = build_model(spec, seed=0)
        net.param_count()   # 25010
    '''

    precision = tensor.Precision.parse(precision)
    layers, shapes = resolve_layers(spec)
    rng = np.random.default_rng(seed)
    params = collections.OrderedDict()
    height, width, channels = spec.input_shape
    shape = (channels, height, width)
    for index, layer in enumerate(layers):
        for role, value in layer.init(shape, rng, precision.dtype).items():
            params[f'layer{index}.{role}'] = tensor.parameter(value, name=f'layer{index}.{role}')
        shape = shapes[index]

    net = Network(spec, layers, shapes, params, precision)
    LOGGER.debug(f'Built {net!r} with shapes {shapes}.')
    return net


def forward(net, batch):
    '''Logits array (B, classes) for a batch of images (B, H, W, C).'''
    return np.array(net.logits(batch).value)


def param_count(net):
    '''Total number of parameter elements.'''
    return net.param_count()
