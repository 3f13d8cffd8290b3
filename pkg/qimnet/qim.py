'''
    qim
    ===

    Quantum-inspired mechanism (QIM): a layer that turns CNN feature maps
    into density matrices and extracts second-order features from them.

    For c filters and input vectors m_i of length d (flattened feature maps):

    1. Build density matrices from the vectors (see `density`).
    2. Convolve with learned k x k kernels, add a bias, apply ReLU:
       C_j = relu(rho_j * K_j + b_j), an s x s map with s = d - k + 1.
    3. Max-pool each C_j along rows (ro_j) and columns (co_j).
    4. Concatenate as f = [co_1; ro_1; ...; co_c; ro_c], length 2 c s.

    Two modes decide which density matrix filter j sees:

    - `summed` (default): one mixture rho = sum_i w_i dyad(m_i), with
      w = softmax(logits) learned per input channel, convolved by all c
      filters. Any number of input channels.
    - `paired`: filter j convolves dyad(m_j); needs c input channels.

    Two kernels compute the same output:

    - `naive` materializes every d x d matrix and convolves it.
    - `fused` never forms a d x d matrix. With W the s x k matrix of
      windows W[t, q] = m[t + q], the map is W K W^T, computed as
      W (K W^T) in O(k^2 s + k s^2) per filter and vector.

    Both share `qim_backward`. Layers pick the cheaper one under
    `kernel='auto'`.

    # Sample Use

    .. code-block:: python

        import numpy as np
        from qimnet import qim

        config = qim.QimConfig(filters=1, size=2, mode='paired').bind(3)
        params = qim.QimParams(np.ones((1, 2, 2)), np.zeros(1))
        out = qim.qim_forward(np.array([[1., 0., 0.]]), params, config)
        out.features    # [1., 0., 1., 0.]
'''

import dataclasses
import math
import typing

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import density
from . import errors
from . import log
from . import tensor

# Logger for Qim.
LOGGER = log.new_logger('Qim')

MODES = ('summed', 'paired')
KERNELS = ('auto', 'naive', 'fused')


# CONFIGURATION
# -------------


@dataclasses.dataclass(frozen=True)
class QimConfig:
    '''
    Mechanism hyperparameters.

    `size` is the side s of each density feature map; the kernel side is
    derived when binding to the input dimension d, k = d - s + 1. A size
    larger than d is clamped to d with a warning.
    '''

    filters: int = 128
    size: int = 10
    mode: str = 'summed'
    normalize_inputs: bool = True
    kernel: str = 'auto'
    # Set by bind().
    dim: typing.Optional[int] = None
    requested_size: typing.Optional[int] = None

    activation = 'relu'

    def __post_init__(self):
        if self.filters < 1:
            raise errors.ConfigError(f'QIM filter count must be positive, got {self.filters}.')
        if self.size < 1:
            raise errors.ConfigError(f'QIM size must be positive, got {self.size}.')
        if self.mode not in MODES:
            raise errors.ConfigError(f'Unknown QIM mode "{self.mode}", expected one of {MODES}.')
        if self.kernel not in KERNELS:
            raise errors.ConfigError(f'Unknown QIM kernel "{self.kernel}", expected one of {KERNELS}.')

    @property
    def bound(self):
        return self.dim is not None

    @property
    def clamped(self):
        return self.bound and self.requested_size != self.size

    @property
    def kernel_size(self):
        '''Side k of the convolution kernels.'''

        self.require_bound()
        return self.dim - self.size + 1

    @property
    def feature_length(self):
        '''Length of the concatenated feature vector, 2 c s.'''
        return 2 * self.filters * self.size

    @property
    def warning(self):
        '''Clamping warning, or None.'''

        if not self.clamped:
            return None
        return f'QIM size {self.requested_size} exceeds d={self.dim}; clamped to {self.size}.'

    def require_bound(self):
        if not self.bound:
            raise errors.ConfigError('QIM config is not bound to an input dimension.')

    def bind(self, dim):
        '''Bind to input dimension d, deriving k and clamping s to d.'''

        if dim < 1:
            raise errors.DimensionError(f'QIM input dimension must be positive, got {dim}.')
        requested = self.size if self.requested_size is None else self.requested_size
        bound = dataclasses.replace(self, size=min(requested, dim), dim=dim, requested_size=requested)
        if bound.clamped:
            LOGGER.warning(bound.warning)
        return bound

    def describe(self):
        '''Fields that determine the parameter set, for model descriptors.'''

        return {
            'filters': self.filters,
            'size': self.requested_size or self.size,
            'mode': self.mode,
            'normalize_inputs': self.normalize_inputs,
        }


@dataclasses.dataclass
class QimParams:
    '''
    Learnable parameters: kernels (c, k, k), biases (c,) and, in summed
    mode, one mixture logit per input channel.
    '''

    kernels: np.ndarray
    biases: np.ndarray
    logits: typing.Optional[np.ndarray] = None

    def validate(self, config, channels):
        '''Check shapes against a bound config and the input channel count.'''

        k = config.kernel_size
        if self.kernels.shape != (config.filters, k, k):
            raise errors.DimensionError(
                f'Expected kernels of shape {(config.filters, k, k)}, got {self.kernels.shape}.'
            )
        if self.biases.shape != (config.filters,):
            raise errors.DimensionError(f'Expected {config.filters} biases, got shape {self.biases.shape}.')
        if config.mode == 'summed':
            if self.logits is None or self.logits.shape != (channels,):
                shape = None if self.logits is None else self.logits.shape
                raise errors.DimensionError(f'Summed mode needs {channels} mixture logits, got {shape}.')

    @property
    def weights(self):
        '''Mixture weights, softmax(logits).'''

        if self.logits is None:
            return None
        return tensor.softmax(self.logits)


def init_qim_params(config, channels, rng, dtype=np.float64):
    '''
    Initialize parameters: kernels uniform in +-sqrt(6 / (k^2 + s^2)),
    zero biases, zero logits (uniform mixture weights).
    '''

    config.require_bound()
    k = config.kernel_size
    limit = math.sqrt(6 / (k * k + config.size * config.size))
    kernels = rng.uniform(-limit, limit, size=(config.filters, k, k)).astype(dtype)
    biases = np.zeros(config.filters, dtype=dtype)
    logits = None
    if config.mode == 'summed':
        logits = np.zeros(channels, dtype=dtype)
    return QimParams(kernels, biases, logits)


# STATE
# -----


@dataclasses.dataclass
class QimState:
    '''Forward quantities retained for the backward pass.'''

    kind: str
    config: QimConfig
    single: bool
    norms: np.ndarray
    unit: np.ndarray
    weights: typing.Optional[np.ndarray]
    kernels: np.ndarray
    pre: np.ndarray
    row_argmax: np.ndarray
    col_argmax: np.ndarray
    # Naive kernel only.
    rho: typing.Optional[np.ndarray] = None

    @property
    def pattern(self):
        '''Switching decisions: ReLU mask and pooling argmaxes.'''

        return b''.join((
            np.packbits(self.pre > 0).tobytes(),
            self.row_argmax.astype(np.int32).tobytes(),
            self.col_argmax.astype(np.int32).tobytes(),
        ))


@dataclasses.dataclass
class QimOutput:
    '''
    Feature vector f (2 c s,) and post-ReLU maps C_j (c, s, s); batched
    inputs give (B, 2 c s) and (B, c, s, s).
    '''

    features: np.ndarray
    maps: np.ndarray
    state: QimState


@dataclasses.dataclass
class QimGradients:
    vectors: np.ndarray
    kernels: np.ndarray
    biases: np.ndarray
    logits: typing.Optional[np.ndarray] = None


# FLATTEN
# -------


def flatten_maps(feature_maps):
    '''
    Flatten feature maps row-major into vectors, preserving map order.

    :param feature_maps: Array (c, h, w) or (B, c, h, w), or a list of
        h x w maps.
    :return: Array (c, h * w) or (B, c, h * w).
    '''

    if isinstance(feature_maps, (list, tuple)):
        shapes = {np.shape(i) for i in feature_maps}
        if len(shapes) != 1:
            raise errors.DimensionError(f'Feature maps must share one shape, got {sorted(shapes)}.')
        feature_maps = np.stack([np.asarray(i) for i in feature_maps])
    maps = np.asarray(feature_maps)
    if maps.ndim not in (3, 4):
        raise errors.DimensionError(f'Expected (c, h, w) or (B, c, h, w) maps, got {maps.shape}.')
    return maps.reshape(maps.shape[:-2] + (-1,))


# FORWARD
# -------


def _normalize(vectors, enabled):
    norms = np.linalg.norm(vectors, axis=-1)
    if not enabled:
        return vectors, norms
    alive = norms >= density.ZERO_NORM
    safe = np.where(alive, norms, 1).astype(vectors.dtype)
    unit = vectors / safe[..., None]
    unit[~alive] = 0
    return unit, norms


def _naive_pre(unit, weights, kernels, mode):
    '''Materialize the density matrices and convolve them.'''

    k = kernels.shape[-1]
    if mode == 'summed':
        # (B, d, C) @ (B, C, d): the weighted mixture of dyads.
        rho = np.matmul(np.swapaxes(unit * weights[:, None], -1, -2), unit)
        windows = sliding_window_view(rho, (k, k), axis=(-2, -1))
        pre = np.moveaxis(np.tensordot(windows, kernels, axes=([3, 4], [1, 2])), -1, 1)
    else:
        rho = unit[..., :, None] * unit[..., None, :]
        windows = sliding_window_view(rho, (k, k), axis=(-2, -1))
        pre = np.einsum('bjstpq,jpq->bjst', windows, kernels)
    return np.ascontiguousarray(pre), rho


def _fused_pre(unit, weights, kernels, mode):
    '''Convolve without forming any d x d matrix.'''

    k = kernels.shape[-1]
    # windows[b, i, t, q] = unit[b, i, t + q]
    windows = sliding_window_view(unit, k, axis=-1)
    if mode == 'paired':
        v = np.einsum('jpq,bjtq->bjpt', kernels, windows)
        return np.matmul(windows, v)

    batch, _, size, _ = windows.shape
    pre = np.empty((batch, kernels.shape[0], size, size), dtype=unit.dtype)
    weighted = windows * weights[:, None, None]
    transposed = np.swapaxes(windows, -1, -2)
    for j, kernel in enumerate(kernels):
        v = np.matmul(kernel, transposed)
        pre[:, j] = np.matmul(weighted, v).sum(axis=1)
    return pre


def choose_kernel(config, channels):
    '''Pick naive or fused by an operation-count estimate.'''

    if config.kernel != 'auto':
        return config.kernel
    d, k, s, c = config.dim, config.kernel_size, config.size, config.filters
    if config.mode == 'paired':
        naive = c * (d * d + s * s * k * k)
        fused = c * (k * k * s + k * s * s)
    else:
        naive = channels * d * d + c * s * s * k * k
        fused = c * channels * (k * k * s + k * s * s)
    return 'fused' if fused < naive else 'naive'


def _as_batch(vectors):
    vectors = np.asarray(vectors)
    if vectors.ndim == 2:
        return vectors[None], True
    if vectors.ndim == 3:
        return vectors, False
    raise errors.DimensionError(f'Expected (C, d) or (B, C, d) vectors, got shape {vectors.shape}.')


def _check(vectors, params, config):
    if not isinstance(config, QimConfig):
        raise errors.ConfigError(f'Expected a QimConfig, got {type(config).__name__}.')
    config.require_bound()
    channels, dim = vectors.shape[1:]
    if dim != config.dim:
        raise errors.DimensionError(f'QIM bound to d={config.dim} but got vectors of length {dim}.')
    if config.mode == 'paired' and channels != config.filters:
        raise errors.ConfigError(
            f'Paired mode needs one input channel per filter: {config.filters} filters, {channels} channels.'
        )
    params.validate(config, channels)


def _run(vectors, params, config, kind):
    batch, single = _as_batch(vectors)
    _check(batch, params, config)
    dtype = batch.dtype if batch.dtype.kind == 'f' else np.dtype(np.float64)
    batch = batch.astype(dtype, copy=False)
    kernels = np.asarray(params.kernels, dtype=dtype)
    biases = np.asarray(params.biases, dtype=dtype)
    weights = None
    if config.mode == 'summed':
        weights = tensor.softmax(np.asarray(params.logits, dtype=dtype))

    unit, norms = _normalize(batch, config.normalize_inputs)
    rho = None
    if kind == 'naive':
        pre, rho = _naive_pre(unit, weights, kernels, config.mode)
    else:
        pre = _fused_pre(unit, weights, kernels, config.mode)
    pre += biases[None, :, None, None]

    maps = np.maximum(pre, 0)
    ro, row_argmax = tensor.row_max_array(maps)
    co, col_argmax = tensor.col_max_array(maps)
    features = np.stack([co, ro], axis=2).reshape(maps.shape[0], -1)
    tensor.check_finite(features, 'qim')

    state = QimState(
        kind=kind,
        config=config,
        single=single,
        norms=norms,
        unit=unit,
        weights=weights,
        kernels=kernels,
        pre=pre,
        row_argmax=row_argmax,
        col_argmax=col_argmax,
        rho=rho,
    )
    if single:
        return QimOutput(features[0], maps[0], state)
    return QimOutput(features, maps, state)


def qim_forward(vectors, params, config):
    '''
    Run the mechanism on c vectors (or a batch), materializing the density
    matrices.

    :param vectors: Array (C, d) or (B, C, d).
    :param params: QimParams.
    :param config: QimConfig bound to d.
    '''
    return _run(vectors, params, config, 'naive')


def qim_fused(vectors, params, config):
    '''Same output as `qim_forward` without forming any d x d matrix.'''
    return _run(vectors, params, config, 'fused')


# BACKWARD
# --------


def _pool_backward(grad_features, state):
    '''Route feature gradients to the recorded argmax positions, then through ReLU.'''

    pre = state.pre
    batch, filters, size, _ = pre.shape
    grad = np.asarray(grad_features, dtype=pre.dtype).reshape(batch, filters, 2, size)
    grad_maps = tensor._row_max_grad(state.row_argmax, grad[:, :, 1], pre.shape)
    grad_maps += tensor._col_max_grad(state.col_argmax, grad[:, :, 0], pre.shape)
    return grad_maps * (pre > 0)


def _unfold_backward(grad_windows, dim):
    '''Accumulate gradients of windows (..., s, k) back onto vectors (..., d).'''

    size, k = grad_windows.shape[-2:]
    grad = np.zeros(grad_windows.shape[:-2] + (dim,), dtype=grad_windows.dtype)
    for q in range(k):
        grad[..., q:q + size] += grad_windows[..., :, q]
    return grad


def _naive_backward(grad_pre, state):
    kernels = state.kernels
    k = kernels.shape[-1]
    size = grad_pre.shape[-1]
    rho = state.rho
    windows = sliding_window_view(rho, (k, k), axis=(-2, -1))

    if state.config.mode == 'summed':
        grad_kernels = np.tensordot(grad_pre, windows, axes=([0, 2, 3], [0, 1, 2]))
        grad_windows = np.tensordot(grad_pre, kernels, axes=([1], [0]))
    else:
        grad_kernels = np.einsum('bjst,bjstpq->jpq', grad_pre, windows)
        grad_windows = grad_pre[..., None, None] * kernels[None, :, None, None]

    grad_rho = np.zeros_like(rho)
    for p in range(k):
        for q in range(k):
            grad_rho[..., p:p + size, q:q + size] += grad_windows[..., p, q]

    unit = state.unit
    if state.config.mode == 'summed':
        symmetric = grad_rho + np.swapaxes(grad_rho, -1, -2)
        grad_unit = state.weights[:, None] * np.matmul(unit, symmetric)
        grad_weights = np.sum(np.matmul(unit, grad_rho) * unit, axis=(0, 2))
        return grad_unit, grad_kernels, grad_weights

    symmetric = grad_rho + np.swapaxes(grad_rho, -1, -2)
    grad_unit = np.matmul(symmetric, unit[..., None])[..., 0]
    return grad_unit, grad_kernels, None


def _fused_backward(grad_pre, state):
    kernels = state.kernels
    k = kernels.shape[-1]
    unit = state.unit
    windows = sliding_window_view(unit, k, axis=-1)

    if state.config.mode == 'paired':
        left = np.matmul(grad_pre, windows)
        right = np.matmul(np.swapaxes(grad_pre, -1, -2), windows)
        grad_kernels = np.matmul(np.swapaxes(windows, -1, -2), left).sum(axis=0)
        grad_windows = np.matmul(left, np.swapaxes(kernels, -1, -2)) + np.matmul(right, kernels)
        return _unfold_backward(grad_windows, unit.shape[-1]), grad_kernels, None

    weights = state.weights
    grad_kernels = np.zeros_like(kernels)
    grad_windows = np.zeros(windows.shape, dtype=unit.dtype)
    grad_weights = np.zeros_like(weights)
    for j, kernel in enumerate(kernels):
        grad_map = grad_pre[:, j][:, None]
        left = np.matmul(grad_map, windows)
        right = np.matmul(np.swapaxes(grad_map, -1, -2), windows)
        grad_kernels[j] = np.einsum('bisp,bisq,i->pq', windows, left, weights)
        grad_windows += weights[:, None, None] * (np.matmul(left, kernel.T) + np.matmul(right, kernel))
        grad_weights += np.sum(np.matmul(windows, kernel) * left, axis=(0, 2, 3))
    return _unfold_backward(grad_windows, unit.shape[-1]), grad_kernels, grad_weights


def qim_backward(grad_features, state):
    '''
    Gradients of the vectors, kernels, biases and (summed mode) logits
    given the gradient of the feature vector.

    :param grad_features: Gradient with the shape of QimOutput.features.
    :param state: QimOutput.state from the forward pass.
    '''

    if state is None or state.pre is None:
        raise errors.ConfigError('qim_backward needs the state of a forward pass.')
    grad_features = np.asarray(grad_features)
    if state.single:
        grad_features = grad_features[None]
    batch, filters, size, _ = state.pre.shape
    if grad_features.shape != (batch, 2 * filters * size):
        raise errors.DimensionError(
            f'Expected feature gradient of shape {(batch, 2 * filters * size)}, got {grad_features.shape}.'
        )

    grad_pre = _pool_backward(grad_features, state)
    grad_biases = grad_pre.sum(axis=(0, 2, 3))
    if state.kind == 'naive':
        grad_unit, grad_kernels, grad_weights = _naive_backward(grad_pre, state)
    else:
        grad_unit, grad_kernels, grad_weights = _fused_backward(grad_pre, state)

    grad_logits = None
    if grad_weights is not None:
        weights = state.weights
        grad_logits = weights * (grad_weights - np.dot(weights, grad_weights))

    if state.config.normalize_inputs:
        alive = state.norms >= density.ZERO_NORM
        safe = np.where(alive, state.norms, 1).astype(grad_unit.dtype)
        radial = np.sum(state.unit * grad_unit, axis=-1, keepdims=True)
        grad_vectors = (grad_unit - state.unit * radial) / safe[..., None]
        grad_vectors[~alive] = 0
    else:
        grad_vectors = grad_unit

    if state.single:
        grad_vectors = grad_vectors[0]
    return QimGradients(grad_vectors, grad_kernels, grad_biases, grad_logits)


# LAYER
# -----


def qim_block(x, kernels, biases, logits, config):
    '''
    Record the mechanism on the tape for a batch of feature maps.

    :param x: Node of shape (B, C, h, w); bound config must have d = h w.
    :param kernels: Node (c, k, k).
    :param biases: Node (c,).
    :param logits: Node (C,) in summed mode, else None.
    :param config: Bound QimConfig.
    :return: Node of shape (B, 2 c s).
    '''

    value = x.value
    vectors = value.reshape(value.shape[0], value.shape[1], -1)
    params = QimParams(
        kernels.value,
        biases.value,
        None if logits is None else logits.value,
    )
    kind = choose_kernel(config, vectors.shape[1])
    out = _run(vectors, params, config, kind)
    state = out.state

    def rule(grad):
        grads = qim_backward(grad, state)
        result = (grads.vectors.reshape(value.shape), grads.kernels, grads.biases)
        if logits is None:
            return result
        return result + (grads.logits,)

    parents = (x, kernels, biases) if logits is None else (x, kernels, biases, logits)
    return tensor.record('qim', out.features, parents, rule, state.pattern)
