'''
    tensor
    ======

    Dense tensor values and the small set of differentiable operations the
    rest of qimnet is built on.

    Values are NumPy arrays marked read-only once constructed. A `Node`
    pairs a value with its gradient and the rule that sends the gradient to
    the node's parents; `backward` runs the rules in reverse topological
    order from a scalar loss.

    Conventions:

    - "Convolution" is cross-correlation with no kernel flip, stride 1 and
      no padding ("valid").
    - The ReLU subgradient at 0 is 0.
    - Max-pooling ties break to the lowest linear index.

    Ops with switching points (ReLU, max-pooling, row/column maxima) store
    their discrete decisions on the output node as `pattern`, which the
    gradient checker uses to detect steps that cross a switching point.

    # Thread Safety

    Values are immutable and may be shared between readers. `backward`
    mutates gradients and must have a single writer.
'''

import collections
import enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import errors

# PRECISION
# ---------


class Precision(enum.Enum):
    '''Floating-point precision: 32-bit for training, 64-bit for verification.'''

    TRAIN = 'train'
    VERIFY = 'verify'

    @property
    def dtype(self):
        '''Get the NumPy dtype for the precision.'''

        if self is Precision.TRAIN:
            return np.dtype(np.float32)
        return np.dtype(np.float64)

    @staticmethod
    def parse(value):
        '''Parse a precision from its name.'''

        if isinstance(value, Precision):
            return value
        try:
            return Precision(str(value).strip().lower())
        except ValueError:
            raise errors.ConfigError(f'Unknown precision "{value}", expected train or verify.') from None


def freeze(array):
    '''Mark an array read-only and return it.'''

    array.setflags(write=False)
    return array


def check_finite(value, op):
    '''Raise if an operation produced NaN or Inf.'''

    if not np.all(np.isfinite(value)):
        raise errors.NumericalError(f'{op} produced non-finite values.')


def as_tensor(data, precision=Precision.VERIFY):
    '''Copy data into an immutable, finite tensor of the given precision.'''

    value = np.array(data, dtype=Precision.parse(precision).dtype)
    if value.size == 0:
        raise errors.DimensionError('Tensors must have positive extents.')
    check_finite(value, 'as_tensor')
    return freeze(value)


# NODES
# -----


class Node:
    '''
    Differentiable value: a tensor, its gradient and the rule that
    propagates the gradient to the parents.

    :param value: Tensor value.
    :param parents: (Optional) Nodes the value was computed from.
    :param rule: (Optional) Callable mapping the output gradient to a
        tuple with one gradient (or None) per parent.
    :param op: (Optional) Name of the producing operation.
    :param pattern: (Optional) Bytes describing the switching decisions.
    :param requires_grad: (Optional) Whether gradients flow into the node.
    :param name: (Optional) Name for diagnostics, e.g. `layer0.weight`.
    '''

    __slots__ = ('value', 'grad', 'parents', 'rule', 'op', 'pattern', 'requires_grad', 'name')

    def __init__(
        self,
        value,
        parents=(),
        rule=None,
        op='leaf',
        pattern=None,
        requires_grad=True,
        name=None,
    ):
        # Freeze a view, so the caller's array stays writable.
        self.value = freeze(np.asarray(value).view())
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.rule = rule
        self.op = op
        self.pattern = pattern
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def size(self):
        return self.value.size

    def assign(self, value):
        '''Replace the value, keeping shape and dtype.'''

        value = np.array(value, dtype=self.value.dtype)
        if value.shape != self.value.shape:
            raise errors.DimensionError(
                f'Cannot assign shape {value.shape} to {self.name or self.op} of shape {self.value.shape}.'
            )
        self.value = freeze(value)

    def __repr__(self):
        label = self.name or self.op
        return f'Node({label}, shape={self.value.shape}, dtype={self.value.dtype})'


def constant(value, dtype=None):
    '''Create a leaf that does not receive gradients.'''

    return Node(np.asarray(value, dtype=dtype), op='constant', requires_grad=False)


def parameter(value, name=None):
    '''Create a leaf that receives gradients.'''

    return Node(np.array(value), op='parameter', name=name)


def record(op, value, parents, rule, pattern=None):
    '''Record the output of an operation on the tape.'''

    check_finite(value, op)
    if not any(parent.requires_grad for parent in parents):
        return Node(value, op=op, pattern=pattern, requires_grad=False)
    return Node(value, parents, rule, op, pattern)


def topological_order(root):
    '''Get every node reachable from root, parents before children.'''

    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    '''
    Populate the gradient of every node reachable from a scalar loss.

    Gradients are reset at the start of each pass, so every reachable
    gradient holds exactly the contribution of this pass.
    '''

    if loss.value.size != 1:
        raise errors.DimensionError(f'backward requires a scalar loss, got shape {loss.value.shape}.')

    order = topological_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)

    for node in reversed(order):
        if node.rule is None:
            continue
        grads = node.rule(node.grad)
        for parent, grad in zip(node.parents, grads):
            if grad is None or not parent.requires_grad:
                continue
            parent.grad += np.reshape(grad, parent.value.shape)


def collect_pattern(root):
    '''Concatenate the switching patterns of every node reachable from root.'''

    return b''.join(
        node.pattern for node in topological_order(root)
        if node.pattern is not None
    )


# ELEMENTWISE
# -----------


def add(a, b):
    '''Elementwise sum of two nodes of identical shape.'''

    if a.shape != b.shape:
        raise errors.DimensionError(f'Cannot add shapes {a.shape} and {b.shape}.')
    return record('add', a.value + b.value, (a, b), lambda grad: (grad, grad))


def inner(a, b):
    '''Sum of the elementwise product of two nodes, a scalar.'''

    if a.shape != b.shape:
        raise errors.DimensionError(f'Cannot contract shapes {a.shape} and {b.shape}.')
    value = np.asarray(np.sum(a.value * b.value))

    def rule(grad):
        return (grad * b.value, grad * a.value)

    return record('inner', value, (a, b), rule)


def reshape(x, shape):
    '''Reshape without copying, row-major.'''

    value = x.value.reshape(shape)
    return record('reshape', value, (x,), lambda grad: (grad.reshape(x.shape),))


def flatten(x):
    '''Flatten every axis but the first (batch) axis.'''
    return reshape(x, (x.shape[0], -1))


def _relu_grad(mask, grad):
    return grad * mask


def relu(x):
    '''Elementwise max(x, 0), with subgradient 0 at 0.'''

    mask = x.value > 0
    value = np.where(mask, x.value, 0).astype(x.dtype)

    def rule(grad):
        return (_relu_grad(mask, grad),)

    return record('relu', value, (x,), rule, np.packbits(mask).tobytes())


# CONVOLUTION
# -----------


def _col2im(grad_cols, shape, kernel_shape):
    '''Accumulate window gradients (B, oh, ow, C, kh, kw) back onto the input.'''

    kh, kw = kernel_shape
    _, oh, ow, _, _, _ = grad_cols.shape
    grad = np.zeros(shape, dtype=grad_cols.dtype)
    for p in range(kh):
        for q in range(kw):
            grad[:, :, p:p + oh, q:q + ow] += grad_cols[:, :, :, :, p, q].transpose(0, 3, 1, 2)
    return grad


def conv2d(x, weight, bias=None):
    '''
    Valid, stride-1 cross-correlation over a batch.

    :param x: Input node of shape (B, C, H, W).
    :param weight: Kernel node of shape (O, C, kh, kw).
    :param bias: (Optional) Bias node of shape (O,).
    :return: Node of shape (B, O, H - kh + 1, W - kw + 1).
    '''

    xv = x.value
    wv = weight.value
    if xv.ndim != 4 or wv.ndim != 4 or wv.shape[1] != xv.shape[1]:
        raise errors.DimensionError(f'conv2d got input {xv.shape} and kernel {wv.shape}.')
    batch, channels, height, width = xv.shape
    filters, _, kh, kw = wv.shape
    if kh > height or kw > width:
        raise errors.DimensionError(f'Kernel {kh}x{kw} is larger than input {height}x{width}.')
    if bias is not None and bias.shape != (filters,):
        raise errors.DimensionError(f'conv2d bias must have shape ({filters},), got {bias.shape}.')

    oh = height - kh + 1
    ow = width - kw + 1
    # (B, C, oh, ow, kh, kw) -> (B * oh * ow, C * kh * kw)
    windows = sliding_window_view(xv, (kh, kw), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * oh * ow, channels * kh * kw)
    wmat = wv.reshape(filters, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.value
    value = np.ascontiguousarray(out.reshape(batch, oh, ow, filters).transpose(0, 3, 1, 2))

    def rule(grad):
        g = grad.transpose(0, 2, 3, 1).reshape(-1, filters)
        grad_weight = (g.T @ cols).reshape(wv.shape)
        grad_x = None
        if x.requires_grad:
            grad_cols = (g @ wmat).reshape(batch, oh, ow, channels, kh, kw)
            grad_x = _col2im(grad_cols, xv.shape, (kh, kw))
        if bias is None:
            return (grad_x, grad_weight)
        return (grad_x, grad_weight, g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return record('conv2d', value, parents, rule)


def conv2d_valid(x, kernel):
    '''
    Valid cross-correlation of a single H x W input with a k x k kernel.

    out[a, b] = sum_{p, q} x[a + p, b + q] * kernel[p, q]
    '''

    if x.value.ndim != 2 or kernel.value.ndim != 2:
        raise errors.DimensionError(f'conv2d_valid expects 2-D operands, got {x.shape} and {kernel.shape}.')
    height, width = x.shape
    kh, kw = kernel.shape
    out = conv2d(reshape(x, (1, 1, height, width)), reshape(kernel, (1, 1, kh, kw)))
    return reshape(out, (height - kh + 1, width - kw + 1))


# POOLING
# -------


def max_pool2d(x, size=2):
    '''
    Non-overlapping max-pooling over (B, C, H, W), dropping odd remainders.

    Ties break to the lowest linear index inside each window.
    '''

    xv = x.value
    if xv.ndim != 4:
        raise errors.DimensionError(f'max_pool2d expects (B, C, H, W), got {xv.shape}.')
    batch, channels, height, width = xv.shape
    oh = height // size
    ow = width // size
    if oh == 0 or ow == 0:
        raise errors.DimensionError(f'Cannot pool {height}x{width} with a {size}x{size} window.')

    cropped = xv[:, :, :oh * size, :ow * size]
    windows = cropped.reshape(batch, channels, oh, size, ow, size)
    windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, oh, ow, size * size)
    argmax = windows.argmax(axis=-1)
    value = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def rule(grad):
        grad_windows = np.zeros(windows.shape, dtype=grad.dtype)
        np.put_along_axis(grad_windows, argmax[..., None], grad[..., None], axis=-1)
        grad_windows = grad_windows.reshape(batch, channels, oh, ow, size, size)
        grad_windows = grad_windows.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, oh * size, ow * size)
        grad_x = np.zeros(xv.shape, dtype=grad.dtype)
        grad_x[:, :, :oh * size, :ow * size] = grad_windows
        return (grad_x,)

    return record('max_pool2d', value, (x,), rule, argmax.astype(np.int32).tobytes())


RowColMax = collections.namedtuple('RowColMax', 'rows cols row_argmax col_argmax')


def row_max_array(maps):
    '''Row maxima of (..., s, s) maps and their column indices.'''

    argmax = maps.argmax(axis=-1)
    return np.take_along_axis(maps, argmax[..., None], axis=-1)[..., 0], argmax


def col_max_array(maps):
    '''Column maxima of (..., s, s) maps and their row indices.'''

    argmax = maps.argmax(axis=-2)
    return np.take_along_axis(maps, argmax[..., None, :], axis=-2)[..., 0, :], argmax


def _check_square(maps, op):
    if maps.size == 0:
        raise errors.DimensionError(f'{op} got an empty tensor.')
    if maps.ndim < 2 or maps.shape[-1] != maps.shape[-2]:
        raise errors.DimensionError(f'{op} expects square maps, got {maps.shape}.')


def _row_max_grad(argmax, grad, shape):
    out = np.zeros(shape, dtype=grad.dtype)
    np.put_along_axis(out, argmax[..., None], grad[..., None], axis=-1)
    return out


def _col_max_grad(argmax, grad, shape):
    out = np.zeros(shape, dtype=grad.dtype)
    np.put_along_axis(out, argmax[..., None, :], grad[..., None, :], axis=-2)
    return out


def row_max(maps):
    '''Maximum over each row of square (..., s, s) maps.'''

    _check_square(maps.value, 'row_max')
    value, argmax = row_max_array(maps.value)

    def rule(grad):
        return (_row_max_grad(argmax, grad, maps.shape),)

    return record('row_max', value, (maps,), rule, argmax.astype(np.int32).tobytes()), argmax


def col_max(maps):
    '''Maximum over each column of square (..., s, s) maps.'''

    _check_square(maps.value, 'col_max')
    value, argmax = col_max_array(maps.value)

    def rule(grad):
        return (_col_max_grad(argmax, grad, maps.shape),)

    return record('col_max', value, (maps,), rule, argmax.astype(np.int32).tobytes()), argmax


def row_col_max(maps):
    '''
    Row-wise and column-wise max-pooling of square maps.

    Gradients are routed only to the recorded argmax positions.

    .. code-block:: python

        pooled = row_col_max(constant([[1., 5.], [3., 2.]]))
        pooled.rows.value   # [5., 3.]
        pooled.cols.value   # [3., 5.]
    '''

    rows, row_argmax = row_max(maps)
    cols, col_argmax = col_max(maps)
    return RowColMax(rows, cols, row_argmax, col_argmax)


# DENSE
# -----


def affine(x, weight, bias):
    '''
    Fully connected layer, W x + b.

    :param x: Node of shape (n,) or (B, n).
    :param weight: Node of shape (m, n).
    :param bias: Node of shape (m,).
    '''

    xv = x.value
    wv = weight.value
    if wv.ndim != 2 or xv.ndim not in (1, 2) or xv.shape[-1] != wv.shape[1] or bias.shape != (wv.shape[0],):
        raise errors.DimensionError(
            f'affine got x {xv.shape}, W {wv.shape}, b {bias.shape}.'
        )
    value = xv @ wv.T + bias.value

    def rule(grad):
        if xv.ndim == 1:
            return (grad @ wv, np.outer(grad, xv), grad)
        return (grad @ wv, grad.T @ xv, grad.sum(axis=0))

    return record('affine', value, (x, weight, bias), rule)


# LOSS
# ----


def softmax(logits):
    '''Row-wise softmax of an array, with max-subtraction.'''

    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    '''
    Mean of -log(softmax(logits)[label]) over the batch.

    :param logits: Node of shape (C,) or (B, C).
    :param labels: Class index, or array of B class indices.
    :return: Scalar node.
    '''

    zv = logits.value
    single = zv.ndim == 1
    z = zv[None, :] if single else zv
    if z.ndim != 2:
        raise errors.DimensionError(f'softmax_cross_entropy expects (C,) or (B, C) logits, got {zv.shape}.')
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch, classes = z.shape
    if labels.shape != (batch,):
        raise errors.DimensionError(f'Expected {batch} labels, got shape {labels.shape}.')
    if np.any(labels < 0) or np.any(labels >= classes):
        raise errors.DataError(f'Labels must lie in [0, {classes}), got {labels.min()}..{labels.max()}.')

    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    value = np.asarray(np.mean(log_norm - shifted[rows, labels]), dtype=zv.dtype)

    def rule(grad):
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1
        out = probs * (grad / batch)
        return (out[0] if single else out,)

    return record('softmax_cross_entropy', value, (logits,), rule)
