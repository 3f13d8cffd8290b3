'''
    gradcheck
    =========

    Central finite-difference checks of reverse-mode gradients, and the
    gate suite run by `qimnet gradcheck`.

    Every check runs at verification precision (64-bit). The error for one
    coordinate is |a - b| / max(|a|, |b|, 1e-8), with `a` the analytic and
    `b` the numerical derivative; a check reports the maximum over the
    coordinates it perturbed.

    Finite differences are meaningless across a switching point of ReLU or
    max-pooling. Each perturbed pass compares the switching pattern recorded
    on the tape against the unperturbed pass, and raises `KinkCrossingError`
    when it differs. The suite then redraws the case from a derived seed.

    The suite checks every operation over `SUITE_SEEDS` draws. The QIM block
    is one component per (mode, kernel, d, k, c) point of `QIM_GRID`, each
    over the same number of draws.
'''

import collections
import dataclasses
import itertools
import math

import numpy as np

from . import errors
from . import log
from . import qim
from . import tensor

# Logger for GradCheck.
LOGGER = log.new_logger('GradCheck')

EPSILON = 1e-5
TOLERANCE = 1e-4
DENOMINATOR_FLOOR = 1e-8
# Draws per checked operation, and per QIM grid point.
SUITE_SEEDS = 20
SUITE_COORDS = 16
MAX_REDRAWS = 20

# QIM grid: input dimensions (as map shapes), kernel sides, filter counts.
QIM_MAPS = {6: (2, 3), 12: (3, 4), 25: (5, 5)}
QIM_KERNELS = (2, 5)
QIM_FILTERS = (1, 3)
QIM_GRID = tuple(itertools.product(QIM_MAPS, QIM_KERNELS, QIM_FILTERS))


# CHECK
# -----


def relative_error(analytic, numerical):
    '''Elementwise |a - b| / max(|a|, |b|, 1e-8).'''

    analytic = np.asarray(analytic, dtype=np.float64)
    numerical = np.asarray(numerical, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numerical)), DENOMINATOR_FLOOR)
    return np.abs(analytic - numerical) / scale


def _evaluate(function, arrays):
    nodes = [tensor.parameter(array) for array in arrays]
    out = function(*nodes)
    if not isinstance(out, tensor.Node) or out.value.size != 1:
        shape = getattr(out, 'shape', None)
        raise errors.DimensionError(f'grad_check needs a scalar output, got shape {shape}.')
    return out, nodes


def _coordinates(size, max_coords, rng):
    if max_coords is None or max_coords >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_coords, replace=False))


def grad_check_each(function, inputs, eps=EPSILON, max_coords=None, seed=0):
    '''
    Compare analytic and numerical gradients of each input.

    :param function: Callable taking one Node per input, returning a scalar Node.
    :param inputs: Sequence of arrays.
    :param eps: (Optional) Perturbation for central differences.
    :param max_coords: (Optional) Perturb at most this many coordinates per
        input, drawn deterministically from `seed`.
    :param seed: (Optional) Seed for coordinate sampling.
    :return: List with the maximum relative error of each input.
    '''

    dtype = tensor.Precision.VERIFY.dtype
    arrays = [np.array(array, dtype=dtype) for array in inputs]
    out, nodes = _evaluate(function, arrays)
    pattern = tensor.collect_pattern(out)
    tensor.backward(out)
    analytic = [node.grad.copy() for node in nodes]

    rng = np.random.default_rng(seed)
    result = []
    for index, array in enumerate(arrays):
        worst = 0.0
        for coordinate in _coordinates(array.size, max_coords, rng):
            values = []
            for step in (eps, -eps):
                shifted = [a.copy() for a in arrays]
                shifted[index].flat[coordinate] += step
                shifted_out, _ = _evaluate(function, shifted)
                if tensor.collect_pattern(shifted_out) != pattern:
                    raise errors.KinkCrossingError(
                        f'Step on input {index} at coordinate {coordinate} crossed a switching point.',
                        input_index=index,
                        coordinate=int(coordinate),
                    )
                values.append(float(shifted_out.value.reshape(())))
            numerical = (values[0] - values[1]) / (2 * eps)
            error = float(relative_error(analytic[index].flat[coordinate], numerical))
            worst = max(worst, error)
        result.append(worst)
    return result


def grad_check(function, inputs, eps=EPSILON, max_coords=None, seed=0):
    '''
    Maximum relative error between reverse-mode and central-difference
    gradients over every input.

    .. code-block:: python

        # f(x) = x . x at x = 3
        grad_check(lambda x: tensor.inner(x, x), [np.array([3.])])
    '''
    return max(grad_check_each(function, inputs, eps, max_coords, seed), default=0.0)


# SUITE
# -----


Case = collections.namedtuple('Case', 'function inputs')


def _projection(shape, rng):
    '''Random fixed weights turning an output into the scalar sum(R * out).'''

    weights = tensor.constant(rng.standard_normal(shape))
    return lambda out: tensor.inner(out, weights)


def _conv2d_valid_case(rng, index):
    height, width = rng.integers(3, 8, size=2)
    k = int(rng.integers(1, min(height, width) + 1))
    project = _projection((height - k + 1, width - k + 1), rng)
    inputs = collections.OrderedDict(
        input=rng.standard_normal((height, width)),
        kernel=rng.standard_normal((k, k)),
    )
    return Case(lambda x, kernel: project(tensor.conv2d_valid(x, kernel)), inputs)


def _relu_case(rng, index):
    project = _projection((12,), rng)
    inputs = collections.OrderedDict(x=rng.standard_normal(12))
    return Case(lambda x: project(tensor.relu(x)), inputs)


def _row_col_max_case(rng, index):
    size = int(rng.integers(1, 6))
    project_rows = _projection((size,), rng)
    project_cols = _projection((size,), rng)

    def function(maps):
        pooled = tensor.row_col_max(maps)
        return tensor.add(project_rows(pooled.rows), project_cols(pooled.cols))

    return Case(function, collections.OrderedDict(maps=rng.standard_normal((size, size))))


def _affine_case(rng, index):
    n, m = rng.integers(1, 7, size=2)
    project = _projection((m,), rng)
    inputs = collections.OrderedDict(
        x=rng.standard_normal(n),
        weight=rng.standard_normal((m, n)),
        bias=rng.standard_normal(m),
    )
    return Case(lambda x, weight, bias: project(tensor.affine(x, weight, bias)), inputs)


def _softmax_cross_entropy_case(rng, index):
    batch, classes = 3, 5
    labels = rng.integers(0, classes, size=batch)
    inputs = collections.OrderedDict(logits=rng.standard_normal((batch, classes)))
    return Case(lambda logits: tensor.softmax_cross_entropy(logits, labels), inputs)


def _conv2d_case(rng, index):
    project = _projection((2, 3, 3, 4), rng)
    inputs = collections.OrderedDict(
        input=rng.standard_normal((2, 2, 5, 6)),
        weight=rng.standard_normal((3, 2, 3, 3)),
        bias=rng.standard_normal(3),
    )
    return Case(lambda x, weight, bias: project(tensor.conv2d(x, weight, bias)), inputs)


def _max_pool2d_case(rng, index):
    project = _projection((2, 2, 2, 2), rng)
    inputs = collections.OrderedDict(input=rng.standard_normal((2, 2, 4, 5)))
    return Case(lambda x: project(tensor.max_pool2d(x, 2)), inputs)


def qim_case_name(mode, kernel, dim, k, filters):
    return f'qim_block[{mode},{kernel},d={dim},k={k},c={filters}]'


def _qim_case(mode, kernel, dim, k, filters):
    def factory(rng, index):
        channels = filters if mode == 'paired' else filters + 1
        config = qim.QimConfig(filters=filters, size=dim - k + 1, mode=mode, kernel=kernel).bind(dim)
        project = _projection((2, config.feature_length), rng)
        inputs = collections.OrderedDict(
            vectors=rng.standard_normal((2, channels) + QIM_MAPS[dim]),
            kernels=rng.standard_normal((filters, k, k)),
            biases=0.1 * rng.standard_normal(filters),
        )
        if mode == 'summed':
            inputs['logits'] = rng.standard_normal(channels)

            def function(x, kernels, biases, logits):
                return project(qim.qim_block(x, kernels, biases, logits, config))
        else:
            def function(x, kernels, biases):
                return project(qim.qim_block(x, kernels, biases, None, config))

        return Case(function, inputs)

    return factory


def suite_cases():
    '''Named case factories, one per differentiable operation.'''

    cases = collections.OrderedDict([
        ('conv2d_valid', _conv2d_valid_case),
        ('relu', _relu_case),
        ('row_col_max', _row_col_max_case),
        ('affine', _affine_case),
        ('softmax_cross_entropy', _softmax_cross_entropy_case),
        ('conv2d', _conv2d_case),
        ('max_pool2d', _max_pool2d_case),
    ])
    for mode in qim.MODES:
        for kernel in ('naive', 'fused'):
            for dim, k, filters in QIM_GRID:
                cases[qim_case_name(mode, kernel, dim, k, filters)] = _qim_case(mode, kernel, dim, k, filters)
    return cases


@dataclasses.dataclass
class CheckResult:
    '''Worst relative error of one input of one operation over all seeds.'''

    component: str
    parameter: str
    error: float
    seeds: int
    redraws: int = 0
    tolerance: float = TOLERANCE
    message: str = ''

    @property
    def passed(self):
        return math.isfinite(self.error) and self.error <= self.tolerance

    def __str__(self):
        status = 'ok' if self.passed else 'FAIL'
        line = f'{self.component:<40} {self.parameter:<10} {self.error:.3e}  {status}'
        if self.message:
            line = f'{line}  ({self.message})'
        return line


def _check_case(factory, seed, index, max_coords):
    '''Check one seed, redrawing when a step crosses a switching point.'''

    for attempt in range(MAX_REDRAWS + 1):
        rng = np.random.default_rng([seed, index, attempt])
        case = factory(rng, index)
        try:
            errors_ = grad_check_each(case.function, list(case.inputs.values()), max_coords=max_coords, seed=seed)
            return dict(zip(case.inputs, errors_)), attempt
        except errors.KinkCrossingError:
            continue
    raise errors.KinkCrossingError(f'Every redraw crossed a switching point after {MAX_REDRAWS} attempts.')


def check_component(name, factory, seed=0, seeds=SUITE_SEEDS, max_coords=SUITE_COORDS, tolerance=TOLERANCE):
    '''Run one case over `seeds` draws, returning one CheckResult per input.'''

    worst = collections.OrderedDict()
    redraws = 0
    try:
        for index in range(seeds):
            errors_, attempts = _check_case(factory, seed, index, max_coords)
            redraws += attempts
            for parameter, error in errors_.items():
                worst[parameter] = max(worst.get(parameter, 0.0), error)
    except errors.QimError as error:
        LOGGER.error(f'Gradient check of {name} failed: {error}')
        return [CheckResult(name, '-', math.inf, seeds, redraws, tolerance, str(error))]

    results = [
        CheckResult(name, parameter, error, seeds, redraws, tolerance)
        for parameter, error in worst.items()
    ]
    for result in results:
        if not result.passed:
            LOGGER.error(f'Gradient check failed: {result}')
    return results


def run_suite(seed=0, seeds=SUITE_SEEDS, names=None, max_coords=SUITE_COORDS, tolerance=TOLERANCE):
    '''
    Run the gate over every differentiable operation and the QIM block.

    :param seed: (Optional) Base seed.
    :param seeds: (Optional) Draws per operation.
    :param names: (Optional) Restrict to these case names.
    :return: List of CheckResult, in case order.
    '''

    results = []
    for name, factory in suite_cases().items():
        if names is not None and name not in names:
            continue
        LOGGER.info(f'Checking gradients of {name} over {seeds} seeds.')
        results.extend(check_component(name, factory, seed, seeds, max_coords, tolerance))
    return results
