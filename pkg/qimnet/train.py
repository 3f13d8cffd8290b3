'''
    train
    =====

    Deterministic training loop, optimizers and evaluation.

    One run is fully determined by (TrainConfig, ModelSpec, data): the
    network is initialized from `seed`, each epoch shuffles with a
    generator seeded from (seed, epoch), and batches are processed
    sequentially.

    # Sample Use

    .. code-block:: python

        from qimnet import models, train

        net = models.build_model(spec, seed=0)
        metrics = train.fit(net, train_set, test_set, train.TrainConfig(epochs=3))
        print(metrics.accuracy_text)    # e.g. 97.2622
'''

import dataclasses
import time
import typing

import numpy as np

from . import data
from . import errors
from . import log
from . import tensor

# Logger for Train.
LOGGER = log.new_logger('Train')

OPTIMIZERS = ('adam', 'sgd-momentum')


# CONFIGURATION
# -------------


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    optimizer: str = 'adam'
    learning_rate: float = 0.0005
    batch_size: int = 64
    epochs: int = 1
    seed: int = 0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise errors.ConfigError(f'Unknown optimizer "{self.optimizer}", expected one of {OPTIMIZERS}.')
        if not self.learning_rate > 0:
            raise errors.ConfigError(f'Learning rate must be positive, got {self.learning_rate}.')
        if self.batch_size < 1:
            raise errors.ConfigError(f'Batch size must be at least 1, got {self.batch_size}.')
        if self.epochs < 1:
            raise errors.ConfigError(f'Epoch count must be at least 1, got {self.epochs}.')
        if not 0 <= self.momentum < 1:
            raise errors.ConfigError(f'Momentum must lie in [0, 1), got {self.momentum}.')

    def plan(self):
        '''Batch plan for the training split.'''
        return data.BatchPlan(self.batch_size, self.seed)


# OPTIMIZERS
# ----------


class SGDMomentum:
    '''
    Gradient descent with momentum: v <- mu v - lr grad; theta <- theta + v.

    :param params: Mapping of names to parameter nodes.
    '''

    def __init__(self, params, learning_rate, momentum=0.9):
        self.params = params
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.velocity = {name: np.zeros_like(node.value) for name, node in params.items()}

    def step(self):
        for name, node in self.params.items():
            velocity = self.velocity[name]
            velocity *= self.momentum
            velocity -= self.learning_rate * node.grad
            node.assign(node.value + velocity)


class Adam:
    '''Adam with bias correction.'''

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.steps = 0
        self.first = {name: np.zeros_like(node.value) for name, node in params.items()}
        self.second = {name: np.zeros_like(node.value) for name, node in params.items()}

    def step(self):
        self.steps += 1
        first_correction = 1 - self.beta1 ** self.steps
        second_correction = 1 - self.beta2 ** self.steps
        for name, node in self.params.items():
            grad = node.grad
            first = self.first[name]
            second = self.second[name]
            first *= self.beta1
            first += (1 - self.beta1) * grad
            second *= self.beta2
            second += (1 - self.beta2) * grad * grad
            update = (first / first_correction) / (np.sqrt(second / second_correction) + self.eps)
            node.assign(node.value - self.learning_rate * update)


def make_optimizer(config, params):
    '''Create the optimizer named by a TrainConfig.'''

    if config.optimizer == 'sgd-momentum':
        return SGDMomentum(params, config.learning_rate, config.momentum)
    return Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)


# LOOP
# ----


def _offending_parameter(net):
    '''Name of the first parameter with a non-finite value or gradient, else the largest.'''

    largest = None
    largest_value = -1.0
    for name, node in net.params.items():
        if not np.all(np.isfinite(node.value)) or not np.all(np.isfinite(node.grad)):
            return name
        magnitude = float(np.max(np.abs(node.value)))
        if magnitude > largest_value:
            largest, largest_value = name, magnitude
    return largest


def _diverged(net, step, cause):
    name = _offending_parameter(net)
    message = f'Training diverged at step {step} ({cause}); check parameter {name}.'
    LOGGER.error(message)
    return errors.DivergenceError(message, parameter=name)


def train_epoch(net, batches, optimizer):
    '''
    One pass over batches, updating the network in place.

    :return: Mean of the per-batch mean losses.
    '''

    losses = []
    for step, batch in enumerate(batches):
        try:
            loss = net.loss(batch.images, batch.labels)
        except errors.NumericalError as error:
            raise _diverged(net, step, error) from error
        value = float(loss.value)
        if not np.isfinite(value):
            raise _diverged(net, step, f'loss {value}')
        tensor.backward(loss)
        optimizer.step()
        losses.append(value)

    if not losses:
        raise errors.DataError('Training epoch received no batches.')
    return float(np.mean(losses))


def predict(net, images):
    '''Predicted classes; ties break to the lowest class index.'''
    return np.argmax(net.logits(images).value, axis=1)


def evaluate_counts(net, batches):
    '''Correct and total prediction counts, summed in batch order.'''

    correct = 0
    total = 0
    for batch in batches:
        correct += int(np.sum(predict(net, batch.images) == batch.labels))
        total += len(batch.labels)
    return correct, total


def evaluate(net, batches):
    '''Accuracy in percent over the batches.'''

    correct, total = evaluate_counts(net, batches)
    if total == 0:
        raise errors.DataError('Cannot evaluate on an empty test set.')
    return 100 * correct / total


def format_accuracy(value):
    '''Accuracy to 4 decimals, e.g. "97.2622".'''
    return f'{value:.4f}'


@dataclasses.dataclass
class Metrics:
    epoch_losses: typing.List[float]
    accuracy: float
    wall_seconds: float
    epoch_seconds: typing.List[float] = dataclasses.field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.accuracy <= 100:
            raise errors.NumericalError(f'Accuracy {self.accuracy} is outside [0, 100].')

    @property
    def accuracy_text(self):
        return format_accuracy(self.accuracy)


def fit(net, train_set, test_set, config, on_epoch=None):
    '''
    Train for `config.epochs` epochs, then evaluate on the test split.

    :param on_epoch: (Optional) Callback (epoch, mean_loss, seconds) after
        each epoch.
    '''

    start = time.perf_counter()
    optimizer = make_optimizer(config, net.params)
    plan = config.plan()
    losses = []
    seconds = []
    for epoch in range(config.epochs):
        epoch_start = time.perf_counter()
        batches = data.make_batches(train_set, plan, epoch, net.dtype)
        loss = train_epoch(net, batches, optimizer)
        losses.append(loss)
        seconds.append(time.perf_counter() - epoch_start)
        LOGGER.info(f'{net.spec.approach} epoch {epoch + 1}/{config.epochs}: loss {loss:.6f} in {seconds[-1]:.1f}s.')
        if on_epoch is not None:
            on_epoch(epoch, loss, seconds[-1])

    test_plan = data.BatchPlan(config.batch_size, shuffle=False)
    accuracy = evaluate(net, data.make_batches(test_set, test_plan, dtype=net.dtype))
    metrics = Metrics(losses, accuracy, time.perf_counter() - start, seconds)
    LOGGER.info(f'{net.spec.approach} test accuracy {metrics.accuracy_text}.')
    return metrics
