'''
    config
    ======

    Experiment configuration: flat `key = value` files.

    `#` starts a comment and blank lines are ignored. Unknown and duplicate
    keys are rejected, as are missing required keys; errors name the key.
    Relative paths resolve against the directory of the config file.

    # Sample Use

    .. code-block:: text

        # MNIST, StandardCNN with QIM
        dataset = mnist
        train.images = data/mnist/train-images-idx3-ubyte.gz
        train.labels = data/mnist/train-labels-idx1-ubyte.gz
        test.images = data/mnist/t10k-images-idx3-ubyte.gz
        test.labels = data/mnist/t10k-labels-idx1-ubyte.gz
        backbone = standardcnn
        qim.enabled = true
        qim.filters = 32
        qim.size = 8
        epochs = 3
        seed = 0
        output = runs/mnist-qim
'''

import collections
import os

from . import data
from . import errors
from . import models
from . import path as path_module
from . import qim
from . import tensor
from . import train
from . import util

Option = collections.namedtuple('Option', 'parse default required')


def _choice(*values):
    def parse(value):
        if value not in values:
            raise ValueError(f'expected one of {", ".join(values)}')
        return value
    return parse


def _positive(value):
    number = int(value)
    if number < 1:
        raise ValueError('expected a positive integer')
    return number


def _path_list(value):
    items = [i.strip() for i in value.split(',') if i.strip()]
    if not items:
        raise ValueError('expected at least one path')
    return items


PATH_KEYS = ('train.images', 'train.labels', 'test.images', 'test.labels', 'output')
PATH_LIST_KEYS = ('train.files', 'test.files')

OPTIONS = collections.OrderedDict([
    ('dataset', Option(_choice(*data.DATASETS), None, True)),
    ('train.images', Option(str, None, False)),
    ('train.labels', Option(str, None, False)),
    ('test.images', Option(str, None, False)),
    ('test.labels', Option(str, None, False)),
    ('train.files', Option(_path_list, None, False)),
    ('test.files', Option(_path_list, None, False)),
    ('train.limit', Option(_positive, None, False)),
    ('test.limit', Option(_positive, None, False)),
    ('backbone', Option(_choice(*models.BACKBONES), None, True)),
    ('qim.enabled', Option(util.parse_bool, False, False)),
    ('qim.mode', Option(_choice(*qim.MODES), 'summed', False)),
    ('qim.filters', Option(_positive, 128, False)),
    ('qim.size', Option(_positive, 10, False)),
    ('qim.normalize', Option(util.parse_bool, True, False)),
    ('qim.kernel', Option(_choice(*qim.KERNELS), 'auto', False)),
    ('qim.after', Option(int, None, False)),
    ('optimizer', Option(_choice(*train.OPTIMIZERS), 'adam', False)),
    ('optimizer.learning_rate', Option(float, 0.0005, False)),
    ('optimizer.momentum', Option(float, 0.9, False)),
    ('batch_size', Option(_positive, 64, False)),
    ('epochs', Option(_positive, None, True)),
    ('seed', Option(int, None, True)),
    ('output', Option(str, None, True)),
    ('precision', Option(tensor.Precision.parse, tensor.Precision.TRAIN, False)),
])

DATASET_KEYS = {
    'mnist': ('train.images', 'train.labels', 'test.images', 'test.labels'),
    'fashion-mnist': ('train.images', 'train.labels', 'test.images', 'test.labels'),
    'cifar10': ('train.files', 'test.files'),
    'cifar100': ('train.files', 'test.files'),
}

INPUT_SHAPES = {
    'mnist': (28, 28, 1),
    'fashion-mnist': (28, 28, 1),
    'cifar10': (32, 32, 3),
    'cifar100': (32, 32, 3),
}


# PARSE
# -----


def parse_lines(text, source='<config>'):
    '''Parse `key = value` lines into an ordered mapping of raw strings.'''

    raw = collections.OrderedDict()
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise errors.ConfigError(f'{source}:{number}: expected "key = value", got "{line}".')
        key, value = (i.strip() for i in line.split('=', 1))
        if not key:
            raise errors.ConfigError(f'{source}:{number}: missing key.')
        if key not in OPTIONS:
            raise errors.ConfigError(f'{source}:{number}: unknown key "{key}".')
        if key in raw:
            raise errors.ConfigError(f'{source}:{number}: duplicate key "{key}".')
        raw[key] = value
    return raw


class ExperimentConfig:
    '''
    Parsed and validated experiment configuration.

    :param raw: Mapping of keys to unparsed string values.
    :param base_dir: (Optional) Directory relative paths resolve against.
    :param source: (Optional) Name used in error messages.
    '''

    def __init__(self, raw, base_dir='.', source='<config>'):
        self.raw = collections.OrderedDict(raw)
        self.base_dir = base_dir
        self.source = source
        self.values = self._parse()

    def _resolve(self, value):
        return path_module.resolve(value, self.base_dir)

    def _parse(self):
        values = {}
        for key, value in self.raw.items():
            if key not in OPTIONS:
                raise errors.ConfigError(f'{self.source}: unknown key "{key}".')
            try:
                parsed = OPTIONS[key].parse(str(value).strip())
            except ValueError as error:
                raise errors.ConfigError(f'{self.source}: invalid value "{value}" for "{key}": {error}.') from None
            if key in PATH_KEYS:
                parsed = self._resolve(parsed)
            elif key in PATH_LIST_KEYS:
                parsed = [self._resolve(i) for i in parsed]
            values[key] = parsed

        for key, option in OPTIONS.items():
            if option.required and key not in values:
                raise errors.ConfigError(f'{self.source}: missing required key "{key}".')
        for key in DATASET_KEYS[values['dataset']]:
            if key not in values:
                raise errors.ConfigError(f'{self.source}: missing required key "{key}" for {values["dataset"]}.')
        return values

    def get(self, key):
        '''Parsed value of a key, or its default.'''

        if key not in OPTIONS:
            raise errors.ConfigError(f'Unknown key "{key}".')
        return self.values.get(key, OPTIONS[key].default)

    def override(self, **values):
        '''
        Copy with some keys replaced, e.g. override(**{'qim.size': 8}).

        None values leave the key unchanged.
        '''

        raw = collections.OrderedDict(self.raw)
        for key, value in values.items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = 'true' if value else 'false'
            raw[key] = str(value)
        return ExperimentConfig(raw, self.base_dir, self.source)

    @property
    def dataset(self):
        return self.get('dataset')

    @property
    def backbone(self):
        return self.get('backbone')

    @property
    def epochs(self):
        return self.get('epochs')

    @property
    def seed(self):
        return self.get('seed')

    @property
    def output(self):
        return self.get('output')

    @property
    def precision(self):
        return self.get('precision')

    @property
    def qim_enabled(self):
        return self.get('qim.enabled')

    def qim_config(self):
        '''Unbound QimConfig, or None when QIM is disabled.'''

        if not self.qim_enabled:
            return None
        return qim.QimConfig(
            filters=self.get('qim.filters'),
            size=self.get('qim.size'),
            mode=self.get('qim.mode'),
            normalize_inputs=self.get('qim.normalize'),
            kernel=self.get('qim.kernel'),
        )

    def model_spec(self):
        return models.ModelSpec(
            backbone=self.backbone,
            input_shape=INPUT_SHAPES[self.dataset],
            classes=data.CLASSES[self.dataset],
            qim=self.qim_config(),
            qim_after=self.get('qim.after') if self.qim_enabled else None,
        )

    def train_config(self):
        return train.TrainConfig(
            optimizer=self.get('optimizer'),
            learning_rate=self.get('optimizer.learning_rate'),
            batch_size=self.get('batch_size'),
            epochs=self.epochs,
            seed=self.seed,
            momentum=self.get('optimizer.momentum'),
        )

    def __repr__(self):
        return f'ExperimentConfig({self.source})'


def parse_config(text, base_dir='.', source='<config>'):
    '''Parse config text.'''
    return ExperimentConfig(parse_lines(text, source), base_dir, source)


def load_config(path, out=None, seed=None):
    '''
    Read a config file, applying command-line overrides.

    :param path: Config file, or the bare name of a sample config.
    :param out: (Optional) Output directory replacing `output`.
    :param seed: (Optional) Seed replacing `seed`.
    '''

    found = path_module.find_config(path)
    if found is None:
        raise errors.ConfigError(f'Config file not found: {path}')
    path = found
    with open(path) as file:
        text = file.read()
    raw = parse_lines(text, path)
    if out is not None:
        raw['output'] = os.path.abspath(out)
    if seed is not None:
        raw['seed'] = str(seed)
    return ExperimentConfig(raw, os.path.dirname(os.path.abspath(path)), path)
