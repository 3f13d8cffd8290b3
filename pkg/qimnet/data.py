'''
    data
    ====

    Loaders for the IDX (MNIST, Fashion-MNIST) and CIFAR binary formats,
    and seeded batching.

    IDX files are big-endian: a magic number (0x00000803 for images,
    0x00000801 for labels), one 32-bit count per dimension, then raw bytes.
    Files ending in `.gz` are decompressed transparently.

    CIFAR-10 files hold 3073-byte records: a label byte, then 1024 bytes
    each of the R, G and B planes of a 32x32 image. CIFAR-100 records carry
    a coarse and a fine label byte first (3074 bytes).

    Pixels stay raw 8-bit in a `Dataset`; `make_batches` scales them to
    [0, 1] by v / 255. Shuffling uses NumPy's PCG64 generator, seeded per
    epoch from `SeedSequence([seed, epoch])`.
'''

import dataclasses
import gzip
import os
import struct
import typing

import numpy as np

from . import errors
from . import log
from . import util

# Logger for Data.
LOGGER = log.new_logger('Data')

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

CIFAR_SIDE = 32
CIFAR_PIXELS = 3 * CIFAR_SIDE * CIFAR_SIDE
CIFAR10_RECORD = 1 + CIFAR_PIXELS
CIFAR100_RECORD = 2 + CIFAR_PIXELS

DATASETS = ('mnist', 'fashion-mnist', 'cifar10', 'cifar100')
IDX_DATASETS = ('mnist', 'fashion-mnist')
CLASSES = {'mnist': 10, 'fashion-mnist': 10, 'cifar10': 10, 'cifar100': 100}


# DATASET
# -------


@dataclasses.dataclass(frozen=True)
class Dataset:
    '''
    Labeled images.

    :param images: Array (N, H, W, C) of uint8 pixels.
    :param labels: Array (N,) of class indices.
    '''

    images: np.ndarray
    labels: np.ndarray
    name: str = ''
    split: str = ''
    classes: int = 10

    def __post_init__(self):
        if self.images.ndim != 4:
            raise errors.DataError(f'Images must be (N, H, W, C), got shape {self.images.shape}.')
        if len(self.images) != len(self.labels):
            raise errors.DataError(f'Got {len(self.images)} images but {len(self.labels)} labels.')
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise errors.DataError(f'Labels of {self.name or "dataset"} must lie in [0, {self.classes}).')

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        '''Image shape (H, W, C).'''
        return self.images.shape[1:]

    def take(self, count):
        '''Keep the first `count` records.'''

        if count is None or count >= len(self):
            return self
        return dataclasses.replace(self, images=self.images[:count], labels=self.labels[:count])


# IDX
# ---


def _read(path):
    if not os.path.exists(path):
        raise errors.DataError(f'Dataset file not found: {path}')
    opener = gzip.open if str(path).endswith('.gz') else open
    try:
        with opener(path, 'rb') as file:
            return file.read()
    except (OSError, EOFError) as error:
        raise errors.DataError(f'Unable to read {path}: {error}') from error


def _parse_idx(data, magic, ndim, path):
    header = 4 + 4 * ndim
    if len(data) < header:
        raise errors.DataError(f'{path} is truncated: {len(data)} bytes is shorter than the IDX header.')
    (found,) = struct.unpack('>I', data[:4])
    if found != magic:
        raise errors.DataError(f'{path} has magic 0x{found:08x}, expected 0x{magic:08x}.')
    dims = struct.unpack(f'>{ndim}I', data[4:header])
    expected = header + int(np.prod(dims, dtype=np.int64))
    if len(data) < expected:
        raise errors.DataError(f'{path} is truncated: {len(data)} bytes, expected {expected}.')
    if len(data) > expected:
        raise errors.DataError(f'{path} has {len(data) - expected} trailing bytes.')
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(image_path, label_path, name='mnist', split='train', classes=10):
    '''
    Load an IDX image file and its label file.

    :param image_path: Path to the `*-images-idx3-ubyte[.gz]` file.
    :param label_path: Path to the `*-labels-idx1-ubyte[.gz]` file.
    '''

    images = _parse_idx(_read(image_path), IMAGE_MAGIC, 3, image_path)
    labels = _parse_idx(_read(label_path), LABEL_MAGIC, 1, label_path)
    if len(images) != len(labels):
        raise errors.DataError(f'{image_path} has {len(images)} images but {label_path} has {len(labels)} labels.')

    dataset = Dataset(images[..., None], labels.astype(np.int64), name, split, classes)
    LOGGER.info(f'Loaded {len(dataset)} {name} {split} images of shape {dataset.shape}.')
    return dataset


# CIFAR
# -----


def _cifar_records(paths, record):
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    if not paths:
        raise errors.DataError('No CIFAR batch files given.')
    chunks = []
    for path in paths:
        data = _read(path)
        if len(data) == 0 or len(data) % record:
            raise errors.DataError(f'{path} has {len(data)} bytes, not a multiple of {record}.')
        chunks.append(np.frombuffer(data, dtype=np.uint8).reshape(-1, record))
    return np.concatenate(chunks)


def _planes_to_images(pixels):
    # Channel-planar R, G, B -> (N, H, W, C).
    planes = pixels.reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    return np.ascontiguousarray(planes.transpose(0, 2, 3, 1))


def load_cifar10(paths, split='train'):
    '''Load one or more CIFAR-10 binary batch files.'''

    records = _cifar_records(paths, CIFAR10_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.max() >= 10:
        raise errors.DataError(f'CIFAR-10 label {labels.max()} is out of range [0, 10).')

    dataset = Dataset(_planes_to_images(records[:, 1:]), labels, 'cifar10', split, 10)
    LOGGER.info(f'Loaded {len(dataset)} cifar10 {split} images.')
    return dataset


def load_cifar100(paths, split='train', label='fine'):
    '''Load CIFAR-100 binary files, keeping the fine or coarse labels.'''

    if label not in ('fine', 'coarse'):
        raise errors.ConfigError(f'CIFAR-100 labels are "fine" or "coarse", got "{label}".')
    records = _cifar_records(paths, CIFAR100_RECORD)
    column = 1 if label == 'fine' else 0
    classes = 100 if label == 'fine' else 20
    labels = records[:, column].astype(np.int64)
    if labels.max() >= classes:
        raise errors.DataError(f'CIFAR-100 {label} label {labels.max()} is out of range [0, {classes}).')

    dataset = Dataset(_planes_to_images(records[:, 2:]), labels, 'cifar100', split, classes)
    LOGGER.info(f'Loaded {len(dataset)} cifar100 {split} images.')
    return dataset


def load_dataset(config, split):
    '''Load the train or test split named by an experiment config.'''

    if split not in ('train', 'test'):
        raise errors.ConfigError(f'Unknown split "{split}".')
    name = config.dataset
    if name in IDX_DATASETS:
        dataset = load_idx(config.get(f'{split}.images'), config.get(f'{split}.labels'), name, split)
    elif name == 'cifar10':
        dataset = load_cifar10(config.get(f'{split}.files'), split)
    elif name == 'cifar100':
        dataset = load_cifar100(config.get(f'{split}.files'), split)
    else:
        raise errors.ConfigError(f'Unknown dataset "{name}".')
    return dataset.take(config.get(f'{split}.limit'))


# BATCHING
# --------


@dataclasses.dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 64
    seed: int = 0
    drop_last: bool = False
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise errors.ConfigError(f'Batch size must be at least 1, got {self.batch_size}.')

    def order(self, count, epoch=0):
        '''Index order for one epoch.'''

        if not self.shuffle:
            return np.arange(count)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, epoch])))
        return rng.permutation(count)


class Batch(typing.NamedTuple):
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def normalize_pixels(pixels, dtype=np.float32):
    '''Scale 8-bit pixels to [0, 1].'''
    return np.asarray(pixels, dtype=dtype) / 255


def make_batches(dataset, plan, epoch=0, dtype=np.float32):
    '''
    Yield batches of normalized images in a deterministic order.

    :param dataset: Dataset to iterate.
    :param plan: BatchPlan.
    :param epoch: (Optional) Epoch number, mixed into the shuffle seed.
    '''

    if len(dataset) == 0:
        raise errors.DataError(f'Cannot batch an empty {dataset.name or "dataset"} {dataset.split} split.')
    order = plan.order(len(dataset), epoch)
    for indices in util.chunks(order, plan.batch_size):
        if plan.drop_last and len(indices) < plan.batch_size:
            break
        yield Batch(normalize_pixels(dataset.images[indices], dtype), dataset.labels[indices], indices)
