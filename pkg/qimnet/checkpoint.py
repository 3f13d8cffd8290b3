'''
    checkpoint
    ==========

    Versioned binary checkpoints of network parameters.

    Layout, all integers little-endian:

        magic        4 bytes, b'QIM1'
        version      u32
        descriptor   u32 length + UTF-8 JSON from ModelSpec.descriptor()
        count        u32 number of tensors
        per tensor:
            name     u16 length + UTF-8
            ndim     u8
            dims     ndim x u32
            data     prod(dims) x little-endian float32

    Loading rejects a bad magic, an unknown version, trailing or missing
    bytes, and a descriptor that differs from the current network's.
'''

import collections
import os
import struct

import numpy as np

from . import errors
from . import log

# Logger for Checkpoint.
LOGGER = log.new_logger('Checkpoint')

MAGIC = b'QIM1'
VERSION = 1
FLOAT = np.dtype('<f4')


# WRITE
# -----


def encode(descriptor, state):
    '''Serialize a descriptor and an ordered mapping of parameter arrays.'''

    descriptor = descriptor.encode('utf-8')
    parts = [MAGIC, struct.pack('<II', VERSION, len(descriptor)), descriptor, struct.pack('<I', len(state))]
    for name, value in state.items():
        encoded = name.encode('utf-8')
        value = np.asarray(value)
        parts.append(struct.pack('<H', len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack('<B', value.ndim))
        parts.append(struct.pack(f'<{value.ndim}I', *value.shape))
        parts.append(np.ascontiguousarray(value, dtype=FLOAT).tobytes())
    return b''.join(parts)


def save_checkpoint(net, path):
    '''Write the network parameters to path.'''

    payload = encode(net.spec.descriptor(), net.state())
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as file:
        file.write(payload)
    LOGGER.info(f'Wrote checkpoint of {len(net.params)} tensors to {path}.')


# READ
# ----


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, count):
        end = self.offset + count
        if end > len(self.data):
            raise errors.CheckpointError(f'Checkpoint {self.path} is truncated.')
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data, path='<bytes>'):
    '''
    Parse a checkpoint.

    :return: Tuple of the descriptor and an ordered mapping of float32 arrays.
    '''

    reader = _Reader(data, path)
    if reader.take(4) != MAGIC:
        raise errors.CheckpointError(f'{path} is not a qimnet checkpoint (bad magic).')
    version, length = reader.unpack('<II')
    if version != VERSION:
        raise errors.CheckpointError(f'{path} has checkpoint version {version}, expected {VERSION}.')
    try:
        descriptor = reader.take(length).decode('utf-8')
    except UnicodeDecodeError as error:
        raise errors.CheckpointError(f'{path} has an unreadable descriptor.') from error

    state = collections.OrderedDict()
    (count,) = reader.unpack('<I')
    for _ in range(count):
        (length,) = reader.unpack('<H')
        try:
            name = reader.take(length).decode('utf-8')
        except UnicodeDecodeError as error:
            raise errors.CheckpointError(f'{path} has an unreadable tensor name.') from error
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack(f'<{ndim}I')
        size = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(reader.take(size * FLOAT.itemsize), dtype=FLOAT).reshape(shape)
    if reader.offset != len(data):
        raise errors.CheckpointError(f'{path} has {len(data) - reader.offset} trailing bytes.')
    return descriptor, state


def load_checkpoint(net, path):
    '''Restore the network parameters from path, in place.'''

    if not os.path.exists(path):
        raise errors.CheckpointError(f'Checkpoint not found: {path}')
    with open(path, 'rb') as file:
        descriptor, state = decode(file.read(), path)
    expected = net.spec.descriptor()
    if descriptor != expected:
        raise errors.DescriptorMismatchError(
            f'Checkpoint {path} was written for {descriptor}, not {expected}.'
        )
    try:
        net.load_state(state)
    except errors.DimensionError as error:
        raise errors.CheckpointError(f'Checkpoint {path} does not fit the network: {error}') from error
    LOGGER.info(f'Loaded checkpoint {path}.')
    return net


def checkpoint_roundtrip(net, path):
    '''Save then load a network, returning it.'''

    save_checkpoint(net, path)
    return load_checkpoint(net, path)
