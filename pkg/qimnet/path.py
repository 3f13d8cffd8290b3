'''
    path
    ====

    Where configs, datasets and logs live.

    From a source checkout everything is relative to the checkout; once
    installed, to `~/.qimnet`.
'''

import os

CONFIG_SUFFIX = '.cfg'


def project_dir():
    '''Get the directory to the project folder.'''

    path = os.path.dirname(os.path.dirname(os.path.realpath(__file__)))
    if 'site-packages' in path:
        return os.path.join(os.path.expanduser('~'), '.qimnet')
    return path

def config_dir():
    '''Get the directory to the sample experiment configs.'''
    return os.path.join(project_dir(), 'config')

def data_dir():
    '''Get the directory holding the downloaded datasets.'''
    return os.path.join(project_dir(), 'data')

def log_dir():
    '''Get the directory to the log folder.'''
    return os.path.join(project_dir(), 'log')


def resolve(value, base_dir):
    '''Resolve a possibly relative, possibly `~` path against `base_dir`.'''
    return os.path.normpath(os.path.join(base_dir, os.path.expanduser(value)))


def find_config(name):
    '''
    Locate an experiment config.

    An existing file path is returned as is. Otherwise a bare name such as
    `mnist_standardcnn_qim` is looked up among the sample configs, with or
    without the `.cfg` suffix. Returns None when nothing matches.
    '''

    if os.path.isfile(name):
        return name
    if os.path.dirname(name):
        return None
    for candidate in (name, name + CONFIG_SUFFIX):
        path = os.path.join(config_dir(), candidate)
        if os.path.isfile(path):
            return path
    return None
