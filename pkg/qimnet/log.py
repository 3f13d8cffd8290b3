'''
    log
    ===

    Loggers for training runs and experiments.

    Every module logger is a child of `qimnet` and shares two handlers:
    a file in the log folder receiving everything, and stderr receiving
    warnings and errors. `set_verbosity` moves the stderr threshold; the
    file always gets every record, so a long ablation can be followed with
    `tail -f`.

    Set `QIMNET_LOG_DIR` to write the log files somewhere else.
'''

import datetime
import logging
import os

from . import path

ROOT_NAME = 'qimnet'
LOG_DIR_VARIABLE = 'QIMNET_LOG_DIR'
LEVELS = {
    -1: logging.ERROR,
    0: logging.WARNING,
    1: logging.INFO,
    2: logging.DEBUG,
}


def log_name():
    '''Get date/time-based log name.'''
    return '{:%Y-%m-%d-%H-%M-%S}.log'.format(datetime.datetime.now())

def log_dir():
    return os.environ.get(LOG_DIR_VARIABLE) or path.log_dir()

def new_logger(name):
    '''Define a new logger, `qimnet.<name>`.'''

    logger = logging.getLogger(f'{ROOT_NAME}.{name}')
    logger.setLevel(logging.DEBUG)
    logger.addHandler(STREAM_HANDLER)
    logger.addHandler(FILE_HANDLER)
    # Handlers are attached per logger, not on the root.
    logger.propagate = False

    return logger


def set_verbosity(verbosity):
    '''
    Set the stderr threshold: -1 errors only, 0 warnings (default),
    1 progress, 2 and above everything.
    '''

    verbosity = max(-1, min(2, verbosity))
    STREAM_HANDLER.setLevel(LEVELS[verbosity])
    return STREAM_HANDLER.level


os.makedirs(log_dir(), exist_ok=True)
CURRENT_LOG_NAME = log_name()
CURRENT_LOG_PATH = os.path.join(log_dir(), CURRENT_LOG_NAME)

# File Handler
FILE_HANDLER = logging.FileHandler(CURRENT_LOG_PATH, delay=False)
FILE_HANDLER.setLevel(logging.DEBUG)

# Stderr Handler
STREAM_HANDLER = logging.StreamHandler()
STREAM_HANDLER.setLevel(LEVELS[0])

FORMATTER = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
STREAM_HANDLER.setFormatter(FORMATTER)
FILE_HANDLER.setFormatter(FORMATTER)
