'''
    daemon
    ======

    Run long ablation grids detached from the terminal.

    # Warning

    Do not run two daemons with the same name at the same time: they
    share one PID file.
'''

import os
if os.name != 'posix':
    raise RuntimeError('Cannot use daemons on a non-POSIX operating system.')

import contextlib
import daemonize
import gc
import signal
import tempfile

from . import collections
from . import log

# Logger for Daemon.
LOGGER = log.new_logger('Daemon')
# Unique name for application.
APP_NAME = 'qimnet_daemon'
# File descriptors kept open across the fork (logger).
KEEP_FDS = [
    log.FILE_HANDLER.stream.fileno(),
]


def get_pid(name):
    '''Get the process ID file for the daemon.'''
    return os.path.join(tempfile.gettempdir(), f'qimnet-{name}.pid')


def as_daemon(method, name, *args, **kwds):
    '''
    Run `method(*args, **kwds)` as a daemon.

    Open ledger connections are closed before forking; the child reopens
    them on first use.
    '''

    def main():
        try:
            method(*args, **kwds)
        except Exception as error:
            LOGGER.critical(f'Daemon {name} failed: {error}')
            raise
        finally:
            collections.close_connections()
            gc.collect()
        LOGGER.info(f'Daemon {name} finished.')

    collections.close_connections()
    pid = get_pid(name)
    LOGGER.info(f'Starting daemon {name} with PID file {pid}.')
    daemon = daemonize.Daemonize(app=APP_NAME, pid=pid, action=main, keep_fds=KEEP_FDS, logger=LOGGER)
    daemon.start()


def close_daemon(name):
    '''Stop a running daemon from its PID file. Returns True if signalled.'''

    pid_file = get_pid(name)
    with contextlib.suppress(IOError, ValueError, ProcessLookupError):
        # No PID file: the daemon is not running.
        with open(pid_file) as f:
            pid = int(f.read())
        os.kill(pid, signal.SIGTERM)
        return True
    return False
