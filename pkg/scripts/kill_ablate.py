'''
    kill_ablate
    ===========

    Stop the `ablate --daemon` grid.
'''

import os
import sys

try:
    import qimnet
except ImportError:
    # Script probably not installed, in scripts directory.
    project_home = os.path.dirname(os.path.dirname(os.path.realpath(__file__)))
    sys.path.insert(0, project_home)
    import qimnet


def main():
    if not qimnet.close_daemon('ablate'):
        print('No ablation daemon is running.', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
