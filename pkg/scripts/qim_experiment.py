'''
    qim_experiment
    ==============

    Command-line entry point: train, eval, ablate, gradcheck, compare.

    Sample configs live in `config/` (`~/.qimnet/config` once installed).
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


if __name__ == '__main__':
    sys.exit(qimnet.main())
