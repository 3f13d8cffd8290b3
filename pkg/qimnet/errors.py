'''
    errors
    ======

    Exception hierarchy for qimnet.

    Every error derives from `QimError` and from the closest builtin, so
    callers catching `ValueError` or `ArithmeticError` keep working.
    The command-line front end maps these to exit codes:
    `ConfigError` -> 2, `DataError` -> 3, anything else -> 1.
'''


class QimError(Exception):
    '''Base class for all qimnet errors.'''


class DimensionError(QimError, ValueError):
    '''Shapes or extents do not conform.'''


class WeightError(QimError, ValueError):
    '''Mixture weights are negative or do not sum to 1.'''


class NumericalError(QimError, ArithmeticError):
    '''An operation produced NaN or Inf.'''


class DivergenceError(NumericalError):
    '''Training produced a non-finite loss or parameter.'''

    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter


class KinkCrossingError(NumericalError):
    '''A finite-difference step crossed a ReLU or max-pool switching point.'''

    def __init__(self, message, input_index=None, coordinate=None):
        super().__init__(message)
        self.input_index = input_index
        self.coordinate = coordinate


class ConfigError(QimError, ValueError):
    '''Invalid experiment or mechanism configuration.'''


class DataError(QimError, ValueError):
    '''Malformed or missing dataset.'''


class CheckpointError(DataError):
    '''Unreadable or incompatible checkpoint file.'''


class DescriptorMismatchError(CheckpointError):
    '''Checkpoint was written for a different model specification.'''


# EXIT CODES
# ----------

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def exit_code(error):
    '''Get the process exit code for an exception.'''

    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DataError):
        return EXIT_DATA
    return EXIT_RUNTIME
