'''
    util
    ====

    Utilities for qimnet.
'''


def chunks(sequence, step, start_index=0):
    '''
    Yield chunks of size `step` from sequence.

    :param sequence: Sequence to chunk into smaller subsequences.
    :param step: Chunk size.
    :param start_index: (Optional) Index to start from in sequence.
    '''

    for index in range(start_index, len(sequence), step):
        start_index = index
        end_index = start_index + step
        yield sequence[start_index:end_index]


def parse_bool(value):
    '''Parse a boolean written as true/false, yes/no, on/off or 1/0.'''

    lowered = str(value).strip().lower()
    if lowered in ('true', 'yes', 'on', '1'):
        return True
    if lowered in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(f'Invalid boolean "{value}".')


def parse_int_list(value):
    '''Parse a comma-separated list of integers, e.g. "32,64,128".'''

    items = [i.strip() for i in str(value).split(',') if i.strip()]
    if not items:
        raise ValueError('Expected at least one integer.')
    return [int(i) for i in items]
