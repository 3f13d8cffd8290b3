'''
    report
    ======

    CSV reports mirroring the accuracy tables of the experiments.

    `report.csv` has the fixed header

        approach,density_maps,density_size,accuracy,seed,epochs,wall_seconds

    with accuracy written to 4 decimals and empty density columns for
    baselines. Rows are appended and flushed one at a time, so an
    interrupted ablation keeps every finished row. Notes about a row (size
    clamping, failures) go to a companion `notes.csv`.
'''

import csv
import dataclasses
import os
import typing

from . import errors
from . import train

HEADER = ('approach', 'density_maps', 'density_size', 'accuracy', 'seed', 'epochs', 'wall_seconds')
NOTES_HEADER = ('approach', 'density_maps', 'density_size', 'note')
EPOCHS_HEADER = ('epoch', 'train_loss', 'wall_seconds')
SUMMARY_HEADER = ('approach', 'runs', 'mean_accuracy', 'delta', 'reference_delta')

ERROR_ACCURACY = 'error'

# Accuracy gains of +QIM over the baseline reported for the full-scale runs.
REFERENCE_DELTAS = {
    ('mnist', 'standardcnn'): 1.8496,
    ('mnist', 'lenet5'): 0.0373,
    ('fashion-mnist', 'lenet5'): 0.1425,
    ('cifar10', 'standardcnn'): 8.3834,
}


@dataclasses.dataclass(frozen=True)
class ReportRow:
    '''
    One experiment result. Field values are kept as they are written, so
    parsing a written row reproduces it exactly.
    '''

    approach: str
    density_maps: str
    density_size: str
    accuracy: str
    seed: int
    epochs: int
    wall_seconds: float

    @staticmethod
    def create(approach, qim_config, accuracy, seed, epochs, wall_seconds):
        '''
        Build a row from run results.

        :param qim_config: Bound or unbound QimConfig, or None for a baseline.
        :param accuracy: Accuracy percent, or None for a failed run.
        '''

        maps = size = ''
        if qim_config is not None:
            maps = str(qim_config.filters)
            size = str(qim_config.size)
        text = ERROR_ACCURACY if accuracy is None else train.format_accuracy(accuracy)
        return ReportRow(approach, maps, size, text, int(seed), int(epochs), round(float(wall_seconds), 3))

    @property
    def failed(self):
        return self.accuracy == ERROR_ACCURACY

    @property
    def is_baseline(self):
        return self.density_maps == ''

    def to_record(self):
        return [
            self.approach,
            self.density_maps,
            self.density_size,
            self.accuracy,
            str(self.seed),
            str(self.epochs),
            repr(self.wall_seconds),
        ]

    @staticmethod
    def from_record(record):
        if len(record) != len(HEADER):
            raise errors.DataError(f'Report rows have {len(HEADER)} columns, got {len(record)}.')
        approach, maps, size, accuracy, seed, epochs, wall_seconds = record
        return ReportRow(approach, maps, size, accuracy, int(seed), int(epochs), float(wall_seconds))


class CsvWriter:
    '''
    Append-only CSV file with a fixed header, flushed and synced per row.

    The header is written when the file is new or empty, and checked
    otherwise. With `truncate`, an existing file is replaced.
    '''

    def __init__(self, path, header, truncate=False):
        self.path = path
        self.header = tuple(header)
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        if truncate and os.path.exists(path):
            os.remove(path)
        exists = os.path.exists(path) and os.path.getsize(path) > 0
        if exists:
            with open(path, newline='') as file:
                found = tuple(next(csv.reader(file), ()))
            if found != self.header:
                raise errors.DataError(f'{path} has header {found}, expected {self.header}.')
        self.file = open(path, 'a', newline='')
        self.writer = csv.writer(self.file, lineterminator='\n')
        if not exists:
            self.write(self.header)

    def write(self, record):
        self.writer.writerow(record)
        self.file.flush()
        os.fsync(self.file.fileno())

    def close(self):
        self.file.close()

    def __enter__(self):
        return self

    def __exit__(self, type, value, traceback):
        self.close()


class ReportWriter(CsvWriter):
    '''Crash-safe writer of ReportRows.'''

    def __init__(self, path, truncate=False):
        super().__init__(path, HEADER, truncate)

    def append(self, row):
        self.write(row.to_record())


class NotesWriter(CsvWriter):
    def __init__(self, path, truncate=False):
        super().__init__(path, NOTES_HEADER, truncate)

    def append(self, row, note):
        self.write([row.approach, row.density_maps, row.density_size, note])


def read_csv(path, header):
    '''Read the records of a CSV file after checking its header.'''

    if not os.path.exists(path):
        raise errors.DataError(f'Report not found: {path}')
    with open(path, newline='') as file:
        reader = csv.reader(file)
        found = tuple(next(reader, ()))
        if found != tuple(header):
            raise errors.DataError(f'{path} has header {found}, expected {tuple(header)}.')
        return [record for record in reader if record]


def read_report(path):
    '''Parse every ReportRow of a report file.'''
    return [ReportRow.from_record(record) for record in read_csv(path, HEADER)]


def write_epochs(path, losses, seconds):
    '''Write per-epoch training loss and wall time.'''

    with CsvWriter(path, EPOCHS_HEADER, truncate=True) as writer:
        for epoch, (loss, wall) in enumerate(zip(losses, seconds), 1):
            writer.write([epoch, repr(float(loss)), f'{wall:.3f}'])


# SUMMARY
# -------


@dataclasses.dataclass(frozen=True)
class Summary:
    approach: str
    runs: int
    mean_accuracy: float
    delta: typing.Optional[float] = None
    reference_delta: typing.Optional[float] = None

    def to_record(self):
        def fmt(value):
            return '' if value is None else train.format_accuracy(value)
        return [self.approach, str(self.runs), fmt(self.mean_accuracy), fmt(self.delta), fmt(self.reference_delta)]


def summarize(rows, dataset=None, backbone=None):
    '''
    Mean accuracy per approach over successful rows, with the delta of each
    +QIM approach against the baseline and the reference delta when known.
    '''

    groups = {}
    for row in rows:
        if row.failed:
            continue
        groups.setdefault(row.approach, []).append(float(row.accuracy))

    means = {approach: sum(values) / len(values) for approach, values in groups.items()}
    baselines = [approach for approach in means if not approach.endswith('+QIM')]
    baseline = means[baselines[0]] if baselines else None
    reference = REFERENCE_DELTAS.get((dataset, backbone))

    summaries = []
    for approach, mean in means.items():
        if approach.endswith('+QIM') and baseline is not None:
            summaries.append(Summary(approach, len(groups[approach]), mean, mean - baseline, reference))
        else:
            summaries.append(Summary(approach, len(groups[approach]), mean))
    return summaries


def write_summary(path, summaries):
    with CsvWriter(path, SUMMARY_HEADER, truncate=True) as writer:
        for summary in summaries:
            writer.write(summary.to_record())
