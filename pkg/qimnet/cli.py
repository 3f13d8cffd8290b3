'''
    cli
    ===

    Command-line front end.

    Subcommands:

    - `train --config PATH`: build, train and evaluate one model; writes
      `report.csv`, `epochs.csv` and the checkpoint `model.qim` to the
      output directory.
    - `eval --config PATH --checkpoint PATH`: print the test accuracy of a
      checkpoint.
    - `ablate --config PATH [--grid counts=..;sizes=..]`: run the baseline
      and every (filters, size) cell, appending one row per cell.
    - `gradcheck [--seed N]`: run the gradient gate.
    - `compare --config PATH [--seeds N]`: baseline against +QIM over
      several seeds, with a summary of mean accuracies.

    `--config` also accepts the bare name of a sample config, e.g.
    `mnist_standardcnn_qim`. `-v`/`-vv` log progress to stderr, `-q` only
    errors.

    Exit codes: 0 on success, 2 on configuration errors, 3 on data errors,
    1 on any other failure.
'''

import argparse
import os
import sys
import time

from . import checkpoint
from . import collections
from . import config as config_module
from . import data
from . import errors
from . import gradcheck
from . import log
from . import models
from . import report
from . import train
from . import util

# Logger for Cli.
LOGGER = log.new_logger('Cli')

DEFAULT_COUNTS = (32, 64, 128, 192)
DEFAULT_SIZES = (8, 10, 12, 16)
DEFAULT_COMPARE_SEEDS = 3

REPORT_NAME = 'report.csv'
NOTES_NAME = 'notes.csv'
EPOCHS_NAME = 'epochs.csv'
CHECKPOINT_NAME = 'model.qim'
COMPARE_NAME = 'compare.csv'
SUMMARY_NAME = 'compare_summary.csv'


# HELPERS
# -------


def parse_grid(text):
    '''
    Parse `counts=32,64;sizes=8,10` into two lists. Missing parts take
    the default grid values.
    '''

    counts = list(DEFAULT_COUNTS)
    sizes = list(DEFAULT_SIZES)
    if text is None:
        return counts, sizes
    for part in text.split(';'):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition('=')
        key = key.strip()
        try:
            values = util.parse_int_list(value)
        except ValueError:
            raise errors.ConfigError(f'Invalid grid values "{value}" for "{key}".') from None
        if any(i < 1 for i in values):
            raise errors.ConfigError(f'Grid values must be positive, got {values}.')
        if key == 'counts':
            counts = values
        elif key == 'sizes':
            sizes = values
        else:
            raise errors.ConfigError(f'Unknown grid key "{key}", expected counts or sizes.')
    return counts, sizes


def load_splits(experiment):
    return data.load_dataset(experiment, 'train'), data.load_dataset(experiment, 'test')


def run_experiment(experiment, train_set, test_set):
    '''Build, train and evaluate the model an experiment config describes.'''

    spec = experiment.model_spec()
    net = models.build_model(spec, experiment.seed, experiment.precision)
    LOGGER.info(f'Training {net!r} on {len(train_set)} {train_set.name} images.')
    metrics = train.fit(net, train_set, test_set, experiment.train_config())
    return net, metrics


def qim_note(net):
    '''Clamping warning of the network's QIM layer, or None.'''

    layer = net.qim_layer
    if layer is None:
        return None
    return layer.config.warning


def _row(net, experiment, metrics):
    layer = net.qim_layer
    return report.ReportRow.create(
        net.spec.approach,
        None if layer is None else layer.config,
        metrics.accuracy,
        experiment.seed,
        experiment.epochs,
        metrics.wall_seconds,
    )


# TRAIN
# -----


def cmd_train(args):
    experiment = config_module.load_config(args.config, args.out, args.seed)
    train_set, test_set = load_splits(experiment)
    net, metrics = run_experiment(experiment, train_set, test_set)

    output = experiment.output
    row = _row(net, experiment, metrics)
    with report.ReportWriter(os.path.join(output, REPORT_NAME), truncate=True) as writer:
        writer.append(row)
    note = qim_note(net)
    if note is not None:
        with report.NotesWriter(os.path.join(output, NOTES_NAME), truncate=True) as writer:
            writer.append(row, note)
    report.write_epochs(os.path.join(output, EPOCHS_NAME), metrics.epoch_losses, metrics.epoch_seconds)
    checkpoint.save_checkpoint(net, os.path.join(output, CHECKPOINT_NAME))

    print(f'{row.approach}: accuracy {row.accuracy}')
    return errors.EXIT_OK


# EVAL
# ----


def cmd_eval(args):
    experiment = config_module.load_config(args.config, seed=args.seed)
    path = args.checkpoint or os.path.join(experiment.output, CHECKPOINT_NAME)
    test_set = data.load_dataset(experiment, 'test')
    net = models.build_model(experiment.model_spec(), experiment.seed, experiment.precision)
    checkpoint.load_checkpoint(net, path)

    plan = data.BatchPlan(experiment.get('batch_size'), shuffle=False)
    accuracy = train.evaluate(net, data.make_batches(test_set, plan, dtype=net.dtype))
    print(f'accuracy: {train.format_accuracy(accuracy)}')
    return errors.EXIT_OK


# ABLATE
# ------


def cell_key(approach, maps, size, seed):
    return f'{approach}|{maps}|{size}|{seed}'


def ablation_cells(experiment, counts, sizes):
    '''Baseline config, then one QIM config per (filters, size).'''

    cells = [experiment.override(**{'qim.enabled': False})]
    for count in counts:
        for size in sizes:
            cells.append(experiment.override(**{'qim.enabled': True, 'qim.filters': count, 'qim.size': size}))
    return cells


def run_ablation(experiment, counts, sizes, resume=False):
    '''
    Run every ablation cell, appending rows as they finish.

    A failed cell records an error row and a note, and the grid continues.

    :return: Number of failed cells.
    '''

    output = experiment.output
    ledger = collections.ablation_ledger(output)
    if not resume:
        for key in list(ledger.keys()):
            del ledger[key]
    report_writer = report.ReportWriter(os.path.join(output, REPORT_NAME), truncate=not resume)
    notes_writer = report.NotesWriter(os.path.join(output, NOTES_NAME), truncate=not resume)

    train_set, test_set = load_splits(experiment)
    failures = 0
    cells = ablation_cells(experiment, counts, sizes)
    try:
        for index, cell in enumerate(cells, 1):
            spec = cell.model_spec()
            qim_config = cell.qim_config()
            maps = '' if qim_config is None else qim_config.filters
            size = '' if qim_config is None else qim_config.size
            key = cell_key(spec.approach, maps, size, cell.seed)
            done = ledger.get(key)
            if done is not None and done['status'] == 'done':
                LOGGER.info(f'Skipping finished cell {key}.')
                continue

            LOGGER.info(f'Ablation cell {index}/{len(cells)}: {key}.')
            start = time.perf_counter()
            try:
                net, metrics = run_experiment(cell, train_set, test_set)
            except Exception as error:
                failures += 1
                wall = time.perf_counter() - start
                LOGGER.error(f'Ablation cell {key} failed: {error}')
                row = report.ReportRow.create(spec.approach, qim_config, None, cell.seed, cell.epochs, wall)
                report_writer.append(row)
                notes_writer.append(row, f'error: {error}')
                ledger[key] = {'status': 'failed', 'accuracy': None, 'wall_seconds': row.wall_seconds}
                continue

            row = _row(net, cell, metrics)
            report_writer.append(row)
            note = qim_note(net)
            if note is not None:
                notes_writer.append(row, note)
            ledger[key] = {'status': 'done', 'accuracy': row.accuracy, 'wall_seconds': row.wall_seconds}
    finally:
        report_writer.close()
        notes_writer.close()
        ledger.close()
    return failures


def cmd_ablate(args):
    experiment = config_module.load_config(args.config, args.out, args.seed)
    counts, sizes = parse_grid(args.grid)

    if args.daemon:
        try:
            from . import daemon
        except RuntimeError as error:
            raise errors.ConfigError(str(error)) from None
        daemon.as_daemon(run_ablation, 'ablate', experiment, counts, sizes, resume=args.resume)
        return errors.EXIT_OK

    failures = run_ablation(experiment, counts, sizes, args.resume)
    path = os.path.join(experiment.output, REPORT_NAME)
    print(f'Wrote {path}')
    if failures:
        print(f'{failures} ablation cell(s) failed, see {NOTES_NAME}.', file=sys.stderr)
        return errors.EXIT_RUNTIME
    return errors.EXIT_OK


# GRADCHECK
# ---------


def cmd_gradcheck(args):
    results = gradcheck.run_suite(seed=args.seed or 0, seeds=args.seeds)
    for result in results:
        print(result)

    failed = sorted({result.component for result in results if not result.passed})
    if failed:
        print(f'gradient check failed: {", ".join(failed)}', file=sys.stderr)
        return errors.EXIT_RUNTIME
    print(f'all {len(results)} gradient checks passed (tolerance {gradcheck.TOLERANCE:g})')
    return errors.EXIT_OK


# COMPARE
# -------


def cmd_compare(args):
    experiment = config_module.load_config(args.config, args.out)
    train_set, test_set = load_splits(experiment)
    base_seed = experiment.seed if args.seed is None else args.seed
    output = experiment.output

    rows = []
    with report.ReportWriter(os.path.join(output, COMPARE_NAME), truncate=True) as writer:
        for seed in range(base_seed, base_seed + args.seeds):
            for enabled in (False, True):
                cell = experiment.override(**{'qim.enabled': enabled, 'seed': seed})
                net, metrics = run_experiment(cell, train_set, test_set)
                row = _row(net, cell, metrics)
                writer.append(row)
                rows.append(row)

    summaries = report.summarize(rows, experiment.dataset, experiment.backbone)
    report.write_summary(os.path.join(output, SUMMARY_NAME), summaries)
    for summary in summaries:
        print(','.join(summary.to_record()))
    return errors.EXIT_OK


# MAIN
# ----


def build_parser():
    parser = argparse.ArgumentParser(prog='qimnet', description='Quantum-inspired mechanism experiments.')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='log progress to stderr (-vv for debug)')
    parser.add_argument('-q', '--quiet', action='store_true', help='log only errors to stderr')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    def add(name, handler, help, config=True):
        command = commands.add_parser(name, help=help)
        command.set_defaults(handler=handler)
        if config:
            command.add_argument('--config', required=True, help='experiment config file')
        command.add_argument('--seed', type=int, help='override the config seed')
        return command

    command = add('train', cmd_train, 'train and evaluate one model')
    command.add_argument('--out', help='override the output directory')

    command = add('eval', cmd_eval, 'evaluate a checkpoint')
    command.add_argument('--checkpoint', help='checkpoint path, default <output>/model.qim')

    command = add('ablate', cmd_ablate, 'run the filters x size ablation grid')
    command.add_argument('--out', help='override the output directory')
    command.add_argument('--grid', help='grid, e.g. "counts=32,64,128,192;sizes=8,10,12,16"')
    command.add_argument('--resume', action='store_true', help='skip cells already finished')
    command.add_argument('--daemon', action='store_true', help='run detached (POSIX only)')

    command = add('gradcheck', cmd_gradcheck, 'run the gradient gate', config=False)
    command.add_argument('--seeds', type=int, default=gradcheck.SUITE_SEEDS, help='draws per operation and QIM grid point')

    command = add('compare', cmd_compare, 'baseline against +QIM over several seeds')
    command.add_argument('--out', help='override the output directory')
    command.add_argument('--seeds', type=int, default=DEFAULT_COMPARE_SEEDS, help='number of seeds')

    return parser


def main(argv=None):
    '''Run the command line, returning the exit code.'''

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        # Usage errors are configuration errors.
        return errors.EXIT_OK if exit.code == 0 else errors.EXIT_CONFIG

    log.set_verbosity(-1 if args.quiet else args.verbose)
    try:
        return args.handler(args)
    except errors.QimError as error:
        LOGGER.error(f'{args.command} failed: {error}')
        print(f'error: {error}', file=sys.stderr)
        return errors.exit_code(error)
    except Exception as error:
        LOGGER.exception(f'{args.command} failed')
        print(f'error: {error}', file=sys.stderr)
        return errors.EXIT_RUNTIME
