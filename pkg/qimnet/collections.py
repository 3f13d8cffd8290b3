'''
    collections
    ===========

    File-backed mapping used as the ablation run ledger.

    `SqliteDict` stores one row per key in a SQLite table, so a long grid
    interrupted half-way knows which cells already finished. Connections
    are shared per database path and reference-counted.

    # Sample Use

    .. code-block:: python

        from qimnet import collections

        ledger = collections.ablation_ledger('runs/mnist')
        ledger['StandardCNN+QIM|32|8|0'] = {'status': 'done', 'accuracy': '98.1200', 'wall_seconds': 12.5}
        'StandardCNN+QIM|32|8|0' in ledger     # True
'''

import atexit
import collections.abc
import csv
import os
import sqlite3
import typing

LEDGER_NAME = 'ablation.sqlite'
LEDGER_TABLE = 'ablation_cells'
LEDGER_COLUMNS = (
    ('cell', 'TEXT', False),
    ('status', 'TEXT', False),
    ('accuracy', 'TEXT', True),
    ('wall_seconds', 'REAL', True),
)

# SQL


def table_exists(table):
    '''Query whether a table exists.'''
    # Table names come from this module, never from user data.
    return f"SELECT name FROM sqlite_master WHERE type='table' AND name='{table}';"


def create_table(table, columns, primary_key):
    '''Statement creating a table from (name, type, nullable) columns.'''

    definitions = []
    for (name, column_type, nullable) in columns:
        definition = f'{name} {column_type}'
        if not nullable:
            definition = f'{definition} NOT NULL'
        if name == primary_key:
            definition = f'{definition} PRIMARY KEY'
        definitions.append(definition)
    return f'CREATE TABLE IF NOT EXISTS {table} ({", ".join(definitions)});'


def select_by_key(table, primary_key):
    return f'SELECT * FROM {table} WHERE {primary_key} = ?;'


def delete_by_key(table, primary_key):
    return f'DELETE FROM {table} WHERE {primary_key} = ?;'


def insert_or_replace(table, count):
    return f'INSERT OR REPLACE INTO {table} VALUES({", ".join(["?"] * count)});'


# CONNECTION

# path: Connection objects for list of open connections.
CONNECTIONS = {}


class Connection:
    '''Reference-counted connection to one database file.'''

    def __init__(self, db_path: str):
        self._path = db_path
        self._conn = None
        self._cursor = None
        self._open_connections = 0

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, type, value, traceback):
        self.close()

    @staticmethod
    def new(path):
        '''Get the shared connection for a path.'''
        return CONNECTIONS.setdefault(path, Connection(path))

    def open(self) -> None:
        if self._conn is None:
            self._conn = sqlite3.connect(self._path)
            self._cursor = self._conn.cursor()
        self._open_connections += 1

    def close(self) -> None:
        '''Commit, and close once the last user releases the connection.'''

        if self._conn is None:
            return
        self._conn.commit()
        self._open_connections -= 1
        if self._open_connections <= 0:
            self._conn.close()
            self._conn = None
            self._cursor = None
            self._open_connections = 0

    def commit(self) -> None:
        if self._conn is not None:
            self._conn.commit()

    def execute(self, statement, *parameters):
        if not self.is_open():
            raise RuntimeError('Cannot execute statement after closing connection.')
        return self._cursor.execute(statement, parameters)

    def is_open(self) -> bool:
        return self._conn is not None


# COLLECTIONS


class SqliteDict(collections.abc.MutableMapping):
    '''
    Mapping of primary keys to dicts of the remaining columns, backed by
    a SQLite table. Every write is committed immediately.
    '''

    def __init__(
        self,
        dbpath: str,
        table: str,
        columns: typing.Sequence[typing.Tuple[str, str, bool]],
        primary_key: str,
    ) -> None:
        self._path = dbpath
        self._conn = Connection.new(dbpath)
        self._table = table
        self._columns = tuple(columns)
        self._primary_key = primary_key
        self._column_names = [i[0] for i in columns]
        self._opened = False

    @property
    def table(self):
        return self._table

    @property
    def columns(self):
        return self._column_names

    @property
    def primary_key(self):
        return self._primary_key

    # CONNECTION

    def open(self) -> None:
        if self._conn is None:
            raise ValueError('Trying to open table on a closed connection.')
        if self._path != ':memory:':
            os.makedirs(os.path.dirname(os.path.abspath(self._path)), exist_ok=True)
        # The shared connection may have been closed under us, e.g. before a fork.
        if not self._opened or not self._conn.is_open():
            self._conn.open()
            self._opened = True
        self._conn.execute(create_table(self.table, self._columns, self.primary_key))

    def close(self) -> None:
        if self._conn is not None and self._opened:
            self._conn.close()
        self._conn = None
        self._opened = False

    def is_open(self) -> bool:
        if self._conn is None or not self._conn.is_open() or not self._opened:
            return False
        cursor = self._conn.execute(table_exists(self.table))
        return cursor.fetchone() is not None

    def _ensure_open(self):
        if not self.is_open():
            self.open()

    # SERIALIZATION

    def to_csv(self, path: str, delimiter: str = ',') -> None:
        '''Dump the table to CSV, header first.'''

        self._ensure_open()
        with open(path, 'w', newline='') as file:
            writer = csv.writer(file, delimiter=delimiter)
            writer.writerow(self.columns)
            for row in self._conn.execute(f'SELECT * FROM {self.table};'):
                writer.writerow(row)

    # MAGIC

    def _torow(self, key, value):
        row = {self.primary_key: key, **value}
        return [row.get(i) for i in self.columns]

    def _tovalue(self, row):
        value = dict(zip(self.columns, row))
        value.pop(self.primary_key, None)
        return value

    def items(self):
        self._ensure_open()
        rows = self._conn.execute(f'SELECT * FROM {self.table};').fetchall()
        for row in rows:
            value = dict(zip(self.columns, row))
            key = value.pop(self.primary_key)
            yield (key, value)

    def keys(self):
        for key, _ in self.items():
            yield key

    def values(self):
        for _, value in self.items():
            yield value

    def __getitem__(self, key):
        self._ensure_open()
        cursor = self._conn.execute(select_by_key(self.table, self.primary_key), key)
        row = cursor.fetchone()
        if row is None:
            raise KeyError(f'SqliteDict has no key "{key}".')
        return self._tovalue(row)

    def __setitem__(self, key, value):
        self._ensure_open()
        statement = insert_or_replace(self.table, len(self.columns))
        self._conn.execute(statement, *self._torow(key, value))
        self._conn.commit()

    def __delitem__(self, key):
        if key not in self:
            raise KeyError(f'SqliteDict has no key "{key}".')
        self._conn.execute(delete_by_key(self.table, self.primary_key), key)
        self._conn.commit()

    def __iter__(self):
        return self.keys()

    def __contains__(self, key):
        self._ensure_open()
        cursor = self._conn.execute(select_by_key(self.table, self.primary_key), key)
        return cursor.fetchone() is not None

    def __len__(self):
        self._ensure_open()
        cursor = self._conn.execute(f'SELECT COUNT(*) FROM {self.table};')
        return cursor.fetchone()[0]


# MANAGED OBJECTS


def ablation_ledger(output_dir):
    '''Ledger of finished ablation cells kept in the output directory.'''

    path = os.path.join(output_dir, LEDGER_NAME)
    ledger = SqliteDict(path, LEDGER_TABLE, LEDGER_COLUMNS, 'cell')
    atexit.register(ledger.close)
    return ledger


def close_connections():
    '''Close every shared connection.'''

    for connection in CONNECTIONS.values():
        while connection.is_open():
            connection.close()
