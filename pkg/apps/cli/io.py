"""
Reading and writing gof artifacts

CSV files start with a ``# schema_version=N`` comment line; JSON objects
carry a ``schema_version`` field. Outputs are written to a temporary sibling
and renamed into place, so a failed run leaves no partial file.
"""

import csv
import io
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework.renderers import JSONRenderer

from apps.core.exceptions import DomainError
from apps.families.domain import IndexWeights, MultiIndex, index_array

logger = logging.getLogger(__name__)

SCHEMA_PREFIX = '# schema_version='


def schema_header():
    return f"{SCHEMA_PREFIX}{settings.MINIMAXGOF_SCHEMA_VERSION}"


def format_index(row):
    """Space-separated entries without trailing zeros; '0' for the zero index"""
    return str(MultiIndex(tuple(int(e) for e in row)))


def parse_index(text):
    try:
        return MultiIndex(tuple(int(part) for part in text.split()))
    except ValueError:
        raise DomainError(f"Invalid multi-index: {text!r}")


def _csv_cell(value):
    return '' if value is None else value


def render_csv(columns, rows, header=True):
    buffer = io.StringIO()
    if header:
        buffer.write(schema_header() + '\n')
    writer = csv.writer(buffer, lineterminator='\n')
    if header:
        writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row[column]) for column in columns])
    return buffer.getvalue()


def render_json(payload):
    data = {'schema_version': settings.MINIMAXGOF_SCHEMA_VERSION, **payload}
    return JSONRenderer().render(data, renderer_context={'indent': 2}).decode('utf-8') + '\n'


def atomic_write(path, text):
    """Write text to path through a temporary file in the same directory"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as stream:
            stream.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    logger.info(f"Wrote {path}")


def append_csv_rows(path, columns, rows):
    """Append rows to a sweep table, creating it with its header if needed"""
    path = Path(path)
    if path.exists():
        existing = path.read_text(encoding='utf-8')
        first_line = existing.split('\n', 1)[0]
        if first_line != schema_header():
            raise DomainError(f"{path} has schema header {first_line!r}, expected {schema_header()!r}")
        if not existing.endswith('\n'):
            existing += '\n'
        atomic_write(path, existing + render_csv(columns, rows, header=False))
    else:
        atomic_write(path, render_csv(columns, rows))


def _data_lines(path):
    try:
        text = Path(path).read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as exc:
        raise DomainError(f"Cannot read {path}: {exc}")
    return [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith('#')]


def _float(value, path, row):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DomainError(f"{path}, row {row}: {value!r} is not a number")


def read_sample_columns(path, d=None):
    """
    Design points and responses from a CSV with header t_1,...,t_d,x

    Returns (points, responses) as arrays; points are not range-checked.

    Raises:
        DomainError: on a header or dimension mismatch, bad numbers, or no rows
    """
    reader = csv.reader(_data_lines(path))
    header = next(reader, None)
    if header is None:
        raise DomainError(f"{path} is empty")
    header = [name.strip() for name in header]
    dimension = len(header) - 1
    expected = [f"t_{k}" for k in range(1, dimension + 1)] + ['x']
    if dimension < 1 or header != expected:
        raise DomainError(f"{path} header must be t_1,...,t_d,x, got {','.join(header)}")
    if d is not None and d != dimension:
        raise DomainError(f"{path} has d={dimension} design columns, expected d={d}")

    rows = []
    for number, record in enumerate(reader, start=2):
        if len(record) != dimension + 1:
            raise DomainError(f"{path}, row {number}: expected {dimension + 1} fields, got {len(record)}")
        rows.append([_float(value, path, number) for value in record])
    if not rows:
        raise DomainError(f"{path} contains no observations")
    table = np.array(rows, dtype=float)
    return table[:, :dimension], table[:, dimension]


def _read_index_table(path, value_column):
    reader = csv.DictReader(_data_lines(path))
    if reader.fieldnames is None or {'index', value_column} - set(reader.fieldnames):
        raise DomainError(f"{path} must have columns index,{value_column}")
    keys, values = [], []
    for number, record in enumerate(reader, start=2):
        keys.append(parse_index(record['index']))
        values.append(_float(record[value_column], path, number))
    if not keys:
        raise DomainError(f"{path} contains no indices")
    if len(set(keys)) != len(keys):
        raise DomainError(f"{path} lists an index more than once")
    return index_array(keys), np.array(values)


def read_weights(path):
    """Kernel weights from a CSV with columns index,weight"""
    indices, values = _read_index_table(path, 'weight')
    return IndexWeights(indices, values)


def read_index_set(path):
    """Indices (and coefficients) of an enumerate CSV"""
    return _read_index_table(path, 'coefficient')
