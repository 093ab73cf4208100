"""Delimited-text matrices with headers, written atomically.

Values print with 17 significant digits so a save/load round trip
reproduces float64 data bit-exactly.
"""

import os
import tempfile

import numpy as np

from . import core

_DELIMITERS = ("\t", ",", ";")


def _sniff_delimiter(header_line):
    for d in _DELIMITERS:
        if d in header_line:
            return d
    return None  # single column or whitespace-separated


def _split(line, delim):
    if delim is None:
        return line.split()
    return [cell.strip() for cell in line.split(delim)]


def load_matrix(path):
    """(values, column names) from a delimited text file with a header."""
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0])
    names = _split(lines[0], delim)
    if len(lines) == 1:
        raise ValueError(f"{path}: empty data (header only)")
    values = np.empty((len(lines) - 1, len(names)))
    for i, line in enumerate(lines[1:], start=1):
        cells = _split(line, delim)
        if len(cells) != len(names):
            raise ValueError(
                f"{path}: row {i} has {len(cells)} cells, header has {len(names)}"
            )
        for j, cell in enumerate(cells):
            try:
                values[i - 1, j] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: row {i}, column {names[j]!r}: non-numeric cell {cell!r}"
                ) from None
    return values, names


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def save_matrix(path, values, col_names):
    """Tab-separated matrix with header, written via temp + rename."""
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[1] != len(col_names):
        raise ValueError(
            f"matrix has {values.shape[1] if values.ndim == 2 else '?'} columns, "
            f"{len(col_names)} names given"
        )
    rows = ["\t".join(str(c) for c in col_names)]
    for i in range(values.shape[0]):
        rows.append("\t".join(format_value(v) for v in values[i]))
    _atomic_write(path, "\n".join(rows) + "\n")


def save_table(path, header, rows):
    """Tab-separated table from row tuples; numbers at 17 digits."""
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(format_value(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _column_kind(col):
    finite = col[np.isfinite(col)]
    if finite.size and np.all((finite == 0.0) | (finite == 1.0)):
        return "binary"
    if finite.size and np.all(finite >= 0) and np.all(finite == np.floor(finite)):
        return "count"
    return "continuous"


def load_dataset(x_path, y_path, z_path, x_kind=None, y_kind=None):
    """Aligned Dataset from three matrix files; names come from y's header.

    Kinds default to what the values look like: 0/1 columns are
    binary, nonnegative integers are counts, anything else is
    continuous. Pass explicit kinds to override.
    """
    x, _ = load_matrix(x_path)
    y, names = load_matrix(y_path)
    z, _ = load_matrix(z_path)
    for label, mat, path in (("x", x, x_path), ("z", z, z_path)):
        if mat.shape[0] != y.shape[0]:
            raise ValueError(
                f"{label} has {mat.shape[0]} rows but y ({os.fspath(y_path)}) has {y.shape[0]}"
            )
    if x_kind is None:
        x_kind = "binary" if _column_kind(x.ravel()) == "binary" else "continuous"
    if y_kind is None:
        y_kind = _column_kind(y.ravel())
    return core.Dataset(
        x=x, y=y, z=z, x_kind=x_kind, y_kind=y_kind, feature_names=tuple(names)
    )
