"""Plain-text field serialization, PGM previews, and CSV helpers.

FIELD format: line 1 is ``FIELD <ndim> <dim0> [dim1]``, followed by one
value per line in row-major order, written with full round-trip precision.
PGM previews (binary P5) map values affinely from [min, max] to [0, 255];
they are lossy previews, the FIELD files carry the exact data.
"""

from __future__ import annotations

import csv

import numpy as np

from .fields import Field, Grid


def write_field(path, field: Field):
    dims = " ".join(str(n) for n in field.grid.shape)
    with open(path, "w") as fh:
        fh.write(f"FIELD {field.grid.ndim} {dims}\n")
        for val in field.values.ravel(order="C"):
            fh.write(f"{float(val)!r}\n")


def read_field(path) -> Field:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "FIELD":
            raise ValueError(f"{path} is not a FIELD file")
        ndim = int(header[1])
        shape = tuple(int(x) for x in header[2:2 + ndim])
        values = np.array([float(line) for line in fh if line.strip()])
    return Field(Grid(shape), values.reshape(shape))


def write_pgm(path, field: Field):
    """8-bit binary PGM preview; constant fields map to mid-gray."""
    arr = field.values
    if arr.ndim == 1:
        arr = arr[None, :]
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.round((arr - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.full_like(arr, 127.0)
    data = scaled.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_csv(path, header, rows):
    """Comma-separated output with full-precision floats."""
    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, (float, np.floating)):
            return repr(float(x))
        return str(x)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows
