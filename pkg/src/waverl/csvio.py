"""Versioned CSV reading/writing shared by the trainer, the demo commands,
and any downstream plotting tools.

Layout: first line ``# schema=<token>``, second line the column header, then
one row per record with floats rendered by repr (deterministic, lossless)."""

from __future__ import annotations

import os

from .errors import SchemaError

METRICS_SCHEMA = "waverl.metrics.v1"
SERIES_SCHEMA = "waverl.series.v1"
COEFFS_SCHEMA = "waverl.coeffs.v1"


def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_csv(path, schema, header, rows):
    with open(path, "w") as fh:
        fh.write(f"# schema={schema}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


class CsvAppender:
    """Streaming writer that emits the schema/header once, then rows.

    With ``resume=True`` an existing file is extended instead of truncated."""

    def __init__(self, path, schema, header, resume=False):
        self.path = path
        if resume and os.path.exists(path):
            return
        with open(path, "w") as fh:
            fh.write(f"# schema={schema}\n")
            fh.write(",".join(header) + "\n")

    def append(self, row):
        with open(self.path, "a") as fh:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path, expected_schema=None):
    """Returns (schema, header, rows as list of float lists)."""
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise SchemaError(f"{path}: missing schema line")
        schema = first[len("# schema=") :]
        if expected_schema is not None and schema != expected_schema:
            raise SchemaError(f"{path}: schema {schema!r}, expected {expected_schema!r}")
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    return schema, header, rows
