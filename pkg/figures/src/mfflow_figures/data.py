"""CSV loading with schema validation for figure inputs."""

from __future__ import annotations

import csv
from pathlib import Path


class FigureDataError(ValueError):
    """Missing input file, missing column, or an empty table."""


def load_table(path: Path, required: tuple[str, ...]) -> dict[str, list[str]]:
    """Read a CSV into {column: values}; every value stays a string.

    Raises FigureDataError naming the file and, for schema mismatches,
    the first offending column.
    """
    path = Path(path)
    if not path.exists():
        raise FigureDataError(f"missing input {path.name}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FigureDataError(f"{path.name} is empty (no header row)")
        for column in required:
            if column not in reader.fieldnames:
                raise FigureDataError(f"{path.name} is missing required column {column!r}")
        rows = list(reader)
    if not rows:
        raise FigureDataError(f"{path.name} has no data rows")
    return {column: [row[column] for row in rows] for column in reader.fieldnames}
