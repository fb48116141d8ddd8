"""Table output: CSV with shortest round-trip floats, or JSON lines."""

from __future__ import annotations

import csv
import json
import math
from typing import IO, Iterable, Sequence


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_table(
    rows: Iterable[dict], columns: Sequence[str], stream: IO[str], fmt: str = "csv"
) -> None:
    if fmt == "csv":
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
    elif fmt in ("jsonl", "json-lines"):
        for row in rows:
            stream.write(json.dumps({c: _jsonable(row.get(c)) for c in columns}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):
        return value.item()
    return value


def parse_value(text: str):
    """Inverse of :func:`format_value` for numbers; other text is returned as is."""
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_csv(stream: IO[str]) -> list[dict]:
    return [{k: parse_value(v) for k, v in row.items()} for row in csv.DictReader(stream)]


def write_matrix(matrix, row_labels, col_labels, stream: IO[str], corner: str = "") -> None:
    """Heatmap values as a CSV matrix with labelled rows and columns."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([corner] + [format_value(float(c)) for c in col_labels])
    for label, values in zip(row_labels, matrix):
        writer.writerow([format_value(float(label))] + [format_value(float(v)) for v in values])
