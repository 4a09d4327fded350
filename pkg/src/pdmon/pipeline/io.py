"""CSV ingestion, schema loading and schema inference."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..core import Column, Dataset, Kind, Role, Schema, validate_dataset
from ..errors import IoError, SchemaMismatch

LABEL_NAMES = ("label", "y")
PREDICTION_NAMES = ("prediction", "y_hat", "yhat", "pred")


def _read(path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = list(reader.fieldnames or [])
            rows = list(reader)
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except csv.Error as exc:
        raise IoError(f"malformed CSV in {path}: {exc}") from exc
    for i, row in enumerate(rows):
        if None in row or any(v is None for v in row.values()):
            raise SchemaMismatch(f"{path}: row {i} has a different number of fields than the header")
    return header, rows


def ingest_csv(path, schema: Schema, window: str = "t0", timestamp: str = "", *,
               optional_label: bool = False) -> Dataset:
    """Read a UTF-8, comma-separated file with a header row into a Dataset.

    Header order does not matter. With ``optional_label=True`` a file that
    lacks the schema's label column is accepted and the label is dropped.
    """
    header, rows = _read(path)
    if len(set(header)) != len(header):
        raise SchemaMismatch(f"{path}: duplicate header names")
    if optional_label and schema.label is not None and schema.label not in header:
        schema = schema.drop(schema.label)
    missing = [n for n in schema.names if n not in header]
    if missing:
        raise SchemaMismatch(f"{path}: header is missing column(s) {', '.join(missing)}")
    extra = [n for n in header if n not in schema]
    if extra:
        raise SchemaMismatch(f"{path}: header has unexpected column(s) {', '.join(extra)}")
    return validate_dataset(rows, schema, window, timestamp)


def write_csv(dataset: Dataset, path) -> None:
    names = dataset.schema.names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in dataset.to_rows():
            w.writerow([_fmt(row[n]) for n in names])


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def load_schema(path) -> Schema:
    try:
        return Schema.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise IoError(f"cannot read schema {path}: {exc}") from exc


def infer_schema(path) -> Schema:
    """Guess a schema from a CSV: ``label``/``prediction`` names get those
    roles, columns that parse as numbers are numeric, the rest categorical."""
    header, rows = _read(path)
    cols = []
    for name in header:
        values = [r[name] for r in rows]
        if name.lower() in LABEL_NAMES:
            cols.append(Column(name, Role.LABEL))
        elif name.lower() in PREDICTION_NAMES:
            cols.append(Column(name, Role.PREDICTION))
        else:
            kind = Kind.NUMERIC if all(_is_number(v) for v in values) else Kind.CATEGORICAL
            cols.append(Column(name, Role.INPUT, kind))
    return Schema(tuple(cols))


def _is_number(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True
