"""JSONL and CSV helpers with deterministic formatting."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

from .stats import _jsonable


def dumps(record) -> str:
    return json.dumps(_jsonable(record), sort_keys=True, allow_nan=True)


def write_jsonl(path, records: Iterable) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            if hasattr(rec, "to_record"):
                rec = rec.to_record()
            fh.write(dumps(rec) + "\n")
    return path


def read_jsonl(path) -> list:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(_jsonable(v)) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
