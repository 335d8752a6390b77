"""JSON-lines and CSV helpers shared by the file formats of the package."""

import csv
import json
from pathlib import Path
from typing import Iterable, Iterator, Union

from .exceptions import ValidationError

EDGE_CSV_HEADER = ("event_id", "source_hit", "target_hit", "score")

EdgeRow = tuple[int, int, int, float]


def write_jsonl(path: Union[Path, str], records: Iterable[dict]) -> int:
    """Writes one JSON object per line. Returns the number of lines."""
    n = 0
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, separators=(",", ":")))
            f.write("\n")
            n += 1
    return n


def read_jsonl(path: Union[Path, str]) -> Iterator[dict]:
    with open(path, "r") as f:
        for i, line in enumerate(f):
            if line.strip() == "":
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f'{path}:{i + 1}: invalid JSON line ({e})') from e


def write_edge_csv(path: Union[Path, str], rows: Iterable[EdgeRow]) -> None:
    """Writes per-edge scores (event_id, source_hit, target_hit, score)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(EDGE_CSV_HEADER)
        for ev_id, src, tgt, score in rows:
            w.writerow((int(ev_id), int(src), int(tgt), repr(float(score))))


def read_edge_csv(path: Union[Path, str]) -> list[EdgeRow]:
    with open(path, "r", newline="") as f:
        rdr = csv.reader(f)
        header = tuple(next(rdr, ()))
        if header != EDGE_CSV_HEADER:
            raise ValidationError(f'{path}: unexpected header {header}')
        return [(int(a), int(b), int(c), float(d)) for a, b, c, d in rdr]
