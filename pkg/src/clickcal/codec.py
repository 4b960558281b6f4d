"""Prediction text grammar and JSONL persistence.

Predictions are serialised as::

    <point>[X,Y]</point><confidence>C</confidence>

with every number written as the shortest positional decimal that round-trips
to the same float (integers without a trailing ``.0``).
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .geometry import BBox, InvalidParameterError, Point

MISSING_TAG = "missing-tag"
BAD_NUMBER = "bad-number"
CONF_OUT_OF_RANGE = "conf-out-of-range"

_STRUCTURE = re.compile(r"<point>\[([^\]]*)\]</point><confidence>([^<]*)</confidence>")
_DECIMAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")


class RecordFormatError(ValueError):
    """A JSONL line could not be decoded; ``lineno`` is 1-based."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}: line {lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class ParsedPrediction:
    point: Point | None
    c_hat: float | None
    parse_ok: bool
    reason: str | None = None


def format_number(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise InvalidParameterError(f"cannot serialise non-finite value {v}")
    return np.format_float_positional(v, unique=True, trim="-")


def emit_prediction(p: Point, c_hat: float) -> str:
    if not (math.isfinite(c_hat) and 0.0 <= c_hat <= 1.0):
        raise InvalidParameterError(f"confidence must lie in [0, 1], got {c_hat}")
    return (
        f"<point>[{format_number(p.x)},{format_number(p.y)}]</point>"
        f"<confidence>{format_number(c_hat)}</confidence>"
    )


def _parse_decimal(token: str) -> float | None:
    if not _DECIMAL.fullmatch(token):
        return None
    v = float(token)
    return v if math.isfinite(v) else None


def parse_prediction(text: str) -> ParsedPrediction:
    m = _STRUCTURE.fullmatch(text.strip())
    if m is None:
        return ParsedPrediction(None, None, False, MISSING_TAG)
    coords = m.group(1).split(",")
    if len(coords) != 2:
        return ParsedPrediction(None, None, False, BAD_NUMBER)
    x, y = (_parse_decimal(t) for t in coords)
    c = _parse_decimal(m.group(2))
    if x is None or y is None or c is None:
        return ParsedPrediction(None, None, False, BAD_NUMBER)
    if not 0.0 <= c <= 1.0:
        return ParsedPrediction(None, None, False, CONF_OUT_OF_RANGE)
    return ParsedPrediction(Point(x, y), c, True)


# --------------------------------------------------------------------------
# JSONL

def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not permitted")


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dumps_line(row))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except ValueError as exc:
                raise RecordFormatError(path, lineno, str(exc)) from None
            if not isinstance(obj, dict):
                raise RecordFormatError(path, lineno, "expected a JSON object")
            rows.append(obj)
    return rows


@dataclass
class PredictionRecord:
    task_id: str
    point: Point
    c_hat: float
    prob_conf: float
    correct: bool
    target: BBox
    extra: dict[str, Any] = field(default_factory=dict)

    _FIELDS = ("task_id", "point", "c_hat", "prob_conf", "correct", "target")

    def to_dict(self) -> dict:
        d = dict(self.extra)
        d.update(
            task_id=self.task_id,
            point=[self.point.x, self.point.y],
            c_hat=self.c_hat,
            prob_conf=self.prob_conf,
            correct=self.correct,
            target=self.target.as_list(),
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        extra = {k: v for k, v in d.items() if k not in cls._FIELDS}
        return cls(
            task_id=str(d["task_id"]),
            point=Point(*map(float, d["point"])),
            c_hat=float(d["c_hat"]),
            prob_conf=float(d["prob_conf"]),
            correct=bool(d["correct"]),
            target=BBox(*map(float, d["target"])),
            extra=extra,
        )


def write_records(path, records: Iterable[PredictionRecord]) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def read_records(path) -> list[PredictionRecord]:
    return read_typed(path, PredictionRecord.from_dict)


def read_typed(path, factory) -> list:
    """Read JSONL and build each row with ``factory``; failures name the line."""
    out = []
    for i, row in enumerate(read_jsonl(path)):
        try:
            out.append(factory(row))
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordFormatError(path, _row_lineno(path, i), f"bad row: {exc!r}") from None
    return out


def _row_lineno(path, index: int) -> int:
    # map the index of a non-blank row back to its physical line
    seen = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                seen += 1
                if seen == index:
                    return lineno
    return index + 1


def ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
