"""File formats: dataset CSV, fitted-function JSON, poset JSON.

All readers raise ValidationError on malformed input so callers can map
format problems to the validation exit path. Labels in files are 1-based.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .core import (Dataset, PiecewiseLinearFunction, StepFunction,
                   ValidationError)
from .posets import Poset

__all__ = [
    "read_dataset_csv",
    "write_dataset_csv",
    "read_function_json",
    "write_function_json",
    "read_poset_json",
    "write_poset_json",
    "cover_edges",
]


def write_dataset_csv(path, data: Dataset) -> None:
    """Write a dataset as CSV with header x,y; x integer site, y decimal."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y"])
        for x, y in zip(data.xs.tolist(), data.ys.tolist()):
            out.writerow([int(x), repr(float(y))])


def read_dataset_csv(path) -> Dataset:
    """Parse a dataset CSV, reporting the offending line on failure."""
    xs = []
    ys = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        for lineno, row in enumerate(rows, start=1):
            if lineno == 1:
                if [c.strip() for c in row] != ["x", "y"]:
                    raise ValidationError(
                        f"line 1: expected header 'x,y', got {','.join(row)!r}")
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ValidationError(
                    f"line {lineno}: expected two fields, got {len(row)}")
            try:
                x = int(row[0])
            except ValueError:
                raise ValidationError(
                    f"line {lineno}: site {row[0]!r} is not an integer") from None
            try:
                y = float(row[1])
            except ValueError:
                raise ValidationError(
                    f"line {lineno}: label {row[1]!r} is not a number") from None
            if x < 1:
                raise ValidationError(f"line {lineno}: site {x} must be >= 1")
            if not 0.0 <= y <= 1.0:
                raise ValidationError(
                    f"line {lineno}: label {y} outside [0, 1]")
            xs.append(x)
            ys.append(y)
    if not xs:
        raise ValidationError("dataset file holds no data rows")
    return Dataset(np.array(xs, dtype=np.int64), np.array(ys))


def write_function_json(path, fn, meta: dict | None = None) -> None:
    """Serialize a fitted function.

    Step functions become {"kind": "step", "breakpoints": [[start, value]..]},
    piecewise-linear fits become {"kind": "linear", "knots": [[x, value]..]},
    and poset fits (plain label-to-value dicts) become {"kind": "map",
    "values": {label: value}}. ``meta`` is carried alongside verbatim.
    """
    if isinstance(fn, StepFunction):
        doc = {"kind": "step",
               "breakpoints": [[int(s), float(v)] for s, v
                               in zip(fn.starts, fn.values)]}
    elif isinstance(fn, PiecewiseLinearFunction):
        doc = {"kind": "linear",
               "knots": [[int(x), float(v)] for x, v
                         in zip(fn.knot_xs, fn.knot_values)]}
    elif isinstance(fn, dict):
        doc = {"kind": "map",
               "values": {str(int(k)): float(v) for k, v in sorted(fn.items())}}
    else:
        raise ValidationError(f"cannot serialize function of type {type(fn)}")
    if meta:
        doc["meta"] = meta
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _pairs(doc, key):
    raw = doc.get(key)
    if (not isinstance(raw, list) or not raw
            or not all(isinstance(p, list) and len(p) == 2 for p in raw)):
        raise ValidationError(f"'{key}' must be a nonempty list of pairs")
    return raw


def read_function_json(path):
    """Load a function written by write_function_json.

    Returns a StepFunction, a PiecewiseLinearFunction, or a label-to-value
    dict depending on the stored kind.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("function file must hold a JSON object")
    kind = doc.get("kind")
    if kind == "step" or (kind is None and "breakpoints" in doc):
        pairs = _pairs(doc, "breakpoints")
        return StepFunction(np.array([int(p[0]) for p in pairs]),
                            np.array([float(p[1]) for p in pairs]))
    if kind == "linear" or (kind is None and "knots" in doc):
        pairs = _pairs(doc, "knots")
        return PiecewiseLinearFunction(np.array([int(p[0]) for p in pairs]),
                                       np.array([float(p[1]) for p in pairs]))
    if kind == "map" or (kind is None and "values" in doc):
        raw = doc.get("values")
        if not isinstance(raw, dict) or not raw:
            raise ValidationError("'values' must be a nonempty object")
        try:
            return {int(k): float(v) for k, v in raw.items()}
        except (TypeError, ValueError):
            raise ValidationError("'values' keys must be integer labels "
                                  "and values numbers") from None
    raise ValidationError(f"unrecognized function kind {kind!r}")


def cover_edges(poset: Poset) -> list[tuple[int, int]]:
    """1-based cover pairs (a, b) with a directly below b, sorted."""
    strict = poset.leq_matrix.copy()
    np.fill_diagonal(strict, False)
    # (a, b) is a cover iff a < b strictly and no c sits strictly between.
    via = (strict.astype(np.uint8) @ strict.astype(np.uint8)) > 0
    covers = strict & ~via
    return [(int(a) + 1, int(b) + 1) for a, b in np.argwhere(covers)]


def write_poset_json(path, poset: Poset) -> None:
    """Write a poset as {"n": size, "cover_edges": [[a, b]..]}, 1-based."""
    doc = {"n": int(poset.size),
           "cover_edges": [list(e) for e in cover_edges(poset)]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_poset_json(path) -> Poset:
    """Load a poset file; edge pairs [a, b] mean a is below b."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("poset file must hold a JSON object")
    n = doc.get("n")
    if not isinstance(n, int) or n < 1:
        raise ValidationError("'n' must be a positive integer")
    raw = doc.get("cover_edges")
    if raw is None:
        raw = []
    if not isinstance(raw, list) or not all(
            isinstance(p, list) and len(p) == 2
            and all(isinstance(v, int) for v in p) for p in raw):
        raise ValidationError("'cover_edges' must be a list of [a, b] pairs")
    return Poset.from_cover_edges(n, [(p[0], p[1]) for p in raw])
