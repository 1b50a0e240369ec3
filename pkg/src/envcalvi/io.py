"""CSV and JSON input/output.

CSV files are plain numeric tables, one observation per row, with an
optional single header row that is recognized by being non-numeric.
Values are written with 17 significant digits so they round-trip exactly.
JSON documents carry ``"schema": "envcalvi/1"``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .predictor import PredictorNaturalParams
from .response import NaturalParams

SCHEMA = "envcalvi/1"


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_matrix_csv(path, M, prefix: str | None = None) -> None:
    """Write an n-by-k matrix; ``prefix`` adds a header ``prefix1, ..., prefixk``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if prefix is not None:
            writer.writerow([f"{prefix}{j + 1}" for j in range(M.shape[1])])
        for row in M:
            writer.writerow([format(float(v), ".17g") for v in row])


def read_matrix_csv(path) -> np.ndarray:
    """Read a numeric table, skipping a first row that is not numeric."""
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as err:
        raise ValidationError(f"cannot read {path}", reason=str(err)) from err
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValidationError(f"{path} has no numeric rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{path} has ragged rows")
    try:
        return np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as err:
        raise ValidationError(f"{path} contains a non-numeric entry", reason=str(err)) from err


def to_jsonable(obj):
    """Arrays to nested lists (row-major), numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(doc: dict) -> str:
    body = {"schema": SCHEMA}
    body.update(to_jsonable(doc))
    return json.dumps(body, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_json(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ValidationError(f"cannot read JSON from {path}", reason=str(err)) from err
    if not isinstance(doc, dict):
        raise ValidationError(f"{path} must hold a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValidationError("unsupported schema", schema=schema, expected=SCHEMA)
    return doc


def _matrix(rows, shape) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    return arr.reshape(shape)


def truth_to_dict(truth) -> dict:
    """Serialize true parameters, tagging the model."""
    if isinstance(truth, PredictorNaturalParams):
        fields = ("muX", "muY", "eta", "Omega1", "Omega0", "SigmaYX", "A")
        model = "predictor"
    elif isinstance(truth, NaturalParams):
        fields = ("mu", "eta", "Omega", "Omega0", "A")
        model = "response"
    else:
        raise ValidationError("unknown truth type", type=type(truth).__name__)
    out = {"model": model}
    for name in fields:
        val = np.asarray(getattr(truth, name), dtype=float)
        out[name] = {"shape": list(val.shape), "values": val.tolist()}
    return out


def truth_from_dict(doc: dict):
    model = doc.get("model")
    if model == "response":
        cls, fields = NaturalParams, ("mu", "eta", "Omega", "Omega0", "A")
    elif model == "predictor":
        cls, fields = PredictorNaturalParams, ("muX", "muY", "eta", "Omega1", "Omega0", "SigmaYX", "A")
    else:
        raise ValidationError("truth document lacks a valid model tag", model=model)
    try:
        kwargs = {f: _matrix(doc[f]["values"], tuple(doc[f]["shape"])) for f in fields}
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationError("malformed truth document", reason=str(err)) from err
    return cls(**kwargs)


def load_truth(path):
    return truth_from_dict(read_json(path))
