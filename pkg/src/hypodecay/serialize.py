"""Reading problem files and writing deterministic JSON and CSV."""

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .fp_core import FpProblem

JSON_DIGITS = 17


def _number(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, f".{JSON_DIGITS}g")
    # keep floats recognisable as floats
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return _number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, complex):
        return _encode({"re": obj.real, "im": obj.imag}, indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with floats at 17 significant digits and key order as given.

    Infinite values are written as the strings ``"inf"``/``"-inf"``; NaN as ``null``.
    """
    return _encode(obj, indent, 0) + "\n"


def loads(text):
    def fix(v):
        if v == "inf":
            return math.inf
        if v == "-inf":
            return -math.inf
        if isinstance(v, list):
            return [fix(x) for x in v]
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        return v

    return fix(json.loads(text))


def format_float(x):
    """Shortest decimal string that reads back to the same double."""
    return repr(float(x))


def write_csv(columns, stream=None):
    """Write ``{name: values}`` as CSV; returns the text when ``stream`` is None."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float).reshape(-1) for n in names]
    lengths = {v.size for v in data}
    if len(lengths) > 1:
        raise InvalidInputError(f"CSV columns differ in length: {sorted(lengths)}")
    out = io.StringIO() if stream is None else stream
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*data):
        writer.writerow([format_float(x) for x in row])
    return out.getvalue() if stream is None else None


def read_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = [[float(x) for x in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: arr[:, k] for k, name in enumerate(header)}


def _square(values, d, name):
    arr = np.asarray(values, dtype=float)
    if arr.size != d * d:
        raise InvalidInputError(f"{name} needs d^2 = {d * d} entries, got {arr.size}")
    return arr.reshape(d, d)


def problem_from_dict(data):
    try:
        d = int(data["d"])
        C = _square(data["C_tilde"], d, "C_tilde")
        D = _square(data["D_tilde"], d, "D_tilde")
    except KeyError as exc:
        raise InvalidInputError(f"problem file is missing the field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed problem file: {exc}") from None
    if d < 1:
        raise InvalidInputError("d must be positive")
    return FpProblem(C, D, label=str(data.get("label", "")))


def problem_to_dict(problem):
    return {
        "d": problem.dim,
        "C_tilde": problem.Ctilde.reshape(-1).tolist(),
        "D_tilde": problem.Dtilde.reshape(-1).tolist(),
        "label": problem.label,
    }


def load_problem(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read problem file: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"problem file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInputError("problem file must hold a JSON object")
    return problem_from_dict(data)
