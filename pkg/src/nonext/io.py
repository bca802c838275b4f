"""File formats and deterministic serialization.

Matrix objects are ``{"dim": n, "re": [[...]], "im": [[...]]}`` with ``im``
optional.  Curves are either sampled (``{"alphas": [...], "states": [...]}``)
or name a built-in family (``{"family": "rotating_qubit", "r": 0.5,
"alpha_min": 0, "alpha_max": 1, "n": 101}``).

Floats are written with 17 significant digits so that every value survives
a round trip exactly; non-finite values become ``{"$float": "inf"}`` etc.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from nonext import infogeo
from nonext.operators import DensityMatrix, HermitianOperator, ValidationError

#: Trace deviation accepted (with a warning and renormalization) when loading states.
TRACE_WARN_TOL = 1e-4

FAMILIES = ("constant", "classical_diagonal", "rotating_qubit", "thermal")


def load_json(path) -> object:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _real_table(rows, key: str, n: int) -> np.ndarray:
    if not isinstance(rows, list) or len(rows) != n:
        raise ValidationError(f"'{key}' must be a list of {n} rows")
    out = np.empty((n, n))
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise ValidationError(f"'{key}[{i}]' must be a list of {n} numbers")
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ValidationError(f"'{key}[{i}][{j}]' is not a finite number: {x!r}")
            out[i, j] = x
    return out


def matrix_from_json(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ValidationError("matrix object must be a JSON object with 'dim' and 're'")
    n = obj.get("dim")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValidationError(f"'dim' must be a positive integer, got {n!r}")
    if "re" not in obj:
        raise ValidationError("matrix object has no 're' field")
    re = _real_table(obj["re"], "re", n)
    im = _real_table(obj["im"], "im", n) if obj.get("im") is not None else np.zeros((n, n))
    return re + 1j * im


def matrix_to_json(A) -> dict:
    m = np.asarray(A.matrix if isinstance(A, HermitianOperator) else A, dtype=complex)
    return {"dim": m.shape[0], "re": m.real.tolist(), "im": m.imag.tolist()}


def load_hamiltonian(obj) -> HermitianOperator:
    return HermitianOperator(matrix_from_json(obj))


def load_state(obj) -> tuple[DensityMatrix, list[str]]:
    """Parse a state, renormalizing small trace deviations with a warning."""
    A = matrix_from_json(obj)
    H = HermitianOperator(A)
    tr = float(np.trace(H.matrix).real)
    warnings = []
    if abs(tr - 1.0) > TRACE_WARN_TOL:
        raise ValidationError(f"trace is {tr!r}; deviation exceeds {TRACE_WARN_TOL}")
    rho = DensityMatrix(H.matrix, trace_tol=TRACE_WARN_TOL)
    if abs(tr - 1.0) > 1e-12:
        warnings.append(f"trace deviates from 1 by {tr - 1.0:.3e}; state renormalized")
    return rho, warnings


def curve_from_json(obj) -> infogeo.StateCurve:
    if not isinstance(obj, dict):
        raise ValidationError("curve file must hold a JSON object")
    if "family" not in obj:
        if "alphas" not in obj or "states" not in obj:
            raise ValidationError("sampled curve needs 'alphas' and 'states'")
        states = []
        for k, s in enumerate(obj["states"]):
            try:
                states.append(load_state(s)[0])
            except ValidationError as exc:
                raise ValidationError(f"states[{k}]: {exc}") from exc
        return infogeo.StateCurve(np.asarray(obj["alphas"], dtype=float), tuple(states))

    name = obj["family"]
    if name not in FAMILIES:
        raise ValidationError(f"unknown family {name!r}; expected one of {FAMILIES}")
    try:
        lo, hi, n = float(obj["alpha_min"]), float(obj["alpha_max"]), obj["n"]
    except KeyError as exc:
        raise ValidationError(f"family curve is missing {exc.args[0]!r}") from exc
    if isinstance(n, bool) or not isinstance(n, int) or n < 3:
        raise ValidationError(f"'n' must be an integer >= 3, got {n!r}")
    alphas = np.linspace(lo, hi, n)
    if name == "rotating_qubit":
        return infogeo.rotating_qubit_curve(float(obj.get("r", 0.5)), alphas)
    if name == "classical_diagonal":
        return infogeo.classical_diagonal_curve(alphas)
    if name == "constant":
        return infogeo.constant_curve(load_state(obj["state"])[0], alphas)
    return infogeo.thermal_curve(load_hamiltonian(obj["hamiltonian"]), alphas)


# -- serialization -----------------------------------------------------------


def format_float(x: float) -> str:
    s = format(float(x), ".17g")
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def _tag(x: float) -> str:
    return "inf" if x > 0 else "-inf" if x < 0 else "nan"


def _encode(obj, indent: int, level: int) -> str:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_float(x) if math.isfinite(x) else '{"$float": "%s"}' % _tag(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    pad, inner = "\n" + " " * (indent * level), "\n" + " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + inner + ("," + inner).join(items) + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + inner + ("," + inner).join(_encode(v, indent, level + 1) for v in obj) + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: insertion-ordered keys, 17-digit floats, tagged non-finite values."""
    return _encode(obj, indent, 0)


def _untag(d: dict):
    if len(d) == 1 and "$float" in d:
        return float(d["$float"])
    return d


def loads(text: str):
    """Inverse of :func:`dumps`; tagged non-finite floats come back as floats."""
    return json.loads(text, object_hook=_untag)


def csv_cell(x) -> str:
    """CSV field text; infinities are written as the bare token ``inf``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(x) if math.isfinite(x) else _tag(float(x))
    return str(x)
