"""Problem files (JSON) and result files (CSV) used by the command line tool."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import EigSet

__all__ = [
    "KINDS",
    "ProblemFileError",
    "ProblemFile",
    "parse_problem",
    "load_problem",
    "dumps_problem",
    "load_series",
    "monomial_key",
    "parse_monomial",
    "eigs_csv",
    "stationary_csv",
    "grid_csv",
]

KINDS = ("linear-rmep", "quad-r2ep", "arma11", "lti2", "arma21-matrices")


class ProblemFileError(ValueError):
    """Malformed problem or series file; the message names the offending field."""


def monomial_key(w) -> str:
    if any(not 0 <= e <= 9 for e in w):
        raise ValueError(f"exponent out of range for a monomial key: {w}")
    return "".join(str(int(e)) for e in w)


def parse_monomial(key: str, k: int, where: str) -> tuple[int, ...]:
    if not isinstance(key, str) or len(key) != k or not key.isdigit():
        raise ProblemFileError(f"{where}: monomial key {key!r} must be {k} digits")
    return tuple(int(c) for c in key)


@dataclass
class ProblemFile:
    kind: str
    k: int | None = None
    n: int | None = None
    terms: dict = field(default_factory=dict)  # exponent tuple -> ndarray
    y: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, ProblemFile):
            return NotImplemented
        if (self.kind, self.k, self.n) != (other.kind, other.k, other.n):
            return False
        if set(self.terms) != set(other.terms):
            return False
        if any(not np.array_equal(self.terms[w], other.terms[w]) for w in self.terms):
            return False
        if (self.y is None) != (other.y is None):
            return False
        return self.y is None or np.array_equal(self.y, other.y)

    def matrices(self, order) -> list:
        """Coefficients for the exponent tuples in ``order``; missing ones are zero."""
        shape = next(iter(self.terms.values())).shape
        return [self.terms.get(tuple(w), np.zeros(shape)) for w in order]


def _int_field(doc, name, where, required=True):
    if name not in doc:
        if required:
            raise ProblemFileError(f"{where}{name}: missing")
        return None
    value = doc[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProblemFileError(f"{where}{name}: expected an integer, got {value!r}")
    if value < 0:
        raise ProblemFileError(f"{where}{name}: must be non-negative, got {value}")
    return value


def _real_grid(value, rows, cols, where):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{where}: entries must be numbers") from None
    if rows == 0 or cols == 0:
        arr = arr.reshape(rows, cols) if arr.size == 0 else arr
    if arr.shape != (rows, cols):
        raise ProblemFileError(f"{where}: expected shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProblemFileError(f"{where}: entries must be finite")
    return arr


def _parse_matrix(doc, where) -> np.ndarray:
    if not isinstance(doc, dict):
        raise ProblemFileError(f"{where}: expected an object with rows, cols, re")
    rows = _int_field(doc, "rows", where + ".")
    cols = _int_field(doc, "cols", where + ".")
    if "re" not in doc:
        raise ProblemFileError(f"{where}.re: missing")
    re = _real_grid(doc["re"], rows, cols, where + ".re")
    if doc.get("im") is None:
        return re
    return re + 1j * _real_grid(doc["im"], rows, cols, where + ".im")


def _check_shapes(p: ProblemFile):
    if p.kind in ("arma11", "lti2"):
        if p.y is None:
            raise ProblemFileError(f"y: required for kind {p.kind!r}")
        return
    if p.k is None or p.n is None:
        raise ProblemFileError("k, n: required for matrix problems")
    if not p.terms:
        raise ProblemFileError("terms: at least the constant term is required")
    extra_rows = {"linear-rmep": p.k - 1, "quad-r2ep": 1, "arma21-matrices": 2}[p.kind]
    want = (p.n + extra_rows, p.n)
    for w, m in p.terms.items():
        if m.shape != want:
            raise ProblemFileError(f"terms.{monomial_key(w)}: expected shape {want}, got {m.shape}")
    degree = max(sum(w) for w in p.terms)
    if p.kind == "linear-rmep" and degree > 1:
        raise ProblemFileError("terms: a linear-rmep has only degree <= 1 terms")
    if p.kind == "quad-r2ep" and (p.k != 2 or degree > 2):
        raise ProblemFileError("terms: a quad-r2ep has k = 2 and degree <= 2 terms")
    if p.kind == "arma21-matrices":
        allowed = {(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 2)}
        if p.k != 3 or not set(p.terms) <= allowed:
            raise ProblemFileError("terms: arma21-matrices uses k = 3 and keys 000, 100, 010, 001, 002")
    if (0,) * p.k not in p.terms:
        raise ProblemFileError(f"terms.{'0' * p.k}: constant term missing")


def parse_problem(text: str) -> ProblemFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ProblemFileError("top level: expected a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ProblemFileError(f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")
    k = _int_field(doc, "k", "", required=False)
    n = _int_field(doc, "n", "", required=False)
    terms = {}
    raw_terms = doc.get("terms", {})
    if not isinstance(raw_terms, dict):
        raise ProblemFileError("terms: expected an object")
    if raw_terms and k is None:
        raise ProblemFileError("k: missing")
    for key, mat in raw_terms.items():
        w = parse_monomial(key, k, f"terms.{key}")
        terms[w] = _parse_matrix(mat, f"terms.{key}")
    y = None
    if doc.get("y") is not None:
        try:
            y = np.array(doc["y"], dtype=float)
        except (TypeError, ValueError):
            raise ProblemFileError("y: entries must be numbers") from None
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ProblemFileError("y: expected a flat array of finite numbers")
    p = ProblemFile(kind, k, n, terms, y)
    _check_shapes(p)
    return p


def load_problem(path) -> ProblemFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from None
    return parse_problem(text)


def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("problem files hold finite numbers only")
    return format(x, ".17g")


def _grid_json(a: np.ndarray) -> str:
    rows = ", ".join("[" + ", ".join(_num(v) for v in row) + "]" for row in a)
    return "[" + rows + "]"


def dumps_problem(p: ProblemFile) -> str:
    """JSON text of ``p`` with every number written to 17 significant digits."""
    lines = ["{", f'  "kind": {json.dumps(p.kind)},']
    if p.k is not None:
        lines.append(f'  "k": {p.k},')
    if p.n is not None:
        lines.append(f'  "n": {p.n},')
    items = []
    for w in sorted(p.terms, key=lambda w: (sum(w), tuple(-e for e in w))):
        m = np.asarray(p.terms[w])
        entry = f'    "{monomial_key(w)}": {{"rows": {m.shape[0]}, "cols": {m.shape[1]}, '
        entry += f'"re": {_grid_json(m.real)}'
        if np.iscomplexobj(m):
            entry += f', "im": {_grid_json(m.imag)}'
        items.append(entry + "}")
    lines.append('  "terms": {' + ("\n" + ",\n".join(items) + "\n  " if items else "") + "},")
    y = "null" if p.y is None else "[" + ", ".join(_num(v) for v in p.y) + "]"
    lines.append(f'  "y": {y}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_series(path) -> np.ndarray:
    """Read a time series: a problem file with ``y`` or whitespace/comma separated numbers."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        p = parse_problem(text)
        if p.y is None:
            raise ProblemFileError("y: missing")
        return p.y
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0]
        for tok in line.replace(",", " ").split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ProblemFileError(f"line {lineno}: cannot parse {tok!r} as a number") from None
    if not values:
        raise ProblemFileError(f"{path}: no data")
    y = np.array(values)
    if not np.all(np.isfinite(y)):
        raise ProblemFileError(f"{path}: non-finite value")
    return y


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def eigs_csv(eigs: EigSet, names=None) -> str:
    """One row per eigenvalue tuple, in lexicographic order."""
    eigs = eigs.sorted()
    k = len(names) if names else eigs.k
    names = list(names) if names else [f"l{i + 1}" for i in range(k)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{nm}_{part}" for nm in names for part in ("re", "im")] + ["residual", "is_real"])
    real = eigs.real_mask()
    for j, lam in enumerate(eigs.values):
        row = [_fmt(v) for z in lam for v in (z.real, z.imag)]
        w.writerow(row + [_fmt(eigs.residuals[j]), int(real[j])])
    return buf.getvalue()


def stationary_csv(points, names=("p1", "p2")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(names) + ["objective", "kind", "admissible"])
    for p in points:
        w.writerow([_fmt(v) for v in p.params] + [_fmt(p.objective), p.kind, int(p.admissible)])
    return buf.getvalue()


def grid_csv(values: np.ndarray) -> str:
    """Plain CSV matrix, row ``i`` for the ``i``-th y value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in values:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()
