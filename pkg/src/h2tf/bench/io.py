"""Matrix Market and JSON manifest ingestion, CSV emission.

The Matrix Market reader is small and strict so that malformed input is
reported with the file, line and column of the offending token.  Only real
and integer fields are accepted; ``general``, ``symmetric`` and
``skew-symmetric`` symmetries are supported in both ``array`` and
``coordinate`` formats.  Numbers are parsed with ``float``, which is
locale-independent.
"""

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from ..exceptions import DimensionMismatch, ParseError
from ..system import StateSpaceModel
from .models import ModelBundle

_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _tokens(line):
    """Whitespace-separated tokens with their 1-based start columns."""
    out, i, n = [], 0, len(line)
    while i < n:
        while i < n and line[i].isspace():
            i += 1
        if i >= n:
            break
        j = i
        while j < n and not line[j].isspace():
            j += 1
        out.append((line[i:j], i + 1))
        i = j
    return out


def _number(tok, col, path, lineno, integer=False):
    try:
        if integer:
            return int(tok)
        val = float(tok)
    except ValueError:
        raise ParseError(f"invalid number {tok!r}", path, lineno, col) from None
    if not math.isfinite(val):
        raise ParseError(f"non-finite value {tok!r}", path, lineno, col)
    return val


def read_matrix_market(path):
    """Read a dense real matrix from a Matrix Market file.

    Raises
    ------
    ParseError
        On a malformed banner, size line or entry, naming file, line and column.
    """
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", path, 1, 1)
    banner = _tokens(lines[0])
    words = [t.lower() for t, _ in banner]
    if len(words) != 5 or words[0] != "%%matrixmarket":
        raise ParseError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", path, 1, 1)
    if words[1] != "matrix":
        raise ParseError(f"unsupported object {banner[1][0]!r}", path, 1, banner[1][1])
    fmt, fld, sym = words[2:]
    if fmt not in ("array", "coordinate"):
        raise ParseError(f"unsupported format {banner[2][0]!r}", path, 1, banner[2][1])
    if fld not in _FIELDS:
        raise ParseError(f"unsupported field {banner[3][0]!r}", path, 1, banner[3][1])
    if sym not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry {banner[4][0]!r}", path, 1, banner[4][1])

    body = [(k + 1, _tokens(ln)) for k, ln in enumerate(lines) if k > 0]
    body = [(k, toks) for k, toks in body if toks and not toks[0][0].startswith("%")]
    if not body:
        raise ParseError("missing size line", path, len(lines), 1)
    size_line, size_toks = body[0]
    want = 2 if fmt == "array" else 3
    if len(size_toks) != want:
        raise ParseError(f"size line needs {want} integers", path, size_line, 1)
    dims = [_number(t, c, path, size_line, integer=True) for t, c in size_toks]
    if any(d < 0 for d in dims):
        raise ParseError("negative dimension", path, size_line, 1)
    n_rows, n_cols = dims[0], dims[1]
    if sym != "general" and n_rows != n_cols:
        raise ParseError(f"{sym} matrix must be square", path, size_line, 1)
    M = np.zeros((n_rows, n_cols))
    entries = body[1:]

    if fmt == "array":
        if sym == "general":
            slots = [(i, j) for j in range(n_cols) for i in range(n_rows)]
        elif sym == "symmetric":
            slots = [(i, j) for j in range(n_cols) for i in range(j, n_rows)]
        else:
            slots = [(i, j) for j in range(n_cols) for i in range(j + 1, n_rows)]
        values = []
        for lineno, toks in entries:
            for tok, col in toks:
                if len(values) == len(slots):
                    raise ParseError("more entries than the declared size", path, lineno, col)
                values.append(_number(tok, col, path, lineno))
        if len(values) < len(slots):
            last = entries[-1][0] if entries else size_line
            raise ParseError(f"expected {len(slots)} entries, found {len(values)}", path, last, 1)
        for (i, j), v in zip(slots, values):
            M[i, j] = v
    else:
        nnz = dims[2]
        if len(entries) != nnz:
            last = entries[-1][0] if entries else size_line
            raise ParseError(f"expected {nnz} entries, found {len(entries)}", path, last, 1)
        for lineno, toks in entries:
            if len(toks) != 3:
                raise ParseError("coordinate entry needs 'row col value'", path, lineno, toks[0][1])
            i = _number(toks[0][0], toks[0][1], path, lineno, integer=True)
            j = _number(toks[1][0], toks[1][1], path, lineno, integer=True)
            if not (1 <= i <= n_rows):
                raise ParseError(f"row index {i} out of range", path, lineno, toks[0][1])
            if not (1 <= j <= n_cols):
                raise ParseError(f"column index {j} out of range", path, lineno, toks[1][1])
            if sym != "general" and j > i:
                raise ParseError("entry above the diagonal in a symmetric file", path, lineno, toks[1][1])
            M[i - 1, j - 1] += _number(toks[2][0], toks[2][1], path, lineno)

    if sym == "symmetric":
        M = M + np.tril(M, -1).T
    elif sym == "skew-symmetric":
        M = M - np.tril(M, -1).T
    return M


def write_matrix_market(path, M, comment=None):
    """Write ``M`` in array format with 17 significant digits."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for v in M.ravel(order="F"):
            fh.write(f"{v:.17g}\n")


def _check_model_dims(A, B, C, paths):
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A ({paths[0]}) is {A.shape[0]}x{A.shape[1]}, not square")
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B ({paths[1]}) has {B.shape[0]} rows, A has order {A.shape[0]}")
    if C.shape[1] != A.shape[0]:
        raise DimensionMismatch(f"C ({paths[2]}) has {C.shape[1]} columns, A has order {A.shape[0]}")


def read_manifest(path):
    """Parse a manifest ``{name, files: {A, B, C}, channels: {input, output}}``.

    Relative file paths are resolved against the manifest's directory and
    channel indices are 1-based.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, str(path), exc.lineno, exc.colno) from None
    if not isinstance(data, dict) or not isinstance(data.get("files"), dict):
        raise ParseError("manifest must be an object with a 'files' object", str(path), 1, 1)
    files = data["files"]
    missing = [k for k in "ABC" if k not in files]
    if missing:
        raise ParseError(f"manifest 'files' lacks {', '.join(missing)}", str(path), 1, 1)
    base = path.parent
    resolved = {k: str((base / files[k]) if not os.path.isabs(files[k]) else Path(files[k])) for k in "ABC"}
    channels = data.get("channels")
    if channels is not None:
        try:
            channels = (int(channels["output"]) - 1, int(channels["input"]) - 1)
        except (KeyError, TypeError, ValueError):
            raise ParseError("'channels' needs integer 'input' and 'output'", str(path), 1, 1) from None
    return data.get("name", path.stem), resolved, channels, data.get("provenance", {})


def load_model(paths, channels=None, name=None):
    """Load a :class:`ModelBundle` from a manifest or a ``(A, B, C)`` path triple.

    ``channels`` (0-based ``(output, input)``) overrides any channel selection
    in the manifest.
    """
    provenance = {}
    if isinstance(paths, (str, os.PathLike)):
        mname, files, mchannels, provenance = read_manifest(paths)
        name = name or mname
        channels = mchannels if channels is None else channels
        triple = (files["A"], files["B"], files["C"])
        provenance = dict(provenance, manifest=str(paths))
    else:
        triple = tuple(str(p) for p in paths)
        if len(triple) != 3:
            raise ValueError("expected a manifest path or three Matrix Market paths")
        name = name or Path(triple[0]).stem
    A, B, C = (read_matrix_market(p) for p in triple)
    _check_model_dims(A, B, C, triple)
    provenance = dict(provenance, files={"A": triple[0], "B": triple[1], "C": triple[2]})
    return ModelBundle.select(StateSpaceModel(A, B, C), name, channels, provenance)


def save_model(directory, model, name, channels=None, provenance=None):
    """Write ``model`` as three Matrix Market files plus ``<name>.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for key, M in (("A", model.A), ("B", model.B), ("C", model.C)):
        fname = f"{name}_{key}.mtx"
        write_matrix_market(directory / fname, M)
        files[key] = fname
    manifest = {"name": name, "files": files}
    if channels is not None:
        manifest["channels"] = {"output": channels[0] + 1, "input": channels[1] + 1}
    if provenance:
        manifest["provenance"] = provenance
    out = directory / f"{name}.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def emit_csv(table, path):
    """Write a table (``columns`` and ``rows()``) as RFC-4180 CSV.

    Floats carry 17 significant digits so that parsing them back is exact.
    An empty table produces a header-only file.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(table.columns)
        for row in table.rows():
            writer.writerow([_cell(v) for v in row])


def read_csv(path):
    """Read a CSV written by :func:`emit_csv` into a header and list of string rows."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return (rows[0], rows[1:]) if rows else ([], [])
