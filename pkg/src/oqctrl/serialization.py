"""Structured-text ingestion and deterministic file emission.

Matrix literals are row-major lists of ``[re, im]`` pairs; this convention
is shared by every module and the CLI.  All floating-point output is
printed with 17 significant digits so files round-trip bit-exactly and
identical (config, seed) pairs produce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def matrix_from_lists(rows) -> np.ndarray:
    """Complex matrix from row-major [re, im] pairs."""
    if not isinstance(rows, list) or not rows:
        raise ValueError("matrix literal must be a nonempty list of rows")
    data = []
    width = None
    for r, row in enumerate(rows):
        if not isinstance(row, list) or (width is not None and len(row) != width):
            raise ValueError(f"row {r} is not a list of equal length")
        width = len(row)
        entries = []
        for c, pair in enumerate(row):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ValueError(f"entry ({r}, {c}) is not an [re, im] pair")
            entries.append(complex(float(pair[0]), float(pair[1])))
        data.append(entries)
    return np.array(data, dtype=complex)


def matrix_to_lists(m: np.ndarray) -> list:
    """Inverse of :func:`matrix_from_lists`."""
    a = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in a]


def fmt(x) -> str:
    """Scalar formatting: floats at 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _render_json(obj, indent: int) -> str:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_render_json(v, indent + 2)}'
            for k, v in sorted(obj.items())
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{pad}  {_render_json(v, indent + 2)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj) -> None:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    Path(path).write_text(_render_json(obj, 0) + "\n")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
