"""Deterministic file output: CSV with 17 significant digits, LF endings, sha256 manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return v


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header``; floats as ``%.17g``."""
    path = Path(path)
    lines = []

    class _Sink:
        def write(self, s):
            lines.append(s)

    w = csv.writer(_Sink(), lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _atomic_write(path, "".join(lines).encode())
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    _atomic_write(path, text.encode())
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def field_rows(grid):
    """(i, j, l, k1, k2, alpha, nx, ny, nz) for every node of a ``PseudoSpinGrid``."""
    N1, N2, N3 = grid.dims
    c = [grid.axis_coords(a) for a in range(3)]
    for i in range(N1):
        for j in range(N2):
            for l in range(N3):
                yield (i, j, l, c[0][i], c[1][j], c[2][l], *grid.data[i, j, l])
