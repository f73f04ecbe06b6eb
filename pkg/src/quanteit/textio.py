"""Plain-text matrix/vector files and small atomic-write helpers.

File layout: the first line holds ``ROWS COLS``, followed by ROWS lines of
COLS space-separated floats. Values are written with ``repr`` precision so a
round trip is lossless and reruns are byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import LoadError


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x: float) -> str:
    return repr(float(x))


def write_matrix(path, a) -> None:
    """Write a 1-D or 2-D array; vectors are stored as a single column."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D array, got shape {a.shape}")
    rows, cols = a.shape
    lines = [f"{rows} {cols}"]
    lines.extend(" ".join(format_float(x) for x in row) for row in a)
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Read a matrix file into a 2-D float array.

    Raises :class:`LoadError` with the offending line number on any format
    problem.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"expected file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise LoadError("empty file", path, 1)
    header = lines[0].split()
    if len(header) != 2:
        raise LoadError("header must be 'ROWS COLS'", path, 1)
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise LoadError("header must contain two integers", path, 1) from None
    if rows < 0 or cols < 1:
        raise LoadError(f"invalid dimensions {rows}x{cols}", path, 1)
    if len(lines) - 1 != rows:
        raise LoadError(f"expected {rows} data rows, found {len(lines) - 1}", path, len(lines))
    out = np.empty((rows, cols))
    for i, line in enumerate(lines[1:]):
        fields = line.split()
        if len(fields) != cols:
            raise LoadError(f"expected {cols} values, found {len(fields)}", path, i + 2)
        try:
            out[i] = [float(f) for f in fields]
        except ValueError:
            raise LoadError("unparseable number", path, i + 2) from None
        if not np.all(np.isfinite(out[i])):
            raise LoadError("non-finite value", path, i + 2)
    return out


def write_vector(path, v) -> None:
    write_matrix(path, np.asarray(v, dtype=float).ravel())


def read_vector(path) -> np.ndarray:
    a = read_matrix(path)
    if a.shape[1] != 1 and a.shape[0] != 1:
        raise LoadError(f"expected a single row or column, got {a.shape[0]}x{a.shape[1]}", path, 1)
    return a.ravel()


def write_json(path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_text(path, text: str) -> None:
    _atomic_write_text(path, text)


def write_pgm(path, image, vmax=None) -> None:
    """Write an ASCII (P2) grayscale image, mapping ``[0, vmax]`` onto 0..255.

    ``vmax`` defaults to the image maximum; values below zero clip to black.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM rendering needs a 2-D image")
    if vmax is None:
        vmax = float(np.max(img))
    if vmax > 0:
        scaled = np.clip(img / vmax, 0.0, 1.0)
    else:
        scaled = np.zeros_like(img)
    levels = np.rint(scaled * 255).astype(int)
    h, w = levels.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines.extend(" ".join(str(x) for x in row) for row in levels)
    _atomic_write_text(path, "\n".join(lines) + "\n")
