"""Plain-text matrix files and JSON dims configs.

Matrix format: first line ``rows cols``, then one row per line with entries written
as ``re+imj`` (Python complex literal syntax, no parentheses), whitespace separated.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .model import SystemDims, make_dims


def _fmt(z: complex) -> str:
    re, im = float(z.real), float(z.imag)
    sign = "-" if (im < 0 or (im == 0 and str(im).startswith("-"))) else "+"
    return f"{re!r}{sign}{abs(im)!r}j"


def format_matrix(A) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    out = io.StringIO()
    out.write(f"{A.shape[0]} {A.shape[1]}\n")
    for row in A:
        out.write(" ".join(_fmt(z) for z in row))
        out.write("\n")
    return out.getvalue()


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix file")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad header line {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise ValueError(f"header says {rows} rows, found {len(lines) - 1}")
    A = np.empty((rows, cols), dtype=complex)
    for i, ln in enumerate(lines[1:]):
        toks = ln.split()
        if len(toks) != cols:
            raise ValueError(f"row {i} has {len(toks)} entries, expected {cols}")
        A[i] = [complex(t) for t in toks]
    return A


def write_matrix(path, A) -> None:
    Path(path).write_text(format_matrix(A))


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def load_dims_config(path) -> tuple[SystemDims, float, int]:
    """Read ``{"M", "K", "L", "T_P", "N0", "seed"}``; returns (dims, N0, seed)."""
    cfg = json.loads(Path(path).read_text())
    missing = {"M", "K", "L", "T_P"} - cfg.keys()
    if missing:
        raise ValueError(f"dims config missing keys: {sorted(missing)}")
    dims = make_dims(cfg["M"], cfg["K"], cfg["L"], cfg["T_P"], strict=False)
    return dims, float(cfg.get("N0", 1.0)), int(cfg.get("seed", 0))
