"""Dense matrix text format: a ``rows cols`` header followed by row-major values."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def format_matrix(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in a]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError("matrix text is missing its 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = tokens[2:]
    if len(values) != rows * cols:
        raise ValueError(f"expected {rows * cols} values for a {rows}x{cols} matrix, got {len(values)}")
    return np.array([float(v) for v in values], dtype=float).reshape(rows, cols)


def write_matrix(path, a) -> None:
    Path(path).write_text(format_matrix(a))


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())
