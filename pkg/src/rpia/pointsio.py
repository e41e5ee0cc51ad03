"""CSV reading and writing for curve points and surface grids.

Curve files carry ``x,y`` or ``x,y,z`` columns; surface files use the long
format ``row,col,x,y,z`` and must cover the full grid. Floats are written
with 17 significant digits so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import IncompleteGrid, ParseError

_FLOAT_FMT = "%.17g"


def save_points(path, points) -> None:
    """Write curve points as a CSV with an x,y(,z) header."""
    pts = np.asarray(points, dtype=float)
    header = ["x", "y", "z"][: pts.shape[1]]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in pts:
            writer.writerow([_FLOAT_FMT % v for v in row])


def load_points(path) -> np.ndarray:
    """Read curve points written by :func:`save_points`."""
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        width = len(header)
        if header[: 2] != ["x", "y"] or width not in (2, 3):
            raise ParseError(f"{path}: line 1: expected header x,y or x,y,z")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"{path}: line {lineno}: expected {width} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric field") from None
    return np.asarray(rows, dtype=float)


def save_grid(path, grid) -> None:
    """Write a surface grid as long-format CSV: row,col,x,y,z."""
    pts = np.asarray(grid, dtype=float)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["row", "col", "x", "y", "z"])
        for h in range(pts.shape[0]):
            for l in range(pts.shape[1]):
                writer.writerow(
                    [h, l] + [_FLOAT_FMT % v for v in pts[h, l]]
                )


def load_grid(path) -> np.ndarray:
    """Read a surface grid written by :func:`save_grid`.

    Raises
    ------
    IncompleteGrid
        If any (row, col) cell of the bounding grid is missing or duplicated.
    """
    cells: dict[tuple[int, int], list[float]] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        if header != ["row", "col", "x", "y", "z"]:
            raise ParseError(f"{path}: line 1: expected header row,col,x,y,z")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"{path}: line {lineno}: expected 5 fields")
            try:
                h, l = int(row[0]), int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad field") from None
            if (h, l) in cells:
                raise IncompleteGrid(f"{path}: duplicate cell ({h}, {l})")
            cells[(h, l)] = values
    if not cells:
        raise ParseError(f"{path}: no data rows")
    n_rows = max(h for h, _ in cells) + 1
    n_cols = max(l for _, l in cells) + 1
    if len(cells) != n_rows * n_cols:
        raise IncompleteGrid(
            f"{path}: {len(cells)} cells for a {n_rows}x{n_cols} grid"
        )
    grid = np.empty((n_rows, n_cols, 3))
    for (h, l), values in cells.items():
        grid[h, l] = values
    return grid


def write_csv(path, header, rows) -> None:
    """Small helper for report tables; floats get full precision."""
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_FLOAT_FMT % v if isinstance(v, float) else v for v in row]
            )
