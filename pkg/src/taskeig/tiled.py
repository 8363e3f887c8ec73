"""Dense matrices partitioned into square tiles.

A :class:`TiledMatrix` owns a single column-major buffer; tiles are views
into it. The tiles are what the runtime tracks dependencies on, so every
task declares the set of tile handles it reads and writes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

_matrix_ids = itertools.count()


@dataclass(frozen=True, order=True)
class TileHandle:
    """Key addressing one tile of one matrix."""

    matrix_id: int
    row: int
    col: int


def default_tile_size(n: int) -> int:
    """Tile edge used when the caller does not pick one."""
    if n >= 1000:
        return 128
    return max(32, int(round(n / 8 / 8)) * 8)


class TiledMatrix:
    """Real matrix stored as a grid of ``tile_size`` x ``tile_size`` tiles.

    Edge tiles keep their true (smaller) size. ``data`` is the full
    Fortran-ordered buffer; :meth:`tile` returns views into it.
    """

    def __init__(self, rows: int, cols: int, tile_size: int, data: np.ndarray | None = None):
        if rows < 1 or cols < 1:
            raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
        if tile_size < 2:
            raise ValueError(f"tile_size must be >= 2, got {tile_size}")
        self.rows = rows
        self.cols = cols
        self.tile_size = tile_size
        self.id = next(_matrix_ids)
        if data is None:
            data = np.zeros((rows, cols), dtype=np.float64, order="F")
        self.data = data

    @property
    def grid(self) -> Tuple[int, int]:
        return math.ceil(self.rows / self.tile_size), math.ceil(self.cols / self.tile_size)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def handle(self, i: int, j: int) -> TileHandle:
        gr, gc = self.grid
        if not (0 <= i < gr and 0 <= j < gc):
            raise ValueError(f"tile index ({i}, {j}) outside grid {gr}x{gc}")
        return TileHandle(self.id, i, j)

    def tile_bounds(self, i: int, j: int) -> Tuple[int, int, int, int]:
        ts = self.tile_size
        return i * ts, min((i + 1) * ts, self.rows), j * ts, min((j + 1) * ts, self.cols)

    def tile(self, i: int, j: int) -> np.ndarray:
        r0, r1, c0, c1 = self.tile_bounds(i, j)
        return self.data[r0:r1, c0:c1]

    def handles(self) -> Iterator[TileHandle]:
        gr, gc = self.grid
        for i in range(gr):
            for j in range(gc):
                yield TileHandle(self.id, i, j)

    def tiles_in(self, r0: int, r1: int, c0: int, c1: int) -> List[TileHandle]:
        """Handles of every tile intersecting rows [r0, r1) x cols [c0, c1)."""
        if r1 <= r0 or c1 <= c0:
            return []
        ts = self.tile_size
        return [
            TileHandle(self.id, i, j)
            for i in range(r0 // ts, (r1 - 1) // ts + 1)
            for j in range(c0 // ts, (c1 - 1) // ts + 1)
        ]

    def row_blocks(self, r0: int, r1: int) -> List[Tuple[int, int]]:
        """Split [r0, r1) at tile boundaries."""
        return _split(r0, r1, self.tile_size)

    def col_blocks(self, c0: int, c1: int) -> List[Tuple[int, int]]:
        return _split(c0, c1, self.tile_size)

    def copy(self) -> "TiledMatrix":
        return TiledMatrix(self.rows, self.cols, self.tile_size, self.data.copy(order="F"))

    def __repr__(self) -> str:
        gr, gc = self.grid
        return f"TiledMatrix({self.rows}x{self.cols}, tile_size={self.tile_size}, grid={gr}x{gc})"


def _split(a: int, b: int, ts: int) -> List[Tuple[int, int]]:
    out = []
    while a < b:
        e = min(b, (a // ts + 1) * ts)
        out.append((a, e))
        a = e
    return out


def from_dense(data, rows: int | None = None, cols: int | None = None, tile_size: int | None = None) -> TiledMatrix:
    """Build a tiled matrix from row-major data.

    ``data`` is either a 2-D array or a flat row-major sequence, in which
    case ``rows`` and ``cols`` are required.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        if rows is None:
            rows, cols = arr.shape
        elif arr.shape != (rows, cols):
            raise ValueError(f"data has shape {arr.shape}, expected {(rows, cols)}")
    elif arr.ndim == 1:
        if rows is None or cols is None:
            raise ValueError("flat data requires rows and cols")
        if arr.size != rows * cols:
            raise ValueError(f"data has {arr.size} entries, expected {rows * cols}")
        arr = arr.reshape(rows, cols)
    else:
        raise ValueError(f"data must be 1-D or 2-D, got {arr.ndim}-D")
    if tile_size is None:
        tile_size = default_tile_size(max(rows, cols))
    return TiledMatrix(rows, cols, tile_size, np.array(arr, dtype=np.float64, order="F", copy=True))


def to_dense(m: TiledMatrix) -> np.ndarray:
    """Row-major (C-ordered) copy of the matrix."""
    return np.array(m.data, order="C", copy=True)


def identity(n: int, tile_size: int) -> TiledMatrix:
    return TiledMatrix(n, n, tile_size, np.asfortranarray(np.eye(n)))


def window_view(m: TiledMatrix, rows: Tuple[int, int], cols: Tuple[int, int]):
    """Intersect a window with the tile grid.

    Returns a list of ``(handle, (lr0, lr1), (lc0, lc1))`` where the local
    ranges index into the tile.
    """
    r0, r1 = rows
    c0, c1 = cols
    if not (0 <= r0 < r1 <= m.rows and 0 <= c0 < c1 <= m.cols):
        raise ValueError(f"window {rows}x{cols} outside {m.rows}x{m.cols} matrix")
    ts = m.tile_size
    out = []
    for a, b in _split(r0, r1, ts):
        i = a // ts
        for c, d in _split(c0, c1, ts):
            j = c // ts
            out.append((TileHandle(m.id, i, j), (a - i * ts, b - i * ts), (c - j * ts, d - j * ts)))
    return out
