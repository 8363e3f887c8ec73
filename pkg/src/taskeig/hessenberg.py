"""Blocked reduction to upper Hessenberg form, ``A = Q1 H Q1^T``.

Each panel of ``b`` columns is reduced by one monolithic task that builds
the compact WY factors ``I - V T V^T`` together with ``Y = A V T``. The
trailing matrix and the rows above the panel are then updated by tiled
tasks, and ``Q1`` is accumulated by low-priority tasks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .kernels import make_reflector
from .runtime import ACCUMULATE, CRITICAL, RIGHT_UPDATE, Engine, TaskGraph
from .tiled import TiledMatrix, identity


@dataclass
class CompactWY:
    """Panel reflectors ``I - V T V^T`` and ``Y = A V T``.

    Reflector ``i`` acts on rows ``start + i + 1`` onward; rows of ``V``
    above that are zero and ``V[start + i + 1, i] == 1``.
    """

    V: np.ndarray
    T: np.ndarray
    Y: np.ndarray
    start: int

    @property
    def width(self) -> int:
        return self.T.shape[0]

    @property
    def taus(self) -> np.ndarray:
        return np.diag(self.T).copy()

    def matrix(self) -> np.ndarray:
        return np.eye(self.V.shape[0]) - self.V @ self.T @ self.V.T


def reduce_panel(a: np.ndarray, start: int, width: int, record: Optional[List] = None) -> CompactWY:
    """Reduce columns ``start:start+width`` of ``a`` in place.

    Only the rows below the panel top are touched. The rest of the matrix
    is left for :func:`update_trailing` and :func:`update_top_right`; the
    rows of ``Y`` above the panel are filled in by the latter.
    """
    n = a.shape[0]
    j = start
    b = min(width, n - 2 - j)
    V = np.zeros((n, b))
    T = np.zeros((b, b))
    Y = np.zeros((n, b))
    # single scratch copy of the section below the panel top
    work = np.array(a[j + 1:, j:], order="F")
    for i in range(b):
        c = j + i
        col = work[:, i]
        if i > 0:
            col -= Y[j + 1:, :i] @ V[c, :i]
            w = T[:i, :i].T @ (V[j + 1:, :i].T @ col)
            col -= V[j + 1:, :i] @ w
        refl, beta = make_reflector(col[i:])
        tau = refl.tau
        V[c + 1:, i] = refl.v
        col[i] = beta
        col[i + 1:] = 0.0
        if tau == 0.0:
            continue
        vv = V[c + 1:, i]
        if record is not None:
            record.append(((j + 1, n), (c + 1, n)))
        av = work[:, i + 1:] @ vv
        vtv = V[c + 1:, :i].T @ vv
        Y[j + 1:, i] = tau * (av - Y[j + 1:, :i] @ vtv)
        T[:i, i] = -tau * (T[:i, :i] @ vtv)
        T[i, i] = tau
    a[j + 1:, j:j + b] = work[:, :b]
    return CompactWY(V, T, Y, j)


def update_trailing(a: np.ndarray, wy: CompactWY, cols: Optional[Tuple[int, int]] = None) -> None:
    """``A <- (I - V T V^T)^T (A - Y V^T)`` on rows below the panel top."""
    n = a.shape[0]
    j = wy.start
    c0, c1 = cols if cols is not None else (j + wy.width, n)
    if c1 <= c0 or not np.any(wy.T):
        return
    V = wy.V[j + 1:]
    sub = a[j + 1:, c0:c1]
    sub -= wy.Y[j + 1:] @ wy.V[c0:c1].T
    sub -= V @ (wy.T.T @ (V.T @ sub))


def update_top_right(a: np.ndarray, wy: CompactWY, rows: Optional[Tuple[int, int]] = None) -> None:
    """``A <- A - Y V^T`` on the rows above the panel (columns right of its top)."""
    j = wy.start
    r0, r1 = rows if rows is not None else (0, j + 1)
    if r1 <= r0 or not np.any(wy.T):
        return
    V = wy.V[j + 1:]
    ytop = (a[r0:r1, j + 1:] @ V) @ wy.T
    wy.Y[r0:r1] = ytop
    a[r0:r1, j + 1:] -= ytop @ V.T


def accumulate_q(q: np.ndarray, wy: CompactWY, rows: Optional[Tuple[int, int]] = None) -> None:
    """``Q <- Q (I - V T V^T)``."""
    j = wy.start
    r0, r1 = rows if rows is not None else (0, q.shape[0])
    if not np.any(wy.T):
        return
    V = wy.V[j + 1:]
    blk = q[r0:r1, j + 1:]
    blk -= (blk @ V) @ wy.T @ V.T


def panel_width(tile_size: int) -> int:
    return min(tile_size, 64)


def insert_hessenberg_tasks(graph: TaskGraph, h: TiledMatrix, q: Optional[TiledMatrix], width: int) -> List:
    n = h.rows
    a = h.data
    panels = []
    j = 0
    while j < n - 2:
        b = min(width, n - 2 - j)
        buf = graph.buffer(f"wy{j}")

        def panel(j=j, b=b, buf=buf):
            buf.value = reduce_panel(a, j, b)

        graph.insert(panel, reads=h.tiles_in(j + 1, n, j, n) + [buf], writes=h.tiles_in(j + 1, n, j, j + b) + [buf],
                     priority=CRITICAL, label=f"hess.panel[{j}]")
        for c0, c1 in h.col_blocks(j + b, n):
            graph.insert(lambda buf=buf, c0=c0, c1=c1: update_trailing(a, buf.value, (c0, c1)),
                         reads=[buf], writes=h.tiles_in(j + 1, n, c0, c1), priority=CRITICAL,
                         label=f"hess.trailing[{j}:{c0}]")
        for r0, r1 in h.row_blocks(0, j + 1):
            graph.insert(lambda buf=buf, r0=r0, r1=r1: update_top_right(a, buf.value, (r0, r1)),
                         reads=[buf], writes=h.tiles_in(r0, r1, j + 1, n), priority=RIGHT_UPDATE,
                         label=f"hess.top[{j}:{r0}]")
        if q is not None:
            for r0, r1 in q.row_blocks(0, n):
                graph.insert(lambda buf=buf, r0=r0, r1=r1: accumulate_q(q.data, buf.value, (r0, r1)),
                             reads=[buf], writes=q.tiles_in(r0, r1, j + 1, n), priority=ACCUMULATE,
                             label=f"hess.q[{j}:{r0}]")
        panels.append(buf)
        j += b
    return panels


def hessenberg_reduce(a: TiledMatrix, accumulate: bool = True, engine: Optional[Engine] = None,
                      width: Optional[int] = None) -> Tuple[TiledMatrix, Optional[TiledMatrix]]:
    """Reduce ``a`` to upper Hessenberg form ``H`` with ``A = Q1 H Q1^T``.

    ``a`` is not modified. Entries below the subdiagonal of ``H`` are exact
    zeros.
    """
    if a.rows != a.cols:
        raise ValueError(f"matrix must be square, got {a.rows}x{a.cols}")
    engine = engine or Engine()
    h = a.copy()
    q = identity(a.rows, a.tile_size) if accumulate else None
    graph = TaskGraph(h, *([q] if q is not None else []))
    insert_hessenberg_tasks(graph, h, q, width or panel_width(a.tile_size))
    engine.run(graph)
    n = h.rows
    for c in range(n - 2):
        h.data[c + 2:, c] = 0.0
    return h, q
