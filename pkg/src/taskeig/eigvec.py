"""Overflow-free eigenvectors of a real Schur form.

Eigenvectors are computed by tiled backsubstitution on ``(S - lambda I) y = 0``.
Every vector segment is stored together with one power-of-two scaling
exponent per column (an augmented tile); the represented value of column
``j`` is ``X[:, j] / 2**alpha[j]``. Diagonal solves and off-diagonal
updates rescale by powers of two whenever a bound would exceed ``OMEGA``,
so no intermediate can overflow. At the end all segments of a vector are
brought to a common exponent and the vector is normalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kernels import LOG2_OMEGA, OMEGA, SAFMIN, block_eigenvalues, block_starts, fit_exponent, protected_small_solve
from .runtime import CRITICAL, RIGHT_UPDATE, Buffer, Engine, TaskGraph
from .tiled import TiledMatrix

EXPONENT_MIN = -(2 ** 62)


@dataclass(frozen=True)
class ScalingFactor:
    """``2**exponent``; never zero."""

    exponent: int

    def __post_init__(self):
        if self.exponent < EXPONENT_MIN:
            raise ValueError("exponent below the supported range")

    @property
    def value(self) -> float:
        return math.ldexp(1.0, self.exponent) if self.exponent > -1075 else 0.0

    def __mul__(self, other: "ScalingFactor") -> "ScalingFactor":
        return ScalingFactor(max(EXPONENT_MIN, self.exponent + other.exponent))


@dataclass
class AugmentedTile:
    """Column segments ``X`` with exponents ``alpha``: column ``j`` is ``X[:, j] / 2**alpha[j]``."""

    X: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.alpha = np.asarray(self.alpha, dtype=np.int64).reshape(-1)
        if self.alpha.shape[0] != self.X.shape[1]:
            raise ValueError("need one exponent per column")

    def represented(self) -> np.ndarray:
        """Plain values (may overflow or underflow; for checks only)."""
        return np.ldexp(self.X, -np.clip(self.alpha, -2000, 2000)[None, :])

    def copy(self) -> "AugmentedTile":
        return AugmentedTile(self.X.copy(), self.alpha.copy())


@dataclass
class EigenvectorSet:
    """Eigenvectors stored column-wise; a conjugate pair owns (re, im) columns."""

    eigenvalues: List[complex]
    vectors: np.ndarray
    columns: List[Tuple[int, ...]]
    exponents: np.ndarray
    flagged: List[bool] = field(default_factory=list)
    blocks: List[Tuple[int, int]] = field(default_factory=list)

    def vector(self, i: int) -> np.ndarray:
        cols = self.columns[i]
        if len(cols) == 1:
            return self.vectors[:, cols[0]].astype(complex)
        return self.vectors[:, cols[0]] + 1j * self.vectors[:, cols[1]]

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def sidecar(self) -> list:
        return [{"eigenvalue": [z.real, z.imag], "columns": list(c), "flagged": bool(f)}
                for z, c, f in zip(self.eigenvalues, self.columns, self.flagged)]


# ---------------------------------------------------------------------------
# scaled level-3 update


def _log2(x: float) -> float:
    return math.log2(x) if x > 0.0 else -math.inf


def _colmax(x: np.ndarray) -> np.ndarray:
    return np.max(np.abs(x), axis=0) if x.shape[0] else np.zeros(x.shape[1])


def _link_min(e: np.ndarray, links: Optional[Sequence[int]]) -> np.ndarray:
    if links is None:
        return e
    out = e.copy()
    links = np.asarray(links)
    for g in np.unique(links):
        m = links == g
        out[m] = e[m].min()
    return out


def protect_update(x: AugmentedTile, y: AugmentedTile, t: np.ndarray, links=None) -> np.ndarray:
    """Exponents ``gamma`` making ``Y - T X`` safe after rescaling.

    Both operands are brought to ``gamma_j <= min(alpha_j, beta_j)``; then
    ``||y_j|| + ||T|| ||x_j|| <= OMEGA`` holds in the infinity norm.
    Columns sharing a ``links`` id get a common exponent.
    """
    g = np.minimum(x.alpha, y.alpha)
    tn = float(np.max(np.sum(np.abs(t), axis=1))) if t.size else 0.0
    xs = _colmax(x.X)
    ys = _colmax(y.X)
    out = g.copy()
    for j in range(g.shape[0]):
        lx = _log2(xs[j]) + float(g[j] - x.alpha[j]) + _log2(tn)
        ly = _log2(ys[j]) + float(g[j] - y.alpha[j])
        hi, lo = max(lx, ly), min(lx, ly)
        bound = hi + (math.log2(1.0 + 2.0 ** (lo - hi)) if lo > -math.inf else 0.0)
        out[j] = g[j] + fit_exponent(bound)
    return _link_min(out, links)


def linear_update(x: AugmentedTile, y: AugmentedTile, t: np.ndarray, links=None, protect: bool = True) -> AugmentedTile:
    """Represented ``z / gamma = y / beta - T x / alpha`` with one matrix product."""
    if not np.any(t):
        return y.copy()
    live = np.any(x.X != 0.0, axis=0)
    if not protect:
        z = y.X - t @ x.X
        return AugmentedTile(z, y.alpha.copy())
    gamma = np.where(live, protect_update(x, y, t, links), y.alpha)
    xs = np.ldexp(x.X, (gamma - x.alpha)[None, :])
    ys = np.ldexp(y.X, (gamma - y.alpha)[None, :])
    z = ys - t @ np.where(live[None, :], xs, 0.0)
    z[:, ~live] = y.X[:, ~live]
    return AugmentedTile(z, gamma)


def consistent_scaling(segments: Sequence[AugmentedTile]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rescale every segment to the minimum exponent per column.

    Returns ``(stacked columns, common exponent, flagged)``; a column is
    flagged when rescaling pushed a nonzero entry to a subnormal or zero.
    """
    alphas = np.stack([s.alpha for s in segments])
    common = alphas.min(axis=0)
    parts = []
    flagged = np.zeros(common.shape[0], dtype=bool)
    for s, a in zip(segments, alphas):
        d = common - a
        if not np.any(d):
            parts.append(s.X)
            continue
        scaled = np.ldexp(s.X, np.maximum(d, -2000)[None, :])
        bad = (s.X != 0.0) & (np.abs(scaled) < SAFMIN)
        flagged |= np.any(bad, axis=0)
        parts.append(scaled)
    return np.vstack(parts), common, flagged


def normalize_columns(x: np.ndarray, columns: Sequence[Tuple[int, ...]]) -> np.ndarray:
    """Unit infinity norm; a real vector's first largest entry is made positive."""
    out = x.copy()
    for cols in columns:
        if len(cols) == 1:
            c = cols[0]
            v = out[:, c]
            i = int(np.argmax(np.abs(v)))
            if v[i] != 0.0:
                out[:, c] = v / v[i]
                out[i, c] = 1.0
        else:
            mod = np.hypot(out[:, cols[0]], out[:, cols[1]])
            m = float(mod.max())
            if m > 0.0:
                out[:, cols[0]] /= m
                out[:, cols[1]] /= m
    out += 0.0  # no negative zeros
    return out


# ---------------------------------------------------------------------------
# tiled backsubstitution


def segments_for(s: np.ndarray, tile_size: int) -> List[Tuple[int, int]]:
    """Row segments following the tile grid, shifted so no 2x2 block is cut."""
    n = s.shape[0]
    cuts = [0]
    for b in range(tile_size, n, tile_size):
        if s[b, b - 1] != 0.0:
            b += 1
        if b > cuts[-1] and b < n:
            cuts.append(b)
    cuts.append(n)
    return [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]


def _pair_vector(blk: np.ndarray) -> Tuple[np.ndarray, complex]:
    a, b, c = blk[0, 0], blk[0, 1], blk[1, 0]
    w = math.sqrt(abs(b)) * math.sqrt(abs(c))
    if abs(b) >= abs(c):
        v = np.array([1.0 + 0j, 1j * w / b])
    else:
        v = np.array([1j * w / c, 1.0 + 0j])
    return v, complex(blk[0, 0], w)


def _resolve(sel, s: np.ndarray) -> List[Tuple[int, int]]:
    blocks = block_starts(s)
    if sel is None:
        return blocks
    flags = getattr(sel, "flags", None)
    if flags is not None:
        if tuple(getattr(sel, "blocks", ())) != tuple(blocks):
            raise ValueError("selection does not match the block structure of S")
        return [b for b, f in zip(blocks, flags) if f]
    idx = list(sel)
    return [blocks[i] for i in idx]


class _Group:
    """Eigenvalues homed in one segment; their columns travel together."""

    def __init__(self, home: int):
        self.home = home
        self.items: List[Tuple[int, int, complex, np.ndarray, Tuple[int, ...]]] = []
        self.links: List[int] = []

    @property
    def width(self) -> int:
        return len(self.links)


def solve_eigenvectors(s: TiledMatrix, sel=None, engine: Optional[Engine] = None, protect: bool = True,
                       normalize: bool = True) -> EigenvectorSet:
    """Eigenvectors ``y`` of the quasi-triangular ``S`` for the selected blocks.

    ``sel`` is a :class:`~taskeig.reorder.Selection`, a list of block
    indices, or None for all blocks. With ``protect=False`` no scaling is
    done at all (reference path).
    """
    sd = s.data
    n = s.rows
    chosen = _resolve(sel, sd)
    segs = segments_for(sd, s.tile_size)
    seg_of = np.empty(n, dtype=np.int64)
    for i, (r0, r1) in enumerate(segs):
        seg_of[r0:r1] = i
    tnorm = float(np.max(np.sum(np.abs(sd), axis=1))) if n else 0.0

    groups: dict = {}
    eigenvalues: List[complex] = []
    columns: List[Tuple[int, ...]] = []
    col = 0
    for k, size in chosen:
        home = int(seg_of[k])
        g = groups.setdefault(home, _Group(home))
        if size == 1:
            lam = complex(sd[k, k], 0.0)
            v = np.array([1.0 + 0j])
            cols = (col,)
        else:
            v, lam = _pair_vector(sd[k:k + 2, k:k + 2])
            cols = (col, col + 1)
        local = len(g.links)
        g.items.append((k, size, lam, v, tuple(range(local, local + len(cols)))))
        g.links.extend([local] * len(cols))
        eigenvalues.append(lam)
        columns.append(cols)
        col += len(cols)
    m = col

    graph = TaskGraph(s)
    bufs = {}
    order = sorted(groups)
    for home in order:
        g = groups[home]
        for i in range(home + 1):
            bufs[i, home] = graph.buffer(f"y[{i},{home}]")

        def init(g=g):
            r0, r1 = segs[g.home]
            x = np.zeros((r1 - r0, g.width))
            for k, size, lam, v, lc in g.items:
                x[k - r0:k - r0 + size, lc[0]] = v.real
                if len(lc) == 2:
                    x[k - r0:k - r0 + size, lc[1]] = v.imag
            bufs[g.home, g.home].value = AugmentedTile(x, np.zeros(g.width, dtype=np.int64))
            for i in range(g.home):
                a0, a1 = segs[i]
                bufs[i, g.home].value = AugmentedTile(np.zeros((a1 - a0, g.width)), np.zeros(g.width, dtype=np.int64))

        graph.insert(init, writes=[bufs[i, home] for i in range(home + 1)], priority=CRITICAL, label=f"ev.init[{home}]")
        for i in range(home, -1, -1):
            r0, r1 = segs[i]

            def solve(i=i, g=g):
                _solve_segment(sd, segs, i, g, bufs[i, g.home], protect, tnorm)

            graph.insert(solve, reads=s.tiles_in(r0, r1, r0, r1), writes=[bufs[i, home]], priority=CRITICAL,
                         label=f"ev.solve[{i},{home}]")
            for j in range(i - 1, -1, -1):
                a0, a1 = segs[j]

                def update(i=i, j=j, g=g, a0=a0, a1=a1, r0=r0, r1=r1):
                    src, dst = bufs[i, g.home], bufs[j, g.home]
                    dst.value = linear_update(src.value, dst.value, sd[a0:a1, r0:r1], g.links, protect)

                graph.insert(update, reads=s.tiles_in(a0, a1, r0, r1) + [bufs[i, home]], writes=[bufs[j, home]],
                             priority=CRITICAL if j == i - 1 else RIGHT_UPDATE, label=f"ev.update[{j}<{i},{home}]")
    (engine or Engine()).run(graph)

    vectors = np.zeros((n, m))
    exponents = np.zeros(m, dtype=np.int64)
    flagged = [False] * len(eigenvalues)
    ei = 0
    for home in order:
        g = groups[home]
        parts = [bufs[i, home].value for i in range(home + 1)]
        stacked, common, flg = consistent_scaling(parts)
        gcols = [columns[ei + t] for t in range(len(g.items))]
        base = gcols[0][0]
        upto = segs[home][1]
        vectors[:upto, base:base + g.width] = stacked
        exponents[base:base + g.width] = common
        for t, (_, _, _, _, lc) in enumerate(g.items):
            flagged[ei + t] = bool(np.any(flg[list(lc)]))
        ei += len(g.items)
    if normalize:
        vectors = normalize_columns(vectors, columns)
        exponents[:] = 0
    return EigenvectorSet(eigenvalues, vectors, columns, exponents, flagged, list(chosen))


def _solve_segment(sd, segs, i, g: _Group, buf: Buffer, protect: bool, tnorm: float) -> None:
    r0, r1 = segs[i]
    aug: AugmentedTile = buf.value
    x = aug.X
    alpha = aug.alpha
    t = sd[r0:r1, r0:r1]
    for k, size, lam, v, lc in g.items:
        if i == g.home:
            p = k - r0
            if p == 0:
                continue
            rhs = x[:, list(lc)] if lam.imag != 0.0 else x[:, lc[0]]
            coupling = t[:p, p:p + size]
            if protect:
                cb = float(np.max(np.sum(np.abs(coupling), axis=1)))
                d = fit_exponent(_log2(cb) + _log2(float(np.max(np.abs(rhs)))))
                if d:
                    rhs = np.ldexp(rhs, d)
                    alpha[list(lc)] += d
            rhs = np.array(rhs)
            rhs[:p] = -(coupling @ rhs[p:p + size])
            nrows = p
        else:
            rhs = x[:, list(lc)] if lam.imag != 0.0 else x[:, lc[0]]
            nrows = r1 - r0
        sol, e, _ = protected_small_solve(t, lam, rhs, int(alpha[lc[0]]), nrows=nrows, protect=protect, tnorm=tnorm)
        if lam.imag != 0.0:
            x[:, list(lc)] = sol
        else:
            x[:, lc[0]] = sol
        alpha[list(lc)] = max(EXPONENT_MIN, e)


def backtransform(y: EigenvectorSet, q, engine: Optional[Engine] = None) -> EigenvectorSet:
    """``x = Q y`` for every column."""
    qd = q.data if isinstance(q, TiledMatrix) else np.asarray(q, dtype=np.float64)
    if qd.ndim != 2 or qd.shape[1] != y.vectors.shape[0]:
        raise ValueError(f"Q of shape {qd.shape} does not match vectors of length {y.vectors.shape[0]}")
    out = np.zeros((qd.shape[0], y.vectors.shape[1]))
    if isinstance(q, TiledMatrix):
        graph = TaskGraph(q)
        for r0, r1 in q.row_blocks(0, q.rows):
            def task(r0=r0, r1=r1):
                out[r0:r1] = qd[r0:r1] @ y.vectors
            graph.insert(task, reads=q.tiles_in(r0, r1, 0, q.cols), priority=CRITICAL, label=f"ev.back[{r0}]")
        (engine or Engine()).run(graph)
    else:
        out[:] = qd @ y.vectors
    return EigenvectorSet(list(y.eigenvalues), out, list(y.columns), y.exponents.copy(), list(y.flagged),
                          list(y.blocks))
