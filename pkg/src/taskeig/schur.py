"""Multishift QR with aggressive early deflation.

The iteration alternates two steps on the active block ``[ilo, ihi]``:

* AED: the trailing ``w x w`` window is reduced to Schur form, converged
  eigenvalues are deflated at the bottom of the window and the rest are
  returned as shifts.
* Bulge chasing: the shifts generate ``3 x 3`` bulges near ``ilo`` which are
  chased off the bottom of the active block in groups, each group through a
  chain of overlapping diagonal windows.

Every local transformation is applied inside a diagonal window (window
task) and accumulated; the rest of the matrix is updated by tiled
left/right update tasks. A bulge chase and the following AED step go into
the same task graph so the runtime can overlap them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kernels import (
    EPS, SAFMIN, SMALL_THRESHOLD, apply_standardization, block_starts, block_eigenvalues, bulge_vector,
    make_reflector, negligible_subdiag, schur_eigenvalues, shifts_from_2x2, small_hessenberg, small_schur,
    standardize_2x2, swap_adjacent_blocks, _apply3_left, _apply3_right,
)
from .runtime import ACCUMULATE, CRITICAL, FAR_UPDATE, RIGHT_UPDATE, Buffer, Engine, TaskGraph
from .tiled import TiledMatrix, default_tile_size, identity, from_dense

CLASSIC = "classic"
NORM_STABLE = "norm-stable"
_CONDITIONS = (CLASSIC, NORM_STABLE)
NIBBLE = 14
EXCEPTIONAL_AFTER = 6


class ConvergenceError(RuntimeError):
    """The QR iteration hit its iteration limit.

    ``partial`` holds the decomposition reached so far; ``converged`` the
    number of trailing eigenvalues that did converge.
    """

    def __init__(self, message: str, partial: "SchurDecomposition", converged: int):
        super().__init__(message)
        self.partial = partial
        self.converged = converged


@dataclass
class SchurOptions:
    deflation: str = NORM_STABLE
    shifts: Optional[int] = None
    aed_window: Optional[int] = None
    max_iterations: Optional[int] = None
    small_threshold: int = SMALL_THRESHOLD
    chase_window: Optional[int] = None

    def __post_init__(self):
        if self.deflation not in _CONDITIONS:
            raise ValueError(f"unknown deflation condition {self.deflation!r}")


@dataclass
class AedResult:
    deflated: int
    shifts: List[complex]
    window: Tuple[int, int]
    spike_eliminated: bool
    converged: bool = True


@dataclass
class BulgeChain:
    """A group of bulges generated by consecutive shift pairs.

    Bulge ``j`` sits at reflector position ``ilo - 1 + t - 3 j`` at step
    ``t``; its reflector acts on the three rows below that position.
    """

    pairs: List[Tuple[complex, complex]]
    ilo: int
    ihi: int
    step: int = 0

    @property
    def count(self) -> int:
        return len(self.pairs)

    def position(self, j: int, t: Optional[int] = None) -> int:
        t = self.step if t is None else t
        return self.ilo - 1 + t - 3 * j

    def active(self, t: int) -> List[int]:
        return [j for j in range(self.count) if self.ilo - 1 <= self.position(j, t) <= self.ihi - 2]

    @property
    def last_step(self) -> int:
        return (self.ihi - 2) - (self.ilo - 1) + 3 * (self.count - 1)

    def positions(self, t: Optional[int] = None) -> List[int]:
        """Positions of the bulges currently on the diagonal, top first."""
        t = self.step if t is None else t
        return sorted(self.position(j, t) for j in self.active(t) if self.position(j, t) >= self.ilo)


@dataclass
class SchurDecomposition:
    S: TiledMatrix
    Q: TiledMatrix
    eigenvalues: List[complex]
    iterations: int = 0
    aed_steps: int = 0
    sweeps: int = 0

    def eigenvalue_pairs(self) -> List[Tuple[float, float]]:
        return [(z.real, z.imag) for z in self.eigenvalues]


# ---------------------------------------------------------------------------
# deflation


def deflation_check(spike, block, condition: str = NORM_STABLE, window_norm: float = 0.0) -> bool:
    """Decide whether the spike entries under a diagonal block can be zeroed."""
    s = float(np.max(np.abs(np.atleast_1d(spike))))
    if s == 0.0:
        return True
    block = np.atleast_2d(np.asarray(block, dtype=np.float64))
    if condition == NORM_STABLE:
        return s <= EPS * window_norm
    if condition != CLASSIC:
        raise ValueError(f"unknown deflation condition {condition!r}")
    if block.shape[0] == 1:
        foo = abs(block[0, 0])
    else:
        foo = abs(block[0, 0]) + math.sqrt(abs(block[0, 1])) * math.sqrt(abs(block[1, 0]))
    if foo == 0.0:
        foo = s
    return s <= max(SAFMIN, EPS * foo)


def aed_window(t: np.ndarray, s: float, condition: str = NORM_STABLE, small: int = SMALL_THRESHOLD):
    """AED on a ``w x w`` window ``t`` whose spike source is the entry ``s``.

    Returns ``(t_new, v, deflated, shifts, s_new, converged)`` with
    ``t = v t_new v^T`` (as far as the window is concerned) and ``s_new``
    the only nonzero entry left in the spike column.
    """
    w = t.shape[0]
    if w > small:
        st, v, ok = _dense_schur(t, small=small, deflation=condition)
    else:
        st, v, ok = small_schur(t)
    if not ok:
        return t, np.eye(w), 0, [], s, False
    wnorm = float(np.linalg.norm(st))
    ns = w
    ilst = 0
    while ilst < ns:
        bs = 2 if ns >= 2 and st[ns - 1, ns - 2] != 0.0 else 1
        kb = ns - bs
        spike = s * v[0, kb:ns]
        if deflation_check(spike, st[kb:ns, kb:ns], condition, wnorm):
            ns -= bs
            continue
        pos = kb
        moved = True
        while pos > ilst:
            ps = 2 if pos - 2 >= ilst and st[pos - 1, pos - 2] != 0.0 else 1
            if not swap_adjacent_blocks(st, pos - ps, ps, bs, v):
                moved = False
                break
            pos -= ps
            bs = 2 if pos + 1 < w and st[pos + 1, pos] != 0.0 else 1
        if not moved:
            break
        ilst = pos + bs
    shifts = []
    for k, size in block_starts(st, 0, ns):
        shifts.extend(block_eigenvalues(st, k, size))
    if ns > 0 and s != 0.0:
        if ns > 1:
            r, _ = make_reflector(s * v[0, :ns])
            if r.tau != 0.0:
                blk = st[:ns, :]
                blk -= r.tau * np.outer(r.v, r.v @ blk)
                cols = st[:, :ns]
                cols -= r.tau * np.outer(cols @ r.v, r.v)
                vc = v[:, :ns]
                vc -= r.tau * np.outer(vc @ r.v, r.v)
            hh, qh = small_hessenberg(st[:ns, :ns])
            st[:ns, :ns] = hh
            st[:ns, ns:] = qh.T @ st[:ns, ns:]
            v[:, :ns] = v[:, :ns] @ qh
        s_new = s * v[0, 0]
    else:
        s_new = 0.0
    for c in range(w - 1):
        st[c + 2:, c] = 0.0
    return st, v, w - ns, shifts, s_new, True


def _dense_schur(t: np.ndarray, small: int, deflation: str):
    """Recursive QR for windows above the small-problem threshold."""
    n = t.shape[0]
    h = from_dense(t, tile_size=default_tile_size(n))
    try:
        dec = schur_reduce(h, None, SchurOptions(deflation=deflation, small_threshold=small), Engine(workers=1))
    except ConvergenceError:
        return t, np.eye(n), False
    return dec.S.data.copy(), dec.Q.data.copy(), True


# ---------------------------------------------------------------------------
# task insertion helpers


def insert_window_updates(graph: TaskGraph, h: TiledMatrix, z: Optional[TiledMatrix], a: int, b: int,
                           ubuf: Buffer, tag: str) -> None:
    """Propagate a window accumulator ``U`` to the rest of ``h`` and to ``z``."""
    n = h.rows
    hd = h.data
    for c0, c1 in h.col_blocks(b, n):
        def left(c0=c0, c1=c1):
            u = ubuf.value
            if u is not None:
                hd[a:b, c0:c1] = u.T @ hd[a:b, c0:c1]
        graph.insert(left, reads=[ubuf], writes=h.tiles_in(a, b, c0, c1), priority=CRITICAL, label=f"{tag}.L[{c0}]")
    for r0, r1 in h.row_blocks(0, a):
        def right(r0=r0, r1=r1):
            u = ubuf.value
            if u is not None:
                hd[r0:r1, a:b] = hd[r0:r1, a:b] @ u
        # only the block row next to the window can feed the next window
        prio = RIGHT_UPDATE if r1 == a else FAR_UPDATE
        graph.insert(right, reads=[ubuf], writes=h.tiles_in(r0, r1, a, b), priority=prio, label=f"{tag}.R[{r0}]")
    if z is not None:
        zd = z.data
        for r0, r1 in z.row_blocks(0, z.rows):
            def acc(r0=r0, r1=r1):
                u = ubuf.value
                if u is not None:
                    zd[r0:r1, a:b] = zd[r0:r1, a:b] @ u
            graph.insert(acc, reads=[ubuf], writes=z.tiles_in(r0, r1, a, b), priority=ACCUMULATE, label=f"{tag}.Q[{r0}]")


def insert_aed(graph: TaskGraph, h: TiledMatrix, z: Optional[TiledMatrix], ilo: int, ihi: int, w: int,
               condition: str, small: int) -> Buffer:
    kwtop = ihi - w + 1
    hd = h.data
    ubuf = graph.buffer("aed.U")
    res = graph.buffer("aed.result")

    def window():
        s = hd[kwtop, kwtop - 1] if kwtop > ilo else 0.0
        t = np.array(hd[kwtop:ihi + 1, kwtop:ihi + 1])
        st, v, nd, shifts, s_new, ok = aed_window(t, s, condition, small)
        if not ok:
            ubuf.value = None
            res.value = AedResult(0, [], (kwtop, ihi), False, converged=False)
            return
        hd[kwtop:ihi + 1, kwtop:ihi + 1] = st
        if kwtop > ilo:
            hd[kwtop, kwtop - 1] = s_new
            hd[kwtop + 1:ihi + 1, kwtop - 1] = 0.0
        ubuf.value = v
        res.value = AedResult(nd, shifts, (kwtop, ihi), True)

    lo_col = kwtop - 1 if kwtop > ilo else kwtop
    graph.insert(window, reads=h.tiles_in(kwtop, ihi + 1, lo_col, ihi + 1),
                 writes=h.tiles_in(kwtop, ihi + 1, lo_col, ihi + 1) + [ubuf, res], priority=CRITICAL, label=f"aed.W[{kwtop}]")
    insert_window_updates(graph, h, z, kwtop, ihi + 1, ubuf, f"aed[{kwtop}]")
    return res


def aed_step(h: TiledMatrix, w: int, condition: str = NORM_STABLE, q: Optional[TiledMatrix] = None,
             ilo: int = 0, ihi: Optional[int] = None, engine: Optional[Engine] = None,
             small: int = SMALL_THRESHOLD) -> AedResult:
    """Run one AED step on the trailing ``w x w`` window of ``[ilo, ihi]`` in place."""
    ihi = h.rows - 1 if ihi is None else ihi
    if not 1 <= w <= ihi - ilo + 1:
        raise ValueError(f"window size {w} does not fit the active block")
    if condition not in _CONDITIONS:
        raise ValueError(f"unknown deflation condition {condition!r}")
    graph = TaskGraph(h, *([q] if q is not None else []))
    res = insert_aed(graph, h, q, ilo, ihi, w, condition, small)
    (engine or Engine()).run(graph)
    return res.value


def insert_block_solve(graph: TaskGraph, h: TiledMatrix, z: Optional[TiledMatrix], ilo: int, ihi: int) -> Buffer:
    """Reduce the (small) active block ``[ilo, ihi]`` to Schur form directly."""
    hd = h.data
    ubuf = graph.buffer("solve.U")
    res = graph.buffer("solve.ok")

    def window():
        t, v, ok = small_schur(hd[ilo:ihi + 1, ilo:ihi + 1])
        res.value = ok
        if not ok:
            ubuf.value = None
            return
        hd[ilo:ihi + 1, ilo:ihi + 1] = t
        ubuf.value = v

    graph.insert(window, reads=h.tiles_in(ilo, ihi + 1, ilo, ihi + 1),
                 writes=h.tiles_in(ilo, ihi + 1, ilo, ihi + 1) + [ubuf, res], priority=CRITICAL, label=f"solve.W[{ilo}]")
    insert_window_updates(graph, h, z, ilo, ihi + 1, ubuf, f"solve[{ilo}]")
    return res


# ---------------------------------------------------------------------------
# bulge chasing


def _bulge_op(arr: np.ndarray, off: int, k: int, s1: complex, s2: complex, ilo: int, ihi: int,
              row_start: int, col_end: int, acc: Optional[np.ndarray]) -> None:
    """Apply the reflector of the bulge at position ``k``.

    ``arr`` holds global rows/cols ``off:`` (a window or the full matrix).
    Left application covers columns up to ``col_end``, right application
    rows from ``row_start``; ``acc`` receives the right application too.
    """
    nr = min(3, ihi - k)
    if k < ilo:
        x = bulge_vector(arr, ilo - off, s1, s2)[:nr]
    else:
        x = arr[k + 1 - off:k + 1 + nr - off, k - off].copy()
    r, beta = make_reflector(x)
    if k >= ilo:
        arr[k + 1 - off, k - off] = beta
        arr[k + 2 - off:k + 1 + nr - off, k - off] = 0.0
    if r.tau == 0.0:
        return
    i0 = k + 1 - off
    _apply3_left(arr, i0, nr, r.v, r.tau, i0, col_end - off)
    _apply3_right(arr, i0, nr, r.v, r.tau, row_start - off, min(k + 4, ihi) + 1 - off)
    if acc is not None:
        _apply3_right(acc, i0, nr, r.v, r.tau, 0, acc.shape[0])


def _chain_steps(chain: BulgeChain, arr, off, t0, t1, row_start, col_end, acc):
    for t in range(t0, t1):
        for j in chain.active(t):
            s1, s2 = chain.pairs[j]
            _bulge_op(arr, off, chain.position(j, t), s1, s2, chain.ilo, chain.ihi, row_start, col_end, acc)


def make_pairs(shifts: Sequence[complex]) -> List[Tuple[complex, complex]]:
    """Group shifts into conjugate pairs and pairs of reals (order kept)."""
    pairs = []
    reals = []
    i = 0
    shifts = list(shifts)
    while i < len(shifts):
        z = complex(shifts[i])
        if z.imag != 0.0:
            if i + 1 >= len(shifts) or complex(shifts[i + 1]) != z.conjugate():
                raise ValueError(f"shift {z} is not followed by its conjugate")
            pairs.append((z, z.conjugate()))
            i += 2
            continue
        reals.append(z)
        if len(reals) == 2:
            pairs.append((reals[0], reals[1]))
            reals = []
        i += 1
    return pairs


def introduce_bulges(h: np.ndarray, shifts: Sequence[complex], ilo: int = 0, ihi: Optional[int] = None,
                     q: Optional[np.ndarray] = None) -> BulgeChain:
    """Introduce one bulge per shift pair near ``ilo``, 3 columns apart.

    Applies the transformations to the full matrix ``h`` (and ``q``) and
    returns the chain positioned right after the last introduction.
    """
    ihi = h.shape[0] - 1 if ihi is None else ihi
    if len(shifts) < 2:
        raise ValueError("at least two shifts are required")
    chain = BulgeChain(make_pairs(shifts), ilo, ihi)
    t_end = 3 * (chain.count - 1) + 1
    _chain_steps(chain, h, 0, 0, t_end, 0, h.shape[1], q)
    chain.step = t_end
    return chain


def chase_bulges(h: np.ndarray, chain: BulgeChain, window: Optional[int] = None, q: Optional[np.ndarray] = None) -> None:
    """Finish chasing ``chain`` off the bottom of its active block.

    With ``window`` given, the chase runs window by window with accumulated
    off-diagonal updates; without it, reflector by reflector.
    """
    if chain.count == 0:
        return
    if window is None:
        _chain_steps(chain, h, 0, chain.step, chain.last_step + 1, 0, h.shape[1], q)
    else:
        for a, b, t0, t1 in plan_chain_windows(chain, window, chain.step):
            u = np.eye(b - a)
            win = h[a:b, a:b]
            _chain_steps(chain, win, a, t0, t1, a, b, u)
            h[a:b, b:] = u.T @ h[a:b, b:]
            h[:a, a:b] = h[:a, a:b] @ u
            if q is not None:
                q[:, a:b] = q[:, a:b] @ u
    chain.step = chain.last_step + 1


def _fits(chain: BulgeChain, t: int, a: int, b: int) -> bool:
    for j in chain.active(t):
        k = chain.position(j, t)
        if max(k, chain.ilo) < a or min(k + 4, chain.ihi) > b - 1:
            return False
    return True


def plan_chain_windows(chain: BulgeChain, window: int, t_start: int = 0) -> List[Tuple[int, int, int, int]]:
    """Windows ``(a, b, t0, t1)``: steps ``t0..t1-1`` run inside ``[a, b)``."""
    plan = []
    t = t_start
    last = chain.last_step
    act = chain.active(t)
    a = chain.ilo if not act else max(chain.ilo, min(chain.position(j, t) for j in act))
    while t <= last:
        b = min(a + window, chain.ihi + 1)
        t0 = t
        while t <= last and _fits(chain, t, a, b):
            t += 1
        if t == t0:
            raise ValueError(f"chase window of size {window} too small for {chain.count} bulges")
        plan.append((a, b, t0, t))
        act = chain.active(t)
        if act:
            a = max(chain.ilo, min(chain.position(j, t) for j in act))
    return plan


def group_size(window: int) -> int:
    return max(1, (window - 4) // 6)


def insert_chase(graph: TaskGraph, h: TiledMatrix, z: Optional[TiledMatrix], pairs, ilo: int, ihi: int,
                 window: int) -> List[BulgeChain]:
    chains = []
    g = group_size(window)
    hd = h.data
    for first in range(0, len(pairs), g):
        chain = BulgeChain(list(pairs[first:first + g]), ilo, ihi)
        chains.append(chain)
        for wi, (a, b, t0, t1) in enumerate(plan_chain_windows(chain, window)):
            ubuf = graph.buffer("chase.U")

            def task(chain=chain, a=a, b=b, t0=t0, t1=t1, ubuf=ubuf):
                u = np.eye(b - a)
                _chain_steps(chain, hd[a:b, a:b], a, t0, t1, a, b, u)
                ubuf.value = u

            tiles = h.tiles_in(a, b, a, b)
            graph.insert(task, reads=tiles, writes=tiles + [ubuf], priority=CRITICAL, label=f"chase.W[{first}:{a}]")
            insert_window_updates(graph, h, z, a, b, ubuf, f"chase[{first}:{a}]")
    return chains


# ---------------------------------------------------------------------------
# parameters


def _round_even(x: float) -> int:
    return 2 * int(round(x / 2.0))


def shift_count(nh: int) -> int:
    return min(64, max(4, _round_even(nh / 16.0)))


def aed_window_size(m: int, nh: int) -> int:
    return max(2, min(nh - 1, (3 * m) // 2))


def _exceptional_shifts(hd: np.ndarray, ilo: int, ihi: int, m: int) -> List[complex]:
    out = []
    i = ihi
    while len(out) < m and i - 2 >= ilo:
        ss = abs(hd[i, i - 1]) + abs(hd[i - 1, i - 2])
        aa = 0.75 * ss + hd[i, i]
        _, _, eigs = standardize_2x2([[aa, ss], [-0.4375 * ss, aa]])
        out.extend(eigs)
        i -= 2
    return out


def select_shift_pairs(shifts: Sequence[complex], m: int, hd: np.ndarray, ilo: int, ihi: int):
    """Pick up to ``m/2`` shift pairs, preferring the bottom of the list."""
    pairs: List[Tuple[complex, complex]] = []
    reals: List[complex] = []
    i = len(shifts) - 1
    while i >= 0 and len(pairs) < m // 2:
        z = complex(shifts[i])
        if z.imag != 0.0:
            j = i - 1
            pairs.append((complex(shifts[j]) if j >= 0 else z.conjugate(), z))
            i -= 2
            continue
        reals.append(z)
        if len(reals) == 2:
            pairs.append((reals[0], reals[1]))
            reals = []
        i -= 1
    pairs = [(a, b) if b.imag == 0.0 or (a.imag != 0.0 and a == b.conjugate()) else (b.conjugate(), b)
             for a, b in pairs]
    if not pairs:
        s1, s2 = shifts_from_2x2(hd[ihi - 1, ihi - 1], hd[ihi - 1, ihi], hd[ihi, ihi - 1], hd[ihi, ihi],
                                 collapse_real=False)
        pairs = [(s1, s2)]
    pairs.reverse()
    return pairs


def find_ilo(hd: np.ndarray, ihi: int) -> int:
    n = hd.shape[0]
    smlnum = SAFMIN * (n / EPS)
    k = ihi
    while k > 0 and not negligible_subdiag(hd, k, 0, ihi, smlnum):
        k -= 1
    if k > 0:
        hd[k, k - 1] = 0.0
    return k


# ---------------------------------------------------------------------------
# driver


def _finalize(s: TiledMatrix, z: TiledMatrix) -> List[complex]:
    sd = s.data
    n = s.rows
    for c in range(n - 2):
        sd[c + 2:, c] = 0.0
    k = 0
    eigs: List[complex] = []
    while k < n:
        if k + 1 < n and sd[k + 1, k] != 0.0:
            a, b, c, d = sd[k, k], sd[k, k + 1], sd[k + 1, k], sd[k + 1, k + 1]
            if not (a == d and b * c < 0.0):
                apply_standardization(sd, k, z.data)
            if sd[k + 1, k] == 0.0:
                continue
            eigs.extend(block_eigenvalues(sd, k, 2))
            k += 2
        else:
            eigs.append(complex(sd[k, k], 0.0))
            k += 1
    return eigs


def schur_reduce(h: TiledMatrix, q: Optional[TiledMatrix] = None, options: Optional[SchurOptions] = None,
                 engine: Optional[Engine] = None) -> SchurDecomposition:
    """Reduce an upper Hessenberg matrix to real Schur form ``H = Q2 S Q2^T``.

    If ``q`` is given the result carries ``q @ Q2`` instead of ``Q2``.
    Neither input is modified.
    """
    opts = options or SchurOptions()
    engine = engine or Engine()
    n = h.rows
    if h.rows != h.cols:
        raise ValueError("matrix must be square")
    s = h.copy()
    z = q.copy() if q is not None else identity(n, h.tile_size)
    sd = s.data
    for c in range(n - 2):
        sd[c + 2:, c] = 0.0
    limit = opts.max_iterations if opts.max_iterations is not None else 30 * max(n, 1)
    chase_window = opts.chase_window or max(16, h.tile_size)
    small = max(opts.small_threshold, 2)
    iterations = aed_steps = sweeps = 0
    stagnant = 0
    ihi = n - 1
    ilo = 0
    pending = None
    retry_w = None

    def fail(msg):
        # only the converged trailing part is in Schur form
        eigs = []
        for k, size in block_starts(sd, ihi + 1, n):
            eigs.extend(block_eigenvalues(sd, k, size))
        raise ConvergenceError(msg, SchurDecomposition(s, z, eigs, iterations, aed_steps, sweeps), n - 1 - ihi)

    while ihi >= 0:
        if pending is None:
            ilo = find_ilo(sd, ihi)
            nh = ihi - ilo + 1
            if nh <= small:
                if nh > 1:
                    graph = TaskGraph(s, z)
                    ok = insert_block_solve(graph, s, z, ilo, ihi)
                    engine.run(graph)
                    if not ok.value:
                        fail(f"small block [{ilo}, {ihi}] did not converge")
                ihi = ilo - 1
                continue
        if iterations >= limit:
            fail(f"iteration limit {limit} reached")
        iterations += 1
        nh = ihi - ilo + 1
        m = opts.shifts or shift_count(n)
        w = retry_w or opts.aed_window or aed_window_size(m, nh)
        w = max(2, min(w, nh))
        graph = TaskGraph(s, z)
        if pending is not None:
            p_ilo, p_ihi, pairs = pending
            insert_chase(graph, s, z, pairs, p_ilo, p_ihi, chase_window)
            sweeps += 1
        res = insert_aed(graph, s, z, ilo, ihi, w, opts.deflation, small)
        aed_steps += 1
        engine.run(graph)
        pending = None
        r = res.value
        if not r.converged:
            if retry_w is not None:
                fail(f"AED window of size {w} did not converge")
            retry_w = max(2, w // 2)
            continue
        retry_w = None
        ihi -= r.deflated
        stagnant = 0 if r.deflated else stagnant + 1
        if ihi < 0:
            break
        ilo = find_ilo(sd, ihi)
        nh = ihi - ilo + 1
        if nh <= small:
            continue
        if r.deflated == 0 or 100 * r.deflated <= NIBBLE * w:
            m = opts.shifts or shift_count(n)
            undeflated = [z_ for z_ in r.shifts]
            if stagnant and stagnant % EXCEPTIONAL_AFTER == 0:
                undeflated = _exceptional_shifts(sd, ilo, ihi, m)
            pairs = select_shift_pairs(undeflated, m, sd, ilo, ihi)
            if nh >= 3:
                pending = (ilo, ihi, pairs)
    eigs = _finalize(s, z)
    return SchurDecomposition(s, z, eigs, iterations, aed_steps, sweeps)
