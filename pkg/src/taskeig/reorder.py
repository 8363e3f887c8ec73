"""Reordering of a real Schur form.

Selected diagonal blocks are moved to the top-left corner. The selected
blocks are split into groups that fit in half a window; each group bubbles
upward through a chain of overlapping diagonal windows. A window task
performs the adjacent swaps for its group and accumulates them, and the
rest of the matrix is updated by tiled left/right tasks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .kernels import block_eigenvalues, block_starts, swap_adjacent_blocks
from .runtime import CRITICAL, Engine, TaskGraph
from .schur import insert_window_updates
from .tiled import TiledMatrix

PREDICATES = ("left-half-plane", "inside-unit-disk", "largest-magnitude-k")
FAILED = -2
NONE = -1


class ReorderError(RuntimeError):
    pass


@dataclass(frozen=True)
class Selection:
    """One flag per diagonal block; a 2x2 block carries one flag for its pair."""

    blocks: Tuple[Tuple[int, int], ...]
    flags: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.blocks) != len(self.flags):
            raise ValueError("need exactly one flag per diagonal block")

    @property
    def count(self) -> int:
        return sum(self.flags)

    def row_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        for (k, size), f in zip(self.blocks, self.flags):
            mask[k:k + size] = f
        return mask

    def selected_rows(self) -> int:
        return sum(size for (_, size), f in zip(self.blocks, self.flags) if f)


def select_eigenvalues(s, predicate=None, flags: Optional[Sequence[bool]] = None, fraction: Optional[float] = None,
                       seed: int = 0, k: Optional[int] = None) -> Selection:
    """Build a :class:`Selection` for the Schur form ``s``.

    Exactly one of ``predicate`` (callable on an eigenvalue or one of
    :data:`PREDICATES`), ``flags`` (per block) or ``fraction`` (seeded
    random choice of ``floor(fraction * blocks)`` blocks) is used.
    """
    t = s.data if isinstance(s, TiledMatrix) else np.asarray(s)
    blocks = tuple(block_starts(t))
    nb = len(blocks)
    given = sum(x is not None for x in (predicate, flags, fraction))
    if given != 1:
        raise ValueError("give exactly one of predicate, flags, fraction")
    if flags is not None:
        flags = tuple(bool(f) for f in flags)
        if len(flags) != nb:
            raise ValueError(f"expected {nb} flags, got {len(flags)}")
        return Selection(blocks, flags)
    if fraction is not None:
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        count = int(np.floor(fraction * nb + 1e-9))
        rng = np.random.Generator(np.random.Philox(seed))
        chosen = set(rng.choice(nb, size=count, replace=False).tolist()) if count else set()
        return Selection(blocks, tuple(i in chosen for i in range(nb)))
    eigs = [block_eigenvalues(t, kk, size) for kk, size in blocks]
    if isinstance(predicate, str):
        if predicate == "left-half-plane":
            predicate = lambda z: z.real < 0.0
        elif predicate == "inside-unit-disk":
            predicate = lambda z: abs(z) < 1.0
        elif predicate == "largest-magnitude-k":
            if k is None:
                raise ValueError("largest-magnitude-k needs k")
            order = sorted(range(nb), key=lambda i: (-abs(eigs[i][0]), i))[:k]
            return Selection(blocks, tuple(i in set(order) for i in range(nb)))
        else:
            raise ValueError(f"unknown predicate {predicate!r}")
    out = []
    for ev in eigs:
        vals = {bool(predicate(z)) for z in ev}
        if len(vals) != 1:
            raise ValueError(f"predicate splits the conjugate pair {ev}")
        out.append(vals.pop())
    return Selection(blocks, tuple(out))


# ---------------------------------------------------------------------------
# window kernel


def window_reorder_task(t: np.ndarray, ids: np.ndarray, group: int, top: int = 0,
                        origin: Optional[np.ndarray] = None):
    """Move the blocks tagged ``group`` in ``ids`` to row ``top`` of window ``t``.

    ``t``, ``ids`` and ``origin`` are updated in place. Returns the
    accumulated orthogonal factor (``None`` if nothing moved) and the list
    of rows where a swap was rejected.
    """
    w = t.shape[0]
    u = np.eye(w)
    moved = False
    rejected = []
    tp = top
    k = top
    while k < w:
        size = 2 if k + 1 < w and t[k + 1, k] != 0.0 else 1
        span = size
        if ids[k] == group:
            pos = k
            while pos > tp:
                ps = 2 if pos - 2 >= tp and t[pos - 1, pos - 2] != 0.0 else 1
                if not swap_adjacent_blocks(t, pos - ps, ps, size, u):
                    rejected.append(pos)
                    ids[pos:pos + size] = FAILED
                    break
                moved = True
                for arr in (ids, origin):
                    if arr is not None:
                        arr[pos - ps:pos + size] = np.concatenate([arr[pos:pos + size], arr[pos - ps:pos]])
                pos -= ps
                size = 2 if pos + 1 < w and t[pos + 1, pos] != 0.0 else 1
            tp = pos + size
            while tp < k + span and ids[tp] == group:
                tp += 1
        k += span
    return (u if moved else None), rejected


# ---------------------------------------------------------------------------
# planning


@dataclass
class WindowSpec:
    start: int
    end: int
    group: int
    top: int


@dataclass
class ReorderPlan:
    windows: List[WindowSpec]
    groups: List[List[int]]
    window: int


def plan_reorder(sel: Selection, window: int) -> ReorderPlan:
    """Static chain of windows for moving the selection, group by group."""
    window = max(window, 6)
    half = window // 2
    ilst = 0
    todo = []
    for bi, ((k, size), f) in enumerate(zip(sel.blocks, sel.flags)):
        if not f:
            continue
        if k == ilst and not todo:
            ilst += size
            continue
        todo.append(bi)
    groups: List[List[int]] = []
    cur: List[int] = []
    span = 0
    for bi in todo:
        size = sel.blocks[bi][1]
        if cur and span + size > half:
            groups.append(cur)
            cur, span = [], 0
        cur.append(bi)
        span += size
    if cur:
        groups.append(cur)
    windows = []
    for gi, grp in enumerate(groups):
        span = sum(sel.blocks[bi][1] for bi in grp)
        last_k, last_size = sel.blocks[grp[-1]]
        b = last_k + last_size
        while True:
            a = max(ilst, b - window)
            windows.append(WindowSpec(a, b, gi, ilst))
            if a <= ilst:
                break
            b = a + span + 1
        ilst += span
    return ReorderPlan(windows, groups, window)


# ---------------------------------------------------------------------------
# driver


@dataclass
class ReorderResult:
    S: TiledMatrix
    Q: Optional[TiledMatrix]
    permutation: List[Tuple[int, int]]
    rejected: List[Tuple[int, int]]
    selection: Selection
    plan: ReorderPlan

    @property
    def status(self) -> str:
        return "warning" if self.rejected else "ok"


def insert_reorder_tasks(graph: TaskGraph, s: TiledMatrix, q: Optional[TiledMatrix], plan: ReorderPlan,
                         ids: np.ndarray, origin: np.ndarray, rejected: list) -> None:
    n = s.rows
    sd = s.data
    for wi, spec in enumerate(plan.windows):
        a, b = spec.start, spec.end
        ubuf = graph.buffer("reorder.U")

        def task(a=a, b=b, spec=spec, ubuf=ubuf):
            a_eff = a + 1 if a > 0 and sd[a, a - 1] != 0.0 else a
            b_eff = b - 1 if b < n and sd[b, b - 1] != 0.0 else b
            top = max(a_eff, spec.top)
            if b_eff - a_eff < 2:
                ubuf.value = None
                return
            u, rej = window_reorder_task(sd[a_eff:b_eff, a_eff:b_eff], ids[a_eff:b_eff], spec.group,
                                         top - a_eff, origin[a_eff:b_eff])
            rejected.extend((int(origin[a_eff + r]), a_eff + r) for r in rej)
            if u is None:
                ubuf.value = None
                return
            # the rows/cols trimmed off the window still need the transform
            if a_eff > a:
                sd[a:a_eff, a_eff:b_eff] = sd[a:a_eff, a_eff:b_eff] @ u
            if b_eff < b:
                sd[a_eff:b_eff, b_eff:b] = u.T @ sd[a_eff:b_eff, b_eff:b]
            full = np.eye(b - a)
            full[a_eff - a:b_eff - a, a_eff - a:b_eff - a] = u
            ubuf.value = full

        reads = s.tiles_in(a, b, a, b)
        if a > 0:
            reads = reads + s.tiles_in(a, a + 1, a - 1, a)
        if b < n:
            reads = reads + s.tiles_in(b, b + 1, b - 1, b)
        graph.insert(task, reads=reads, writes=s.tiles_in(a, b, a, b) + [ubuf], priority=CRITICAL,
                     label=f"reorder.W[{wi}:{a}]")
        insert_window_updates(graph, s, q, a, b, ubuf, f"reorder[{wi}]")


def reorder_schur(s: TiledMatrix, q: Optional[TiledMatrix], sel: Selection, engine: Optional[Engine] = None,
                  window: Optional[int] = None, strict: bool = False) -> ReorderResult:
    """Move the selected eigenvalues of ``S`` to its leading diagonal blocks.

    Returns copies ``S_hat`` and ``Q Q3`` (``Q3`` when ``q`` is None is not
    formed). The permutation record maps original block indices to final
    block indices; rejected swaps leave blocks in place and are listed.
    """
    n = s.rows
    if tuple(block_starts(s.data)) != sel.blocks:
        raise ValueError("selection does not match the block structure of S")
    out = s.copy()
    qo = q.copy() if q is not None else None
    plan = plan_reorder(sel, window or s.tile_size)
    ids = np.full(n, NONE, dtype=np.int64)
    for gi, grp in enumerate(plan.groups):
        for bi in grp:
            k, size = sel.blocks[bi]
            ids[k:k + size] = gi
    origin = np.empty(n, dtype=np.int64)
    for bi, (k, size) in enumerate(sel.blocks):
        origin[k:k + size] = bi
    rejected: List[Tuple[int, int]] = []
    if plan.windows:
        graph = TaskGraph(out, *([qo] if qo is not None else []))
        insert_reorder_tasks(graph, out, qo, plan, ids, origin, rejected)
        (engine or Engine()).run(graph)
    if rejected and strict:
        raise ReorderError(f"{len(rejected)} swaps rejected")
    final_blocks = tuple(block_starts(out.data))
    permutation = [(int(origin[k]), fi) for fi, (k, _) in enumerate(final_blocks)]
    moved_flags = [bool(sel.flags[o]) for o, _ in permutation]
    perm_sorted = sorted(permutation)
    return ReorderResult(out, qo, perm_sorted, rejected, Selection(final_blocks, tuple(moved_flags)), plan)
