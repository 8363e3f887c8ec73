import numpy as np
import pytest

from taskeig import kernels as K
from taskeig.reorder import (ReorderError, plan_reorder, reorder_schur, select_eigenvalues,
                             window_reorder_task, NONE)
from taskeig.runtime import Engine
from taskeig.tiled import from_dense, to_dense
from taskeig.verify import charpoly_roots, match_eigenvalues
from conftest import EPS, schur_form


def _reorder(s, sel, ts=16, q=None, workers=1, **kw):
    n = s.shape[0]
    qm = from_dense(np.eye(n) if q is None else q, tile_size=ts)
    res = reorder_schur(from_dense(s, tile_size=ts), qm, sel, Engine(workers), **kw)
    return res, to_dense(res.S), to_dense(res.Q)


def _selected_values(s, sel):
    out = []
    for (k, size), f in zip(sel.blocks, sel.flags):
        if f:
            out.extend(K.block_eigenvalues(s, k, size))
    return out


def test_select_all():
    s = np.triu(np.arange(16.0).reshape(4, 4))
    sel = select_eigenvalues(s, predicate=lambda z: True)
    assert all(sel.flags) and sel.count == 4


def test_select_by_real_part():
    sel = select_eigenvalues(np.diag([-1.0, 2.0]), predicate=lambda z: z.real > 0)
    assert sel.flags == (False, True)


def test_fraction_counts_and_is_seeded():
    s = np.diag(np.arange(1.0, 101.0))
    a = select_eigenvalues(s, fraction=0.35, seed=7)
    b = select_eigenvalues(s, fraction=0.35, seed=7)
    c = select_eigenvalues(s, fraction=0.35, seed=8)
    assert a.count == 35 and a == b and a != c


def test_pair_is_one_flag_and_cannot_be_split():
    s = np.array([[0.0, 1.0, 0.2], [-1.0, 0.0, 0.3], [0.0, 0.0, 2.0]])
    sel = select_eigenvalues(s, predicate="left-half-plane")
    assert sel.blocks == ((0, 2), (2, 1)) and sel.flags == (False, False)
    with pytest.raises(ValueError):
        select_eigenvalues(s, predicate=lambda z: z.imag > 0)


def test_named_predicates():
    s = np.diag([-0.5, 3.0, 0.2, -4.0])
    assert select_eigenvalues(s, predicate="inside-unit-disk").flags == (True, False, True, False)
    assert select_eigenvalues(s, predicate="largest-magnitude-k", k=2).flags == (False, True, False, True)
    with pytest.raises(ValueError):
        select_eigenvalues(s, predicate="largest-magnitude-k")
    with pytest.raises(ValueError):
        select_eigenvalues(s, predicate="nope")


def test_selection_arguments_exclusive():
    s = np.eye(3)
    with pytest.raises(ValueError):
        select_eigenvalues(s)
    with pytest.raises(ValueError):
        select_eigenvalues(s, flags=[True] * 3, fraction=0.5)
    with pytest.raises(ValueError):
        select_eigenvalues(s, flags=[True, False])


@pytest.mark.parametrize("which", ["none", "all"])
def test_trivial_selections_leave_s_bitwise(which):
    _, s, _ = schur_form(60, 1, 16)
    sel = select_eigenvalues(s, predicate=lambda z: which == "all")
    res, s2, q3 = _reorder(s, sel)
    assert s2.tobytes() == s.tobytes()
    np.testing.assert_array_equal(q3, np.eye(60))
    assert res.permutation == [(i, i) for i in range(len(sel.blocks))]


def test_diag_one_two_three_select_three():
    s = np.diag([1.0, 2.0, 3.0])
    sel = select_eigenvalues(s, flags=[False, False, True])
    res, s2, q3 = _reorder(s, sel, ts=4)
    np.testing.assert_allclose(np.diag(s2), [3.0, 1.0, 2.0], atol=1e-14)
    assert np.linalg.norm(s - q3 @ s2 @ q3.T) <= 1e-14
    assert np.linalg.norm(q3.T @ q3 - np.eye(3)) <= 1e-14
    assert np.allclose(np.abs(q3), np.abs(q3).round())
    assert res.permutation == [(0, 1), (1, 2), (2, 0)]


def test_window_task_already_ordered():
    t = np.triu(np.ones((4, 4))) + np.diag([1.0, 2.0, 3.0, 4.0])
    ids = np.array([0, 0, NONE, NONE])
    u, rej = window_reorder_task(t, ids, 0)
    assert u is None and rej == []


def test_window_task_single_swap():
    t = np.diag([1.0, 2.0])
    ids = np.array([NONE, 0])
    u, rej = window_reorder_task(t, ids, 0)
    assert rej == [] and abs(t[0, 0] - 2.0) <= 4 * EPS
    c, s_ = u[0, 0], u[1, 0]
    np.testing.assert_allclose(u, [[c, -s_], [s_, c]], atol=1e-15)


def test_window_task_mixed_blocks():
    t0 = np.array([[1.0, 0.3, 0.1, 0.2], [0.0, 0.5, 1.0, 0.4], [0.0, -2.0, 0.5, 0.6], [0.0, 0.0, 0.0, -3.0]])
    t = t0.copy()
    ids = np.array([NONE, NONE, NONE, 0])
    u, rej = window_reorder_task(t, ids, 0)
    assert rej == []
    assert abs(t[0, 0] + 3.0) <= 1e-12
    assert np.linalg.norm(u.T @ u - np.eye(4)) <= 16 * 4 * EPS
    np.testing.assert_allclose(u @ t @ u.T, t0, atol=1e-13)
    evs = K.schur_eigenvalues(t)
    assert match_eigenvalues(evs, charpoly_roots(t0))[0] <= 1e-12


@pytest.mark.parametrize("n,ts", [(100, 16), (200, 32)])
def test_random_selection_moves_to_front(n, ts):
    a, s, q = schur_form(n, n + 1, ts)
    sel = select_eigenvalues(s, fraction=0.35, seed=3)
    res, s2, q2 = _reorder(s, sel, ts, q=q)
    assert res.rejected == [] and res.status == "ok"
    k = sel.selected_rows()
    lead = K.schur_eigenvalues(s2[:k, :k])
    assert match_eigenvalues(lead, _selected_values(s, sel))[0] <= 1e-10
    assert match_eigenvalues(K.schur_eigenvalues(s2), K.schur_eigenvalues(s))[0] <= 1e-11 * np.linalg.norm(s)
    assert not s2[k, k - 1]
    assert np.linalg.norm(a - q2 @ s2 @ q2.T) / np.linalg.norm(a) <= 32 * n * EPS
    assert np.linalg.norm(q2.T @ q2 - np.eye(n)) <= 32 * n * EPS
    for kk, size in K.block_starts(s2):
        if size == 2:
            assert s2[kk, kk] == s2[kk + 1, kk + 1] and s2[kk, kk + 1] * s2[kk + 1, kk] < 0
    # selected blocks keep their relative order
    finals = sorted((f, o) for o, f in res.permutation if sel.flags[o])
    assert [o for _, o in finals] == sorted(o for _, o in finals)


def test_idempotent():
    _, s, _ = schur_form(80, 9, 16)
    sel = select_eigenvalues(s, fraction=0.35, seed=1)
    res, s2, _ = _reorder(s, sel)
    res2, s3, q3 = _reorder(s2, res.selection)
    assert s3.tobytes() == s2.tobytes()
    np.testing.assert_array_equal(q3, np.eye(80))


def test_worker_determinism():
    _, s, q = schur_form(90, 4, 16)
    sel = select_eigenvalues(s, fraction=0.35, seed=2)
    ref = _reorder(s, sel, q=q)
    for w in (2, 8):
        _, s2, q2 = _reorder(s, sel, q=q, workers=w)
        assert s2.tobytes() == ref[1].tobytes() and q2.tobytes() == ref[2].tobytes()


def test_plan_windows_overlap_and_graph_shape():
    _, s, _ = schur_form(100, 5, 16)
    sel = select_eigenvalues(s, fraction=0.35, seed=4)
    plan = plan_reorder(sel, 16)
    by_group = {}
    for wsp in plan.windows:
        by_group.setdefault(wsp.group, []).append(wsp)
    for ws in by_group.values():
        for w1, w2 in zip(ws, ws[1:]):
            assert w2.start < w2.end and w2.end > w1.start  # consecutive windows overlap
    from taskeig.runtime import TaskGraph
    from taskeig.reorder import insert_reorder_tasks
    m = from_dense(s, tile_size=16)
    g = TaskGraph(m)
    n = 100
    insert_reorder_tasks(g, m, None, plan, np.full(n, NONE), np.arange(n), [])
    wins = [t.id for t in g.tasks if t.label.startswith("reorder.W")]
    assert len(wins) == len(plan.windows)
    edges = g.edges
    wset = set(wins)
    succ = {}
    for x, y in edges:
        succ.setdefault(x, set()).add(y)

    def reaches(u, v):
        seen, stack = {u}, [u]
        while stack:
            for y in succ.get(stack.pop(), ()):
                if y == v:
                    return True
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    # windows of one chain are ordered through their shared tiles
    for (u, wu), (v, wv) in zip(zip(wins, plan.windows), zip(wins[1:], plan.windows[1:])):
        if wu.group == wv.group:
            assert reaches(u, v)
    for t in g.tasks:
        if ".L[" in t.label or ".R[" in t.label:
            assert g.predecessors(t.id) & wset


def test_rejected_swap_recorded_then_strict_raises():
    # two identical complex pairs cannot be swapped
    blk = np.array([[1.0, 2.0], [-2.0, 1.0]])
    s = np.zeros((4, 4))
    s[:2, :2] = blk
    s[2:, 2:] = blk
    s[:2, 2:] = 0.5
    sel = select_eigenvalues(s, flags=[False, True])
    res, s2, _ = _reorder(s, sel, ts=4)
    assert res.status == "warning" and len(res.rejected) == 1
    np.testing.assert_array_equal(s2, s)
    with pytest.raises(ReorderError):
        _reorder(s, sel, ts=4, strict=True)


def test_selection_must_match_blocks():
    s = np.diag([1.0, 2.0, 3.0])
    sel = select_eigenvalues(np.diag([1.0, 2.0]), flags=[True, False])
    with pytest.raises(ValueError):
        reorder_schur(from_dense(s, tile_size=2), None, sel)


def test_without_q():
    _, s, _ = schur_form(50, 6, 16)
    sel = select_eigenvalues(s, fraction=0.5, seed=0)
    res = reorder_schur(from_dense(s, tile_size=16), None, sel)
    assert res.Q is None and res.rejected == []
