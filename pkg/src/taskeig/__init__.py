"""Task-parallel dense nonsymmetric eigensolver.

Phases: Hessenberg reduction, multishift QR with aggressive early
deflation, eigenvalue reordering and overflow-free eigenvectors, all built
on a tiled matrix layout and a small dependency-tracking task runtime.
"""
from .eigvec import EigenvectorSet, backtransform, solve_eigenvectors
from .hessenberg import hessenberg_reduce
from .reorder import Selection, reorder_schur, select_eigenvalues
from .runtime import Engine, TaskGraph
from .schur import ConvergenceError, SchurDecomposition, SchurOptions, schur_reduce
from .tiled import TiledMatrix, default_tile_size, from_dense, identity, to_dense

__all__ = [
    "Engine", "TaskGraph", "TiledMatrix", "default_tile_size", "from_dense", "identity", "to_dense",
    "hessenberg_reduce", "schur_reduce", "SchurOptions", "SchurDecomposition", "ConvergenceError",
    "Selection", "select_eigenvalues", "reorder_schur", "EigenvectorSet", "solve_eigenvectors", "backtransform",
    "eig",
]


def eig(a, tile_size=None, workers=None, deflation="norm-stable"):
    """Eigenvalues and right eigenvectors of a dense real matrix.

    Returns ``(eigenvalues, vectors)`` with complex eigenvectors as columns.
    """
    import numpy as np

    engine = Engine(workers)
    m = from_dense(np.asarray(a, dtype=np.float64), tile_size=tile_size)
    h, q = hessenberg_reduce(m, engine=engine)
    dec = schur_reduce(h, q, SchurOptions(deflation=deflation), engine)
    ys = backtransform(solve_eigenvectors(dec.S, None, engine), dec.Q, engine)
    vals = []
    cols = []
    for i, lam in enumerate(ys.eigenvalues):
        v = ys.vector(i)
        vals.append(lam)
        cols.append(v)
        if lam.imag != 0.0:
            vals.append(lam.conjugate())
            cols.append(v.conjugate())
    return np.array(vals), np.column_stack(cols) if cols else np.zeros((m.rows, 0), dtype=complex)
