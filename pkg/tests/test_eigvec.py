from fractions import Fraction

import numpy as np
import pytest

from taskeig.eigvec import (AugmentedTile, ScalingFactor, backtransform, consistent_scaling, linear_update,
                            normalize_columns, protect_update, segments_for, solve_eigenvectors)
from taskeig.generators import ProblemSpec, generate
from taskeig.kernels import OMEGA
from taskeig.reorder import select_eigenvalues
from taskeig.runtime import Engine
from taskeig.tiled import from_dense
from taskeig.verify import eigenpair_residual, unprotected_backsubstitution
from conftest import EPS, random_matrix, schur_form


def _inf(a):
    return float(np.max(np.sum(np.abs(a), axis=1)))


def _schur_residual(s, lam, y):
    return np.max(np.abs(s @ y - lam * y)) / (_inf(s) * np.max(np.abs(y)))


def test_scaling_factor_range():
    assert ScalingFactor(-(2 ** 31) + 1).value == 0.0  # below double range, still a valid factor
    assert (ScalingFactor(3) * ScalingFactor(-5)).exponent == -2
    with pytest.raises(ValueError):
        ScalingFactor(-(2 ** 63))


def test_protect_update_benign_needs_nothing():
    x = AugmentedTile(random_matrix(4, 1, 3) * 0.1, [0, 0, 0])
    y = AugmentedTile(random_matrix(4, 2, 3) * 0.1, [0, 0, 0])
    assert list(protect_update(x, y, random_matrix(4, 3) * 0.1)) == [0, 0, 0]


def test_protect_update_large_operator():
    t = np.full((3, 3), 1e300 / 3)
    x = AugmentedTile(np.full((3, 1), 1e10), [0])
    y = AugmentedTile(np.ones((3, 1)), [0])
    g = protect_update(x, y, t)
    assert g[0] < 0
    bound = 2.0 ** float(g[0]) + (_inf(t) * 2.0 ** float(g[0])) * 1e10
    assert bound <= OMEGA


def test_protect_update_min_exponent_rule():
    x = AugmentedTile(np.ones((2, 1)), [-3])
    y = AugmentedTile(np.ones((2, 1)), [0])
    assert protect_update(x, y, np.eye(2))[0] == -3


def test_linear_update_zero_operator_copies():
    y = AugmentedTile(random_matrix(3, 4, 2), [5, -2])
    z = linear_update(AugmentedTile(np.ones((3, 2)), [0, 0]), y, np.zeros((3, 3)))
    assert z.X.tobytes() == y.X.tobytes() and list(z.alpha) == [5, -2]


def test_linear_update_unscaled_is_plain():
    x = AugmentedTile(random_matrix(5, 5, 2), [0, 0])
    y = AugmentedTile(random_matrix(4, 6, 2), [0, 0])
    t = random_matrix(4, 7, 5)
    z = linear_update(x, y, t)
    assert list(z.alpha) == [0, 0]
    np.testing.assert_allclose(z.X, y.X - t @ x.X, atol=8 * EPS)


def test_linear_update_exact_powers_of_two():
    x = AugmentedTile(np.array([[1.0], [0.0]]), [-1])
    y = AugmentedTile(np.array([[1.0], [0.0]]), [0])
    z = linear_update(x, y, np.eye(2))
    gamma = int(z.alpha[0])
    assert gamma == -1
    # exact rational recomputation of y/beta - T x/alpha
    want = Fraction(1) - Fraction(1) / Fraction(2) ** -1
    got = Fraction(z.X[0, 0]) / Fraction(2) ** gamma
    assert got == want and z.X[1, 0] == 0.0


def test_consistent_scaling_equal_exponents_is_noop():
    a = AugmentedTile(random_matrix(3, 8, 2), [4, -1])
    b = AugmentedTile(random_matrix(2, 9, 2), [4, -1])
    x, common, flagged = consistent_scaling([a, b])
    assert x.tobytes() == np.vstack([a.X, b.X]).tobytes()
    assert list(common) == [4, -1] and not flagged.any()


def test_consistent_scaling_exact_quarter():
    a = AugmentedTile(random_matrix(3, 10, 1), [0])
    b = AugmentedTile(random_matrix(3, 11, 1), [-2])
    x, common, flagged = consistent_scaling([a, b])
    assert common[0] == -2 and not flagged[0]
    assert x[:3].tobytes() == (a.X * 0.25).tobytes()
    assert x[3:].tobytes() == b.X.tobytes()


def test_consistent_scaling_far_exponents():
    a = AugmentedTile(np.full((2, 1), 0.9), [0])
    # 2**-600 keeps 0.9 normal; 2**-1050 does not
    x, _, flagged = consistent_scaling([a, AugmentedTile(np.ones((2, 1)), [-600])])
    assert not flagged[0] and np.all(x != 0.0)
    _, _, flagged = consistent_scaling([a, AugmentedTile(np.ones((2, 1)), [-1050])])
    assert flagged[0]


def test_normalization_conventions():
    x = np.array([[0.5, 1.0, 0.0], [-2.0, 0.0, 3.0], [2.0, 4.0, 4.0]])
    out = normalize_columns(x, [(0,), (1, 2)])
    np.testing.assert_array_equal(out[:, 0], [-0.25, 1.0, -1.0])
    mod = np.hypot(out[:, 1], out[:, 2])
    assert abs(mod.max() - 1.0) <= 2 * EPS
    assert not np.any(np.signbit(out) & (out == 0.0))


def test_segments_never_cut_pairs():
    s = np.diag(np.ones(10))
    s[4, 3] = -1.0
    s[3, 4] = 1.0
    segs = segments_for(s, 4)
    assert segs == [(0, 5), (5, 8), (8, 10)]


def test_diagonal_gives_unit_vectors():
    y = solve_eigenvectors(from_dense(np.diag([1.0, 2.0, 3.0]), tile_size=2))
    np.testing.assert_array_equal(y.vectors, np.eye(3))
    for i, lam in enumerate(y.eigenvalues):
        v = y.vector(i)
        assert np.all(np.diag([1.0, 2.0, 3.0]) @ v - lam * v == 0)


def test_rotation_block_pair():
    s = np.array([[0.0, 1.0], [-1.0, 0.0]])
    y = solve_eigenvectors(from_dense(s, tile_size=2))
    v = y.vector(0)
    assert y.eigenvalues == [1j] and y.columns == [(0, 1)]
    np.testing.assert_allclose(v, [1.0, 1j])
    assert np.max(np.abs(s @ v - 1j * v)) <= 4 * EPS


@pytest.mark.parametrize("n,ts", [(7, 2), (60, 16), (150, 32)])
def test_residuals_in_schur_and_original_basis(n, ts):
    a, s, q = schur_form(n, 70 + n, ts)
    ys = solve_eigenvectors(from_dense(s, tile_size=ts))
    assert np.all(np.isfinite(ys.vectors)) and not any(ys.flagged)
    assert len(ys.columns) == len(ys.eigenvalues)
    assert ys.vectors.shape[1] == sum(len(c) for c in ys.columns)
    for i, lam in enumerate(ys.eigenvalues):
        assert _schur_residual(s, lam, ys.vector(i)) <= 64 * n * EPS
        vi = ys.vector(i)
        assert abs(np.max(np.abs(vi)) - 1.0) <= 4 * EPS
    xs = backtransform(ys, from_dense(q, tile_size=ts))
    for i, lam in enumerate(xs.eigenvalues):
        assert eigenpair_residual(a, lam, xs.vector(i)) <= 128 * n * EPS


def test_protected_equals_plain_on_benign_input():
    _, s, _ = schur_form(100, 3, 16)
    m = from_dense(s, tile_size=16)
    assert solve_eigenvectors(m).vectors.tobytes() == solve_eigenvectors(m, protect=False).vectors.tobytes()


def test_selection_and_index_lists_agree():
    _, s, _ = schur_form(60, 8, 16)
    m = from_dense(s, tile_size=16)
    sel = select_eigenvalues(s, fraction=0.3, seed=5)
    by_sel = solve_eigenvectors(m, sel)
    idx = [i for i, f in enumerate(sel.flags) if f]
    by_idx = solve_eigenvectors(m, idx)
    assert by_sel.vectors.tobytes() == by_idx.vectors.tobytes()
    full = solve_eigenvectors(m)
    # columns agree with the full solve up to rounding
    pos = {b: i for i, b in enumerate(full.blocks)}
    for i, b in enumerate(by_sel.blocks):
        np.testing.assert_allclose(by_sel.vector(i), full.vector(pos[b]), rtol=0, atol=1e-13)


def test_worker_determinism():
    _, s, _ = schur_form(90, 6, 16)
    ref = solve_eigenvectors(from_dense(s, tile_size=16), engine=Engine(1)).vectors
    for w in (2, 8):
        got = solve_eigenvectors(from_dense(s, tile_size=16), engine=Engine(w)).vectors
        assert got.tobytes() == ref.tobytes()


def test_overflow_stress():
    n = 512
    s, _ = generate(ProblemSpec("overflow-stress", n))
    with np.errstate(all="ignore"):
        naive = unprotected_backsubstitution(s, n - 1)
    assert not np.all(np.isfinite(naive))
    m = from_dense(s, tile_size=64)
    raw = solve_eigenvectors(m, [n - 1], normalize=False)
    assert np.all(np.isfinite(raw.vectors)) and raw.exponents[0] < 0
    ys = solve_eigenvectors(m, [n - 1])
    y = ys.vector(0)
    assert np.all(np.isfinite(y))
    assert _schur_residual(s, ys.eigenvalues[0], y) <= 1e-10
    with np.errstate(all="ignore"):
        plain = solve_eigenvectors(m, [n - 1], protect=False, normalize=False)
    assert not np.all(np.isfinite(plain.vectors))


def test_backtransform_identity_is_bitwise():
    _, s, _ = schur_form(40, 2, 16)
    ys = solve_eigenvectors(from_dense(s, tile_size=16))
    xs = backtransform(ys, from_dense(np.eye(40), tile_size=16))
    assert xs.vectors.tobytes() == ys.vectors.tobytes()


def test_backtransform_known_spectrum():
    rng = np.random.default_rng(0)
    q0 = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    a = q0 @ np.diag([1.0, 2.0, 3.0]) @ q0.T
    ys = solve_eigenvectors(from_dense(np.diag([1.0, 2.0, 3.0]), tile_size=2))
    xs = backtransform(ys, q0)
    for i, lam in enumerate(xs.eigenvalues):
        x = xs.vector(i)
        assert np.max(np.abs(a @ x - lam * x)) <= 1e-12


def test_backtransform_pair_identities():
    a, s, q = schur_form(30, 12, 8)
    xs = backtransform(solve_eigenvectors(from_dense(s, tile_size=8)), q)
    pairs = [(lam, c) for lam, c in zip(xs.eigenvalues, xs.columns) if len(c) == 2]
    assert pairs
    tol = 128 * 30 * EPS * _inf(a)
    for lam, (cr, ci) in pairs:
        xr, xi = xs.vectors[:, cr], xs.vectors[:, ci]
        scale = max(np.max(np.abs(xr)), np.max(np.abs(xi)))
        assert np.max(np.abs(a @ xr - (lam.real * xr - lam.imag * xi))) <= tol * scale
        assert np.max(np.abs(a @ xi - (lam.imag * xr + lam.real * xi))) <= tol * scale


def test_backtransform_dimension_mismatch():
    ys = solve_eigenvectors(from_dense(np.diag([1.0, 2.0]), tile_size=2))
    with pytest.raises(ValueError):
        backtransform(ys, np.eye(3))


def test_sidecar_lists_columns():
    s = np.array([[2.0, 0.1, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    ys = solve_eigenvectors(from_dense(s, tile_size=2))
    side = ys.sidecar()
    assert side == [{"eigenvalue": [2.0, 0.0], "columns": [0], "flagged": False},
                    {"eigenvalue": [0.0, 1.0], "columns": [1, 2], "flagged": False}]
