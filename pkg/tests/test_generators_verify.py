import ast
import json
from pathlib import Path

import numpy as np
import pytest

import taskeig
from taskeig.generators import (KINDS, ProblemSpec, check_spectrum, generate, parse_spectrum, rng_for,
                                separated_spectrum, uniform)
from taskeig.verify import (VerificationReport, backward_error, charpoly, charpoly_roots, is_quasi_triangular,
                            match_eigenvalues, orthogonality, quasi_triangular_eigenvalues, reference_solve,
                            unprotected_backsubstitution, verify_decomposition)
from conftest import EPS


def test_philox_known_answer():
    # Random123 Philox4x64-10, key 0, counter 0 (numpy bumps the counter before use)
    bg = np.random.Philox(key=0, counter=2 ** 256 - 1)
    assert [int(x) for x in bg.random_raw(4)] == [
        0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]


def test_uniform_stream_is_pinned():
    first = int(np.random.Philox(key=0, counter=0).random_raw())
    assert uniform(rng_for(0), 1)[0] == 2.0 * ((first >> 11) * 2.0 ** -53) - 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_generation_is_deterministic(kind):
    a1, t1 = generate(ProblemSpec(kind, 10, seed=1))
    a2, t2 = generate(ProblemSpec(kind, 10, seed=1))
    assert a1.tobytes() == a2.tobytes()
    assert json.dumps(t1, default=str) == json.dumps(t2, default=str)
    assert a1.shape == (10, 10) and np.all(np.isfinite(a1))


def test_random_uniform_range_and_seed():
    a, _ = generate(ProblemSpec("random-uniform", 50, seed=3))
    b, _ = generate(ProblemSpec("random-uniform", 50, seed=4))
    assert a.min() >= -1.0 and a.max() <= 1.0 and a.tobytes() != b.tobytes()


def test_known_spectrum_three():
    a, truth = generate(ProblemSpec("known-spectrum", 3, seed=7, spectrum=[1, 2, 3]))
    assert match_eigenvalues(charpoly_roots(a), [1, 2, 3])[0] <= 1e-12
    assert truth["spectrum"] == [1, 2, 3]


def test_known_spectrum_with_pairs():
    spec = [1, 2 + 1j, 2 - 1j, -0.5]
    a, _ = generate(ProblemSpec("known-spectrum", 4, seed=1, spectrum=spec))
    assert match_eigenvalues(charpoly_roots(a), spec)[0] <= 1e-12


def test_unpaired_spectrum_rejected():
    with pytest.raises(ValueError):
        generate(ProblemSpec("known-spectrum", 2, spectrum=[1 + 1j, 2]))
    with pytest.raises(ValueError):
        check_spectrum([1j, 2j])
    with pytest.raises(ValueError):
        generate(ProblemSpec("known-spectrum", 3, spectrum=[1, 2]))


def test_separated_default_spectrum():
    vals = separated_spectrum(300, rng_for(0))
    check_spectrum(vals)
    assert len(vals) == 300 and sum(z.imag > 0 for z in vals) == 100
    v = np.array(vals)
    gaps = np.abs(v[:, None] - v[None, :]) + np.eye(300) * 10
    assert gaps.min() >= 1e-2 * np.abs(v).max()


def test_overflow_stress_shape():
    s, truth = generate(ProblemSpec("overflow-stress", 512))
    assert s[0, 1] == 1e8 and s[5, 5] == 1.0 + 5 * 1e-7 and not np.any(np.tril(s, -1))
    with np.errstate(all="ignore"):
        assert not np.all(np.isfinite(unprotected_backsubstitution(s, 511)))


def test_perfect_shift_truth():
    h, truth = generate(ProblemSpec("perfect-shift", 12, seed=2))
    assert not np.any(np.tril(h, -2))
    s1, s2 = truth["shifts"]
    assert match_eigenvalues([s1, s2], [z for z in truth["spectrum"] if z in (s1, s2)])[0] == 0.0
    with pytest.raises(ValueError):
        generate(ProblemSpec("perfect-shift", 2))


def test_spec_json_round_trip():
    spec = ProblemSpec("known-spectrum", 3, seed=5, spectrum=[1, 1j, -1j], growth={"offdiag": 0.5})
    back = ProblemSpec.from_json(spec.to_json())
    assert back == spec
    assert generate(back)[0].tobytes() == generate(spec)[0].tobytes()


def test_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec("gaussian", 3)
    with pytest.raises(ValueError):
        ProblemSpec("random-uniform", 0)


def test_parse_spectrum():
    assert parse_spectrum("1, 2,3+4i,3-4j") == [1, 2, 3 + 4j, 3 - 4j]


def test_identity_inputs_pass_with_zero_metrics():
    rep = verify_decomposition(np.eye(5), np.eye(5), np.eye(5), [1] * 5, [1] * 5)
    assert rep.passed and all(v == 0.0 for v in rep.metrics.values())


def test_corrupted_q_fails_orthogonality():
    q = np.eye(6)
    q[2, 3] += 1e-3
    rep = verify_decomposition(np.eye(6), np.eye(6), q)
    assert abs(rep.metrics["orthogonality"] - 1e-3 * np.sqrt(2)) <= 1e-6
    assert not rep.passed and "orthogonality" in rep.failures


def test_pipeline_known_spectrum_passes():
    a, truth = generate(ProblemSpec("known-spectrum", 100, seed=2))
    from taskeig.hessenberg import hessenberg_reduce
    from taskeig.schur import schur_reduce
    from taskeig.eigvec import backtransform, solve_eigenvectors
    from taskeig.tiled import from_dense, to_dense
    h, q = hessenberg_reduce(from_dense(a, tile_size=16))
    d = schur_reduce(h, q)
    xs = backtransform(solve_eigenvectors(d.S), d.Q)
    rep = verify_decomposition(a, to_dense(d.S), to_dense(d.Q), xs.eigenvalues + [z.conjugate() for z in
                               xs.eigenvalues if z.imag], truth["spectrum"])
    assert rep.passed, rep.to_dict()
    rep = verify_decomposition(a, vectors=xs.vectors, eigenvalues=xs.eigenvalues, columns=xs.columns)
    assert rep.passed, rep.to_dict()


def test_shape_mismatches():
    with pytest.raises(ValueError):
        verify_decomposition(np.eye(3), np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        verify_decomposition(np.eye(3), np.eye(3))
    with pytest.raises(ValueError):
        verify_decomposition(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        match_eigenvalues([1, 2], [1])


def test_report_passes_iff_all_within_tolerance():
    rep = VerificationReport({"a": 1.0, "b": 2.0}, {"a": 1.0, "b": 1.5})
    assert rep.checks == {"a": True, "b": False} and not rep.passed and rep.failures == ["b"]
    assert VerificationReport({"a": 0.5}, {"a": 1.0}).passed


def test_metrics():
    q = np.linalg.qr(np.random.default_rng(1).standard_normal((8, 8)))[0]
    s = np.triu(np.random.default_rng(2).standard_normal((8, 8)))
    assert backward_error(q @ s @ q.T, q, s) <= 8 * 8 * EPS
    assert orthogonality(q) <= 8 * 8 * EPS
    assert backward_error(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2))) == 0.0


def test_matching_is_one_to_one():
    worst, pairs = match_eigenvalues([1, 1, 2], [1, 2, 2.5])
    assert sorted(i for i, _ in pairs) == [0, 1, 2] and sorted(j for _, j in pairs) == [0, 1, 2]
    assert worst == 1.5


def test_charpoly_coefficients():
    c = charpoly([[2.0, 1.0], [0.0, 3.0]])
    assert [float(x) for x in c] == [1.0, -5.0, 6.0]
    with pytest.raises(ValueError):
        charpoly_roots(np.eye(7))


def test_quasi_triangular_readers():
    s = np.array([[1.0, 2.0, 0.0], [-2.0, 1.0, 1.0], [0.0, 0.0, 3.0]])
    assert is_quasi_triangular(s)
    np.testing.assert_allclose(sorted(quasi_triangular_eigenvalues(s), key=lambda z: (z.real, z.imag)),
                               [1 - 2j, 1 + 2j, 3])
    s[2, 1] = 0.5
    assert not is_quasi_triangular(s)


def test_reference_solve_extended_range():
    t = np.array([[1e-300, 1e300], [0.0, 1e-300]])
    x = reference_solve(t, 0.0, [1.0, 1.0])
    import mpmath
    assert abs(x[1] - mpmath.mpf(10) ** 300) <= mpmath.mpf(10) ** 286
    assert x[0] < -mpmath.mpf(10) ** 800


def test_verifiers_do_not_import_phase_code():
    src = Path(taskeig.__file__).with_name("verify.py").read_text()
    names = set()
    for node in ast.walk(ast.parse(src)):
        if isinstance(node, ast.ImportFrom):
            names.add((node.module or "", node.level))
        elif isinstance(node, ast.Import):
            names.update((a.name, 0) for a in node.names)
    assert all(level == 0 for _, level in names)
    assert {m for m, _ in names} <= {"__future__", "math", "dataclasses", "typing", "mpmath", "numpy"}
