"""Independent checks of computed decompositions.

Nothing here calls the reduction, QR, reordering or eigenvector code; all
metrics use plain dense numpy or mpmath.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np

EPS = 2.0 ** -52


@dataclass
class VerificationReport:
    metrics: Dict[str, float]
    tolerances: Dict[str, float]
    checks: Dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not self.checks:
            self.checks = {k: bool(self.metrics[k] <= tol) for k, tol in self.tolerances.items() if k in self.metrics}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> List[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def to_dict(self) -> dict:
        return {"metrics": self.metrics, "tolerances": self.tolerances, "checks": self.checks, "passed": self.passed}


def backward_error(a: np.ndarray, q: np.ndarray, s: np.ndarray) -> float:
    """``||A - Q S Q^T||_F / ||A||_F`` (absolute if ``A`` is zero)."""
    a = np.asarray(a, dtype=np.float64)
    r = np.linalg.norm(a - q @ s @ q.T)
    na = np.linalg.norm(a)
    return float(r / na) if na > 0.0 else float(r)


def orthogonality(q: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    return float(np.linalg.norm(q.T @ q - np.eye(q.shape[1])))


def match_eigenvalues(computed: Sequence[complex], reference: Sequence[complex]) -> Tuple[float, List[Tuple[int, int]]]:
    """Greedy closest-pair matching; returns the largest matched distance."""
    c = np.asarray(computed, dtype=complex)
    r = np.asarray(reference, dtype=complex)
    if c.shape != r.shape:
        raise ValueError(f"{c.size} computed values against {r.size} reference values")
    if c.size == 0:
        return 0.0, []
    dist = np.abs(c[:, None] - r[None, :])
    pairs = []
    worst = 0.0
    order = np.dstack(np.unravel_index(np.argsort(dist, axis=None, kind="stable"), dist.shape))[0]
    used_c = np.zeros(c.size, bool)
    used_r = np.zeros(r.size, bool)
    for i, j in order:
        if used_c[i] or used_r[j]:
            continue
        used_c[i] = used_r[j] = True
        pairs.append((int(i), int(j)))
        worst = max(worst, float(dist[i, j]))
        if len(pairs) == c.size:
            break
    return worst, pairs


def charpoly(a) -> List[mpmath.mpf]:
    """Characteristic polynomial coefficients (leading first) by Faddeev-LeVerrier."""
    n = len(a)
    with mpmath.workdps(60):
        m = mpmath.matrix([[mpmath.mpf(float(x)) for x in row] for row in np.asarray(a, dtype=np.float64)])
        coeffs = [mpmath.mpf(1)]
        mk = mpmath.zeros(n, n)
        ident = mpmath.eye(n)
        for k in range(1, n + 1):
            mk = m * mk + coeffs[-1] * ident if k > 1 else ident.copy()
            am = m * mk
            c = -sum(am[i, i] for i in range(n)) / k
            coeffs.append(c)
        return coeffs


def charpoly_roots(a) -> List[complex]:
    """Eigenvalues of a matrix with ``n <= 6`` from its characteristic polynomial."""
    n = len(a)
    if n > 6:
        raise ValueError("characteristic polynomial oracle is limited to n <= 6")
    if n == 0:
        return []
    coeffs = charpoly(a)
    with mpmath.workdps(60):
        if n == 1:
            roots = [-coeffs[1]]
        else:
            roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
        return sorted((complex(r) for r in roots), key=lambda z: (round(z.real, 12), z.imag))


def eigenpair_residual(a: np.ndarray, lam: complex, x: np.ndarray) -> float:
    """``||A x - lam x||_inf / (||A||_inf ||x||_inf)``."""
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=complex)
    nx = float(np.max(np.abs(x))) if x.size else 0.0
    na = float(np.max(np.sum(np.abs(a), axis=1))) if a.size else 0.0
    r = float(np.max(np.abs(a @ x - lam * x))) if x.size else 0.0
    if nx == 0.0:
        return math.inf
    return r / (na * nx) if na > 0.0 else r / nx


def quasi_triangular_eigenvalues(s: np.ndarray) -> List[complex]:
    """Read eigenvalues off the diagonal blocks of a quasi-triangular matrix."""
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    out: List[complex] = []
    k = 0
    while k < n:
        if k + 1 < n and s[k + 1, k] != 0.0:
            out.extend(complex(z) for z in np.linalg.eigvals(s[k:k + 2, k:k + 2]))
            k += 2
        else:
            out.append(complex(s[k, k]))
            k += 1
    return out


def is_quasi_triangular(s: np.ndarray) -> bool:
    s = np.asarray(s)
    n = s.shape[0]
    if n > 2 and np.any(np.tril(s, -2)):
        return False
    for k in range(n - 2):
        if s[k + 1, k] != 0.0 and s[k + 2, k + 1] != 0.0:
            return False
    return True


def unprotected_backsubstitution(s: np.ndarray, k: int) -> np.ndarray:
    """Plain substitution for the eigenvector of the real eigenvalue ``s[k, k]``.

    No scaling of any kind; may produce inf or nan. Upper triangular
    ``s[:k+1, :k+1]`` is assumed.
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    lam = s[k, k]
    y = np.zeros(n)
    y[k] = 1.0
    with np.errstate(all="ignore"):
        for i in range(k - 1, -1, -1):
            y[i] = -(s[i, i + 1:k + 1] @ y[i + 1:k + 1]) / (s[i, i] - lam)
    return y


def reference_solve(t: np.ndarray, shift: float, b: Sequence[float], dps: int = 30) -> List[mpmath.mpf]:
    """Upper triangular ``(T - shift I) x = b`` in mpmath (unbounded exponent)."""
    t = np.asarray(t, dtype=np.float64)
    n = t.shape[0]
    with mpmath.workdps(dps):
        x = [mpmath.mpf(0)] * n
        for i in range(n - 1, -1, -1):
            acc = mpmath.mpf(float(b[i]))
            for j in range(i + 1, n):
                acc -= mpmath.mpf(float(t[i, j])) * x[j]
            x[i] = acc / (mpmath.mpf(float(t[i, i])) - mpmath.mpf(shift))
        return x


def reference_double_shift_step(h: np.ndarray, s1: complex, s2: complex) -> Tuple[np.ndarray, np.ndarray]:
    """One Francis double-shift sweep on a Hessenberg matrix, reflector by reflector.

    Returns ``(H', Z)`` with ``H' = Z^T H Z``.
    """
    h = np.array(h, dtype=np.float64)
    n = h.shape[0]
    z = np.eye(n)
    tr = (s1 + s2).real
    det = (s1 * s2).real
    h00, h01, h10, h11 = h[0, 0], h[0, 1], h[1, 0], h[1, 1]
    x = np.array([h00 * h00 + h01 * h10 - tr * h00 + det, h10 * (h00 + h11 - tr), h10 * h[2, 1] if n > 2 else 0.0])
    for k in range(-1, n - 2):
        nr = min(3, n - 1 - k)
        if k >= 0:
            x = h[k + 1:k + 1 + nr, k].copy()
        else:
            x = x[:nr]
        alpha = x[0]
        tail = np.linalg.norm(x[1:])
        if tail == 0.0:
            continue
        beta = -math.copysign(math.hypot(alpha, tail), alpha)
        v = x.copy()
        v[0] = 1.0
        v[1:] = x[1:] / (alpha - beta)
        tau = (beta - alpha) / beta
        p = np.eye(n)
        p[k + 1:k + 1 + nr, k + 1:k + 1 + nr] -= tau * np.outer(v, v)
        h = p @ h @ p
        z = z @ p
        if k >= 0:
            h[k + 2:k + 1 + nr, k] = 0.0
    return h, z


def verify_decomposition(a: np.ndarray, s: Optional[np.ndarray] = None, q: Optional[np.ndarray] = None,
                         eigenvalues: Optional[Sequence[complex]] = None,
                         reference_eigenvalues: Optional[Sequence[complex]] = None,
                         vectors: Optional[np.ndarray] = None, columns: Optional[Sequence[Tuple[int, ...]]] = None,
                         tol_backward: Optional[float] = None, tol_orth: Optional[float] = None,
                         tol_eig: float = 1e-9, tol_vec: Optional[float] = None) -> VerificationReport:
    """Residual, orthogonality, eigenvalue and eigenvector checks.

    Default tolerances are ``32 n eps`` for backward error and
    orthogonality, ``128 n eps`` for eigenvector residuals.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A must be square")
    n = a.shape[0]
    tol_backward = 32 * n * EPS if tol_backward is None else tol_backward
    tol_orth = 32 * n * EPS if tol_orth is None else tol_orth
    tol_vec = 128 * n * EPS if tol_vec is None else tol_vec
    metrics: Dict[str, float] = {}
    tols: Dict[str, float] = {}
    if s is not None or q is not None:
        if s is None or q is None or np.shape(s) != a.shape or np.shape(q) != a.shape:
            raise ValueError("S and Q must both be given with the shape of A")
        metrics["backward_error"] = backward_error(a, q, s)
        metrics["orthogonality"] = orthogonality(q)
        tols["backward_error"] = tol_backward
        tols["orthogonality"] = tol_orth
    if eigenvalues is not None and reference_eigenvalues is not None:
        metrics["eigenvalue_mismatch"] = match_eigenvalues(eigenvalues, reference_eigenvalues)[0]
        tols["eigenvalue_mismatch"] = tol_eig
    if vectors is not None:
        if eigenvalues is None or columns is None:
            raise ValueError("eigenvector checks need eigenvalues and column map")
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape[0] != n:
            raise ValueError("eigenvector length does not match A")
        worst = 0.0
        for lam, cols in zip(eigenvalues, columns):
            x = vectors[:, cols[0]] + (1j * vectors[:, cols[1]] if len(cols) == 2 else 0.0)
            worst = max(worst, eigenpair_residual(a, complex(lam), x))
        metrics["eigenvector_residual"] = worst
        tols["eigenvector_residual"] = tol_vec
    return VerificationReport(metrics, tols)
