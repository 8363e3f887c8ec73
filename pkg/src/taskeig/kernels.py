"""Small sequential kernels executed inside tasks.

Everything here works on plain ``numpy`` arrays in place or on copies and
never touches the runtime. Orthogonal transformations are Householder
reflectors ``I - tau v v^T`` (``v[0] == 1``) and Givens rotations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

EPS = 2.0 ** -52
SAFMIN = np.finfo(np.float64).tiny
OMEGA = 2.0 ** 1022
LOG2_OMEGA = 1022.0
SMALL_THRESHOLD = 64
SWAP_RCOND = EPS ** 0.75


@dataclass
class Reflector:
    v: np.ndarray
    tau: float

    def matrix(self) -> np.ndarray:
        return np.eye(len(self.v)) - self.tau * np.outer(self.v, self.v)


@dataclass
class GivensRotation:
    """Rotation acting on indices ``i`` and ``j``.

    Applied from the left it maps ``(x_i, x_j)`` to ``(c x_i + s x_j, -s x_i + c x_j)``.
    """

    c: float
    s: float
    i: int = 0
    j: int = 1

    def matrix(self) -> np.ndarray:
        return np.array([[self.c, self.s], [-self.s, self.c]])


def _safe_norm(x: np.ndarray) -> float:
    """2-norm that neither overflows nor underflows in the squares."""
    big = float(np.max(np.abs(x)))
    if big == 0.0 or 2.0 ** -500 < big < 2.0 ** 500:
        return float(np.linalg.norm(x))
    e = math.frexp(big)[1]
    return math.ldexp(float(np.linalg.norm(np.ldexp(x, -e))), e)


def make_reflector(x) -> Tuple[Reflector, float]:
    """Householder reflector with ``(I - tau v v^T) x = beta e_1``.

    ``beta = -sign(x_0) ||x||``. If ``x[1:]`` is zero the reflector is the
    identity (``tau = 0``) and ``beta = x_0``.
    """
    x = np.array(x, dtype=np.float64)
    n = x.shape[0]
    v = np.zeros(n)
    v[0] = 1.0
    if n == 1:
        return Reflector(v, 0.0), float(x[0])
    alpha = float(x[0])
    xnorm = math.hypot(*x[1:]) if n <= 3 else _safe_norm(x[1:])
    if xnorm == 0.0:
        return Reflector(v, 0.0), alpha
    beta = -math.copysign(math.hypot(alpha, xnorm), alpha)
    tau = (beta - alpha) / beta
    v[1:] = x[1:] / (alpha - beta)
    return Reflector(v, tau), beta


def apply_left(a: np.ndarray, r: Reflector) -> None:
    """``a <- (I - tau v v^T) a`` in place."""
    if r.tau == 0.0:
        return
    w = r.v @ a
    a -= r.tau * np.outer(r.v, w)


def apply_right(a: np.ndarray, r: Reflector) -> None:
    """``a <- a (I - tau v v^T)`` in place."""
    if r.tau == 0.0:
        return
    w = a @ r.v
    a -= r.tau * np.outer(w, r.v)


def make_givens(f: float, g: float) -> Tuple[float, float, float]:
    """``(c, s, r)`` with ``[[c, s], [-s, c]] @ [f, g] = [r, 0]``."""
    if g == 0.0:
        return 1.0, 0.0, f
    if f == 0.0:
        return 0.0, math.copysign(1.0, g), abs(g)
    r = math.copysign(math.hypot(f, g), f)
    return f / r, g / r, r


# ---------------------------------------------------------------------------
# 2x2 standardization


def standardize_2x2(block) -> Tuple[GivensRotation, np.ndarray, List[complex]]:
    """Schur-factor a real 2x2 block into standard form.

    Returns ``(rot, std, eigs)`` such that ``block = G @ std @ G.T`` with
    ``G = rot.matrix().T``. ``std`` is upper triangular when the eigenvalues
    are real; otherwise it has equal diagonal entries and off-diagonal
    entries of opposite sign.
    """
    a, b = float(block[0][0]), float(block[0][1])
    c, d = float(block[1][0]), float(block[1][1])
    if c == 0.0:
        cs, sn = 1.0, 0.0
    elif b == 0.0:
        cs, sn = 0.0, 1.0
        a, d = d, a
        b, c = -c, 0.0
    elif (a - d) == 0.0 and math.copysign(1.0, b) != math.copysign(1.0, c):
        cs, sn = 1.0, 0.0
    else:
        temp = a - d
        p = 0.5 * temp
        bcmax = max(abs(b), abs(c))
        bcmis = min(abs(b), abs(c)) * math.copysign(1.0, b) * math.copysign(1.0, c)
        scale = max(abs(p), bcmax)
        z = (p / scale) * p + (bcmax / scale) * bcmis
        if z >= 4.0 * EPS:
            # real eigenvalues
            z = p + math.copysign(math.sqrt(scale) * math.sqrt(z), p)
            a = d + z
            d = d - (bcmax / z) * bcmis
            tau = math.hypot(c, z)
            cs = z / tau
            sn = c / tau
            b = b - c
            c = 0.0
        else:
            # complex or nearly equal real eigenvalues: equalize the diagonal
            sigma = b + c
            tau = math.hypot(sigma, temp)
            cs = math.sqrt(0.5 * (1.0 + abs(sigma) / tau))
            sn = -(p / (tau * cs)) * math.copysign(1.0, sigma)
            aa = a * cs + b * sn
            bb = -a * sn + b * cs
            cc = c * cs + d * sn
            dd = -c * sn + d * cs
            a = aa * cs + cc * sn
            b = bb * cs + dd * sn
            c = -aa * sn + cc * cs
            d = -bb * sn + dd * cs
            temp = 0.5 * (a + d)
            a = d = temp
            if c != 0.0:
                if b != 0.0:
                    if math.copysign(1.0, b) == math.copysign(1.0, c):
                        # real eigenvalues after all
                        sab = math.sqrt(abs(b))
                        sac = math.sqrt(abs(c))
                        p = math.copysign(sab * sac, c)
                        tau = 1.0 / math.sqrt(abs(b + c))
                        a = temp + p
                        d = temp - p
                        b = b - c
                        c = 0.0
                        cs1 = sab * tau
                        sn1 = sac * tau
                        temp = cs * cs1 - sn * sn1
                        sn = cs * sn1 + sn * cs1
                        cs = temp
                else:
                    b = -c
                    c = 0.0
                    temp = cs
                    cs = -sn
                    sn = temp
    std = np.array([[a, b], [c, d]])
    if c == 0.0:
        eigs = [complex(a, 0.0), complex(d, 0.0)]
    else:
        im = math.sqrt(abs(b)) * math.sqrt(abs(c))
        eigs = [complex(a, im), complex(a, -im)]
    return GivensRotation(cs, sn), std, eigs


def apply_standardization(t: np.ndarray, k: int, z: Optional[np.ndarray] = None, lo: int = 0, hi: Optional[int] = None):
    """Standardize the 2x2 block at ``t[k:k+2, k:k+2]`` in place.

    Rows ``k, k+1`` are updated over columns ``k+2:hi`` and columns
    ``k, k+1`` over rows ``lo:k``; ``z`` (if given) accumulates the rotation.
    Returns the eigenvalue pair.
    """
    n = t.shape[1]
    hi = n if hi is None else hi
    rot, std, eigs = standardize_2x2(t[k:k + 2, k:k + 2])
    g = rot.matrix().T
    t[k:k + 2, k:k + 2] = std
    if k + 2 < hi:
        t[k:k + 2, k + 2:hi] = g.T @ t[k:k + 2, k + 2:hi]
    if lo < k:
        t[lo:k, k:k + 2] = t[lo:k, k:k + 2] @ g
    if z is not None:
        z[:, k:k + 2] = z[:, k:k + 2] @ g
    return eigs


# ---------------------------------------------------------------------------
# Hessenberg and Schur for small matrices


def small_hessenberg(m) -> Tuple[np.ndarray, np.ndarray]:
    """Unblocked Householder reduction ``M = Q H Q^T``."""
    h = np.array(m, dtype=np.float64)
    k = h.shape[0]
    q = np.eye(k)
    for j in range(k - 2):
        r, beta = make_reflector(h[j + 1:, j])
        if r.tau != 0.0:
            apply_left(h[j + 1:, j + 1:], r)
            apply_right(h[:, j + 1:], r)
            apply_right(q[:, j + 1:], r)
        h[j + 1, j] = beta
        h[j + 2:, j] = 0.0
    return h, q


def bulge_vector(h: np.ndarray, k: int, s1: complex, s2: complex) -> np.ndarray:
    """First column of ``(H - s1 I)(H - s2 I)`` at rows ``k..k+2``, up to scaling.

    ``s1`` and ``s2`` are either both real or a conjugate pair.
    """
    h00, h01 = h[k, k], h[k, k + 1]
    h10, h11 = h[k + 1, k], h[k + 1, k + 1]
    h21 = h[k + 2, k + 1] if k + 2 < h.shape[0] else 0.0
    r1, i1, r2, i2 = s1.real, s1.imag, s2.real, s2.imag
    s = abs(h00 - r2) + abs(i2) + abs(h10)
    if s == 0.0:
        return np.zeros(3)
    h10s = h10 / s
    v0 = h10s * h01 + (h00 - r1) * ((h00 - r2) / s) - i1 * (i2 / s)
    v1 = h10s * (h00 + h11 - r1 - r2)
    v2 = h10s * h21
    return np.array([v0, v1, v2])


def negligible_subdiag(t: np.ndarray, k: int, lo: int, hi: int, smlnum: float) -> bool:
    """Conservative small-subdiagonal test for ``t[k, k-1]`` (k > lo)."""
    h = abs(t[k, k - 1])
    if h <= smlnum:
        return True
    tst = abs(t[k - 1, k - 1]) + abs(t[k, k])
    if tst == 0.0:
        if k - 2 >= lo:
            tst += abs(t[k - 1, k - 2])
        if k + 1 <= hi:
            tst += abs(t[k + 1, k])
    if h <= EPS * tst:
        up = abs(t[k - 1, k])
        ab, ba = max(h, up), min(h, up)
        d = abs(t[k - 1, k - 1] - t[k, k])
        aa, bb = max(abs(t[k, k]), d), min(abs(t[k, k]), d)
        s = aa + ab
        if ba * (ab / s) <= max(smlnum, EPS * (bb * (aa / s))):
            return True
    return False


def shifts_from_2x2(h11: float, h12: float, h21: float, h22: float, collapse_real: bool = True) -> Tuple[complex, complex]:
    s = abs(h11) + abs(h12) + abs(h21) + abs(h22)
    if s == 0.0:
        return 0j, 0j
    h11, h12, h21, h22 = h11 / s, h12 / s, h21 / s, h22 / s
    tr = 0.5 * (h11 + h22)
    det = (h11 - tr) * (h22 - tr) - h12 * h21
    rtdisc = math.sqrt(abs(det))
    if det >= 0.0:
        return complex(tr * s, rtdisc * s), complex(tr * s, -rtdisc * s)
    r1, r2 = tr + rtdisc, tr - rtdisc
    if collapse_real:
        r = r1 if abs(r1 - h22) <= abs(r2 - h22) else r2
        r1 = r2 = r
    return complex(r1 * s, 0.0), complex(r2 * s, 0.0)


def _apply3_left(t, i0, nr, v, tau, c0, c1):
    rows = t[i0:i0 + nr, c0:c1]
    w = v[:nr] @ rows
    w *= tau
    rows -= np.multiply.outer(v[:nr], w)


def _apply3_right(t, j0, nr, v, tau, r0, r1):
    cols = t[r0:r1, j0:j0 + nr]
    w = cols @ v[:nr]
    w *= tau
    cols -= np.multiply.outer(w, v[:nr])


def small_schur(h, max_sweeps: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Double-shift Francis QR on a small Hessenberg matrix.

    Returns ``(S, Q, converged)`` with ``H = Q S Q^T`` and ``S`` in
    standardized real Schur form. ``converged`` is False if the sweep
    budget (``30 k`` by default) ran out; ``S`` is then partial.
    """
    t = np.array(h, dtype=np.float64)
    n = t.shape[0]
    z = np.eye(n)
    if n == 1:
        return t, z, True
    if max_sweeps is None:
        max_sweeps = 30 * n
    for j in range(n - 2):
        t[j + 2:, j] = 0.0
    smlnum = SAFMIN * (n / EPS)
    sweeps = 0
    i = n - 1
    while i >= 0:
        its = 0
        while True:
            k = i
            while k > 0 and not negligible_subdiag(t, k, 0, i, smlnum):
                k -= 1
            l = k
            if l > 0:
                t[l, l - 1] = 0.0
            if l >= i - 1:
                break
            if sweeps >= max_sweeps:
                return t, z, False
            its += 1
            sweeps += 1
            if its % 20 == 10:
                s = abs(t[l + 1, l]) + abs(t[l + 2, l + 1])
                h11 = 0.75 * s + t[l, l]
                s1, s2 = shifts_from_2x2(h11, -0.4375 * s, s, h11)
            elif its % 20 == 0:
                s = abs(t[i, i - 1]) + abs(t[i - 1, i - 2])
                h11 = 0.75 * s + t[i, i]
                s1, s2 = shifts_from_2x2(h11, -0.4375 * s, s, h11)
            else:
                s1, s2 = shifts_from_2x2(t[i - 1, i - 1], t[i - 1, i], t[i, i - 1], t[i, i])
            _francis_sweep(t, z, l, i, s1, s2)
        if l == i:
            i -= 1
        else:
            apply_standardization(t, i - 1, z)
            i -= 2
    return t, z, True


def _francis_sweep(t, z, l, i, s1, s2):
    n = t.shape[0]
    x = bulge_vector(t, l, s1, s2)
    for k in range(l, i):
        nr = min(3, i - k + 1)
        if k > l:
            x = t[k:k + nr, k - 1].copy()
        r, beta = make_reflector(x[:nr])
        if k > l:
            t[k, k - 1] = beta
            t[k + 1:k + nr, k - 1] = 0.0
        if r.tau == 0.0:
            continue
        v, tau = r.v, r.tau
        _apply3_left(t, k, nr, v, tau, k, n)
        _apply3_right(t, k, nr, v, tau, 0, min(k + 4, i + 1))
        _apply3_right(z, k, nr, v, tau, 0, n)


def block_starts(t: np.ndarray, lo: int = 0, hi: Optional[int] = None) -> List[Tuple[int, int]]:
    """``(start, size)`` of the diagonal blocks of a quasi-triangular matrix."""
    n = t.shape[0] if hi is None else hi
    out = []
    k = lo
    while k < n:
        if k + 1 < n and t[k + 1, k] != 0.0:
            out.append((k, 2))
            k += 2
        else:
            out.append((k, 1))
            k += 1
    return out


def block_eigenvalues(t: np.ndarray, k: int, size: int) -> List[complex]:
    if size == 1:
        return [complex(t[k, k], 0.0)]
    a, b, c, d = t[k, k], t[k, k + 1], t[k + 1, k], t[k + 1, k + 1]
    if c == 0.0:
        return [complex(a, 0.0), complex(d, 0.0)]
    p = 0.5 * (a - d)
    disc = p * p + b * c
    mid = 0.5 * (a + d)
    if disc >= 0.0:
        r = math.sqrt(disc)
        return [complex(mid + r, 0.0), complex(mid - r, 0.0)]
    im = math.sqrt(abs(b)) * math.sqrt(abs(c)) if a == d else math.sqrt(-disc)
    return [complex(mid, im), complex(mid, -im)]


def schur_eigenvalues(t: np.ndarray) -> List[complex]:
    out = []
    for k, size in block_starts(t):
        out.extend(block_eigenvalues(t, k, size))
    return out


# ---------------------------------------------------------------------------
# adjacent block swap


def swap_adjacent_blocks(t: np.ndarray, j: int, p: int, q: int, u: Optional[np.ndarray] = None,
                         lo: int = 0, hi: Optional[int] = None) -> bool:
    """Swap the ``p x p`` block at ``j`` with the following ``q x q`` block.

    Works in place on ``t``: rows ``j..j+p+q`` are transformed over columns
    up to ``hi`` and the columns over rows from ``lo``. ``u`` accumulates the
    transformation. Returns False (and leaves everything untouched) when the
    swap is rejected as ill-conditioned or inaccurate.
    """
    n = p + q
    hi = t.shape[1] if hi is None else hi
    d = np.array(t[j:j + n, j:j + n])
    dnorm = float(np.linalg.norm(d))
    if dnorm == 0.0:
        return True
    a11, a12, a22 = d[:p, :p], d[:p, p:], d[p:, p:]
    kron = np.kron(np.eye(q), a11) - np.kron(a22.T, np.eye(p))
    smin = float(np.linalg.svd(kron, compute_uv=False)[-1])
    if smin < SWAP_RCOND * dnorm:
        return False
    if p == 1 and q == 1:
        c, s, _ = make_givens(d[0, 1], d[1, 1] - d[0, 0])
        qm = np.array([[c, -s], [s, c]])
        d2 = qm.T @ d @ qm
        d2[1, 0] = 0.0
        d2[0, 0], d2[1, 1] = d[1, 1], d[0, 0]
    else:
        x = np.linalg.solve(kron, a12.reshape(-1, order="F")).reshape(p, q, order="F")
        basis = np.vstack([-x, np.eye(q)])
        qm = np.eye(n)
        for col in range(q):
            r, _ = make_reflector(basis[col:, col])
            apply_left(basis[col:, col:], r)
            apply_right(qm[:, col:], r)
        d2 = qm.T @ d @ qm
        thresh = max(20.0 * EPS * dnorm, SAFMIN)
        if np.linalg.norm(d2[q:, :q]) > thresh:
            return False
        d2[q:, :q] = 0.0
        if q == 2:
            apply_standardization(d2, 0, qm)
        if p == 2:
            apply_standardization(d2, q, qm)
        if np.linalg.norm(d - qm @ d2 @ qm.T) > thresh:
            return False
    if j + n < hi:
        t[j:j + n, j + n:hi] = qm.T @ t[j:j + n, j + n:hi]
    if lo < j:
        t[lo:j, j:j + n] = t[lo:j, j:j + n] @ qm
    t[j:j + n, j:j + n] = d2
    if u is not None:
        u[:, j:j + n] = u[:, j:j + n] @ qm
    return True


# ---------------------------------------------------------------------------
# overflow-protected solves


def _log2(x: float) -> float:
    return math.log2(x) if x > 0.0 else -math.inf


def fit_exponent(log2_bound: float) -> int:
    """Largest ``d <= 0`` with ``2**d * 2**log2_bound <= OMEGA`` (conservatively)."""
    if log2_bound <= LOG2_OMEGA - 1.0:
        return 0
    return -int(math.ceil(log2_bound - LOG2_OMEGA)) - 2


def _shifted_block(t: np.ndarray, r0: int, bs: int, shift: complex) -> np.ndarray:
    blk = t[r0:r0 + bs, r0:r0 + bs]
    if shift.imag == 0.0:
        return blk - shift.real * np.eye(bs)
    a, w = shift.real, shift.imag
    out = np.zeros((2 * bs, 2 * bs))
    out[:bs, :bs] = blk - a * np.eye(bs)
    out[bs:, bs:] = blk - a * np.eye(bs)
    out[:bs, bs:] = w * np.eye(bs)
    out[bs:, :bs] = -w * np.eye(bs)
    return out


def _protected_block_solve(dm: np.ndarray, rhs: np.ndarray, pert: float, protect: bool) -> Tuple[np.ndarray, int, bool]:
    """Solve ``dm z = 2**e rhs`` with ``e <= 0`` chosen so that ``|z| <= OMEGA``."""
    flagged = False
    if dm.shape[0] == 1:
        piv = float(dm[0, 0])
        if piv == 0.0:
            piv = pert
            flagged = True
        e = 0
        if protect:
            rmax = abs(float(rhs[0]))
            if abs(piv) < 1.0 and rmax > abs(piv) * OMEGA:
                e = fit_exponent(_log2(rmax) - _log2(abs(piv)))
        return np.array([math.ldexp(float(rhs[0]), e) / piv]), e, flagged
    scale_e = math.frexp(float(np.max(np.abs(dm))))[1] if np.any(dm) else 0
    dn = np.ldexp(dm, -scale_e)
    try:
        inv = np.linalg.inv(dn)
        ok = np.all(np.isfinite(inv))
    except np.linalg.LinAlgError:
        ok = False
    if not ok:
        dn = dn + math.ldexp(max(pert, SAFMIN), -scale_e) * np.eye(dn.shape[0])
        inv = np.linalg.inv(dn)
        flagged = True
    e = 0
    if protect:
        bound = _log2(float(np.max(np.sum(np.abs(inv), axis=1)))) + _log2(float(np.max(np.abs(rhs)))) - scale_e
        e = fit_exponent(bound)
    z = np.linalg.solve(dn, np.ldexp(rhs, e))
    return np.ldexp(z, -scale_e), e, flagged


def protected_small_solve(t, shift, b, exponent: int = 0, nrows: Optional[int] = None,
                          protect: bool = True, tnorm: Optional[float] = None) -> Tuple[np.ndarray, int, bool]:
    """Overflow-protected backsubstitution with a quasi-triangular matrix.

    Solves ``(T - shift I) x = b`` over rows ``[0, nrows)`` where ``b`` is an
    augmented vector representing ``b / 2**exponent``. For a complex shift
    ``b`` has shape ``(k, 2)`` holding real and imaginary parts. Returns
    ``(x, exponent', flagged)``; the solution is ``x / 2**exponent'``. Every
    scaling is by an integer power of two, and every entry stays bounded by
    ``OMEGA``. ``flagged`` reports an exactly singular pivot that was
    perturbed by ``eps * ||T||_inf``.
    """
    t = np.asarray(t, dtype=np.float64)
    shift = complex(shift)
    k = t.shape[0]
    nrows = k if nrows is None else nrows
    x = np.array(b, dtype=np.float64)
    cplx = shift.imag != 0.0
    if cplx and x.shape != (k, 2):
        raise ValueError("complex shift requires b of shape (k, 2)")
    if tnorm is None:
        tnorm = float(np.max(np.sum(np.abs(t), axis=1))) if k else 0.0
    pert = max(EPS * tnorm, SAFMIN)
    e = exponent
    flagged = False
    blocks = block_starts(t, 0, nrows)
    if blocks and blocks[-1][0] + blocks[-1][1] > nrows:
        raise ValueError("nrows splits a 2x2 block")
    for r0, bs in reversed(blocks):
        dm = _shifted_block(t, r0, bs, shift)
        rhs = x[r0:r0 + bs].reshape(-1, order="F")
        z, d, f = _protected_block_solve(dm, rhs, pert, protect)
        flagged |= f
        if d != 0:
            x = np.ldexp(x, d)
            e += d
        x[r0:r0 + bs] = z.reshape(x[r0:r0 + bs].shape, order="F")
        if r0 == 0:
            continue
        coupling = t[:r0, r0:r0 + bs]
        if protect:
            zb = float(np.max(np.abs(z)))
            cb = float(np.sum(np.max(np.abs(coupling), axis=0)))
            xm = float(np.max(np.abs(x[:r0])))
            bound = max(_log2(zb) + _log2(cb), _log2(xm)) + 1.0
            d2 = fit_exponent(bound)
            if d2 != 0:
                x = np.ldexp(x, d2)
                e += d2
        x[:r0] -= coupling @ x[r0:r0 + bs]
    return x, e, flagged
