"""Seeded test problems.

All randomness comes from the Philox-4x64-10 counter-based generator keyed
directly by the seed (counter starting at zero), so a problem is fully
determined by its :class:`ProblemSpec`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

KINDS = ("random-uniform", "known-spectrum", "overflow-stress", "perfect-shift", "hessenberg-random")


@dataclass
class ProblemSpec:
    kind: str
    n: int
    seed: int = 0
    spectrum: Optional[List[complex]] = None
    growth: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.spectrum is not None:
            self.spectrum = [complex(z) for z in self.spectrum]

    def to_json(self) -> str:
        d = asdict(self)
        if self.spectrum is not None:
            d["spectrum"] = [[z.real, z.imag] for z in self.spectrum]
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        d = json.loads(text)
        if d.get("spectrum") is not None:
            d["spectrum"] = [complex(*z) if isinstance(z, list) else complex(z) for z in d["spectrum"]]
        return cls(**d)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & (2 ** 128 - 1), counter=0))


def uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform on ``[-1, 1]``."""
    return 2.0 * rng.random(shape) - 1.0


def parse_spectrum(text: str) -> List[complex]:
    """``"1,2,3+4j,3-4j"`` -> list of complex values."""
    out = []
    for tok in text.split(","):
        tok = tok.strip().replace(" ", "").replace("i", "j")
        if tok:
            out.append(complex(tok))
    return out


def check_spectrum(spectrum: Sequence[complex]) -> List[Tuple[complex, ...]]:
    """Group a spectrum into real values and conjugate pairs (adjacent)."""
    groups = []
    i = 0
    spectrum = [complex(z) for z in spectrum]
    while i < len(spectrum):
        z = spectrum[i]
        if z.imag == 0.0:
            groups.append((z,))
            i += 1
            continue
        if i + 1 < len(spectrum) and spectrum[i + 1] == z.conjugate():
            groups.append((z, spectrum[i + 1]) if z.imag > 0 else (spectrum[i + 1], z))
            i += 2
            continue
        raise ValueError(f"spectrum value {z} has no adjacent conjugate partner")
    return groups


def separated_spectrum(n: int, rng: np.random.Generator) -> List[complex]:
    """Mixed real values and conjugate pairs in the unit box, well separated."""
    n_pairs = n // 3
    n_real = n - 2 * n_pairs
    reals = list(np.linspace(-1.0, 1.0, n_real)) if n_real > 1 else [0.5] * n_real
    side = max(1, math.ceil(math.sqrt(n_pairs)))
    grid = [complex(x, y) for x in np.linspace(-0.9, 0.9, side) for y in np.linspace(0.1, 0.9, side)]
    pick = rng.permutation(len(grid))[:n_pairs]
    pairs = [grid[i] for i in sorted(pick)]
    groups: List[Tuple[complex, ...]] = [(complex(r, 0.0),) for r in reals] + [(z, z.conjugate()) for z in pairs]
    order = rng.permutation(len(groups))
    out: List[complex] = []
    for i in order:
        out.extend(groups[i])
    return out


def quasi_triangular(spectrum: Sequence[complex], rng: np.random.Generator, offdiag: float) -> np.ndarray:
    groups = check_spectrum(spectrum)
    n = sum(len(g) for g in groups)
    s = np.triu(uniform(rng, (n, n)), 1) * offdiag
    k = 0
    for g in groups:
        if len(g) == 1:
            s[k, k] = g[0].real
            k += 1
        else:
            a, w = g[0].real, abs(g[0].imag)
            s[k:k + 2, k:k + 2] = [[a, w], [-w, a]]
            k += 2
    return s


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Product of ``n`` random Householder reflectors."""
    q = np.eye(n)
    for _ in range(n):
        v = uniform(rng, n)
        nv = float(v @ v)
        if nv == 0.0:
            continue
        q -= np.outer(q @ v, (2.0 / nv) * v)
    return q


def _dense_hessenberg(a: np.ndarray) -> np.ndarray:
    """Plain Householder reduction (independent of the library's blocked code)."""
    h = np.array(a, dtype=np.float64)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0 or np.linalg.norm(x[1:]) == 0.0:
            continue
        v = x
        v[0] += math.copysign(nx, x[0])
        v /= np.linalg.norm(v)
        h[k + 1:, :] -= 2.0 * np.outer(v, v @ h[k + 1:, :])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def generate(spec: ProblemSpec) -> Tuple[np.ndarray, Optional[dict]]:
    """Build the matrix for ``spec`` plus ground truth when the kind has one."""
    n = spec.n
    rng = rng_for(spec.seed)
    if spec.kind == "random-uniform":
        return uniform(rng, (n, n)), None
    if spec.kind == "hessenberg-random":
        return np.triu(uniform(rng, (n, n)), -1), None
    if spec.kind == "overflow-stress":
        d0 = spec.growth.get("diag_step", 1e-7)
        sup = spec.growth.get("superdiag", 1e8)
        s = np.diag(1.0 + np.arange(n) * d0) + np.diag(np.full(max(n - 1, 0), sup), 1)
        return s, {"spectrum": [complex(v, 0.0) for v in np.diag(s)]}
    if spec.kind == "known-spectrum":
        spectrum = spec.spectrum if spec.spectrum is not None else separated_spectrum(n, rng)
        check_spectrum(spectrum)
        if len(spectrum) != n:
            raise ValueError(f"spectrum has {len(spectrum)} values, expected {n}")
        offdiag = spec.growth.get("offdiag", 1.0 / math.sqrt(n))
        s0 = quasi_triangular(spectrum, rng, offdiag)
        q0 = random_orthogonal(n, rng)
        return q0 @ s0 @ q0.T, {"spectrum": list(spectrum)}
    # perfect-shift: Hessenberg matrix whose trailing pair of shifts is exact
    if n < 3:
        raise ValueError("perfect-shift needs n >= 3")
    spectrum = spec.spectrum if spec.spectrum is not None else separated_spectrum(n, rng)
    s0 = quasi_triangular(spectrum, rng, spec.growth.get("offdiag", 1.0 / math.sqrt(n)))
    q0 = random_orthogonal(n, rng)
    h = _dense_hessenberg(q0 @ s0 @ q0.T)
    groups = check_spectrum(spectrum)
    pair = next((g for g in groups if len(g) == 2), None)
    if pair is None:
        reals = [g[0] for g in groups]
        pair = (reals[0], reals[1])
    return h, {"spectrum": list(spectrum), "shifts": list(pair)}
