"""
Eigenvectors that would overflow
================================

An upper bidiagonal matrix with a huge superdiagonal and nearly equal
diagonal entries: plain backsubstitution overflows, the scaled solver
keeps every entry in range by carrying a power-of-two exponent per column.
"""

import numpy as np

from taskeig import from_dense, solve_eigenvectors
from taskeig.generators import ProblemSpec, generate
from taskeig.verify import unprotected_backsubstitution

n = 512
s, _ = generate(ProblemSpec("overflow-stress", n))
print(s[:3, :3])

# plain substitution for the last eigenvalue
with np.errstate(all="ignore"):
    plain = unprotected_backsubstitution(s, n - 1)
print("finite entries in plain solve:", np.isfinite(plain).sum(), "of", n)

# scaled solve, before normalization: entries plus an exponent
m = from_dense(s, tile_size=64)
raw = solve_eigenvectors(m, [n - 1], normalize=False)
print("largest stored entry:", np.abs(raw.vectors).max())
print("column exponent:", raw.exponents[0])

# normalized vector and its residual
ys = solve_eigenvectors(m, [n - 1])
y = ys.vector(0)
lam = ys.eigenvalues[0]
snorm = np.abs(s).sum(axis=1).max()
print("relative residual:", np.abs(s @ y - lam * y).max() / (snorm * np.abs(y).max()))
