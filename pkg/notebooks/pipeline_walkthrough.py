"""
From a dense matrix to eigenvectors
===================================

Walks through the four phases on a matrix whose eigenvalues we know.
"""

import numpy as np

from taskeig import (Engine, backtransform, eig, from_dense, hessenberg_reduce, schur_reduce, solve_eigenvectors,
                     to_dense)
from taskeig.generators import ProblemSpec, generate
from taskeig.verify import backward_error, match_eigenvalues, orthogonality

# a 120x120 matrix with a mix of real eigenvalues and conjugate pairs
a, truth = generate(ProblemSpec("known-spectrum", 120, seed=3))
engine = Engine(workers=2)

# phase 1: Hessenberg form, Q accumulated alongside
h, q = hessenberg_reduce(from_dense(a, tile_size=32), engine=engine)
hd = to_dense(h)
print("below subdiagonal:", np.abs(np.tril(hd, -2)).max())

# phase 2: real Schur form
dec = schur_reduce(h, q, None, engine)
s, z = to_dense(dec.S), to_dense(dec.Q)
print("sweeps:", dec.sweeps, "aed steps:", dec.aed_steps)
print("backward error / (n eps):", backward_error(a, z, s) / (120 * 2.0 ** -52))
print("orthogonality / (n eps):", orthogonality(z) / (120 * 2.0 ** -52))
print("eigenvalue mismatch:", match_eigenvalues(dec.eigenvalues, truth["spectrum"])[0])

# phase 3: eigenvectors of S, then back to the basis of A
ys = backtransform(solve_eigenvectors(dec.S, None, engine), dec.Q, engine)
worst = 0.0
for i, lam in enumerate(ys.eigenvalues):
    x = ys.vector(i)
    worst = max(worst, np.abs(a @ x - lam * x).max())
print("largest residual:", worst)

# the convenience wrapper does all of the above
vals, vecs = eig(a, tile_size=32)
print(vals.shape, vecs.shape)
