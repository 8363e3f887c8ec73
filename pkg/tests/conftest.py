import numpy as np
import pytest
from hypothesis import settings

from taskeig.generators import rng_for, uniform

EPS = 2.0 ** -52

settings.register_profile("seeded", derandomize=True, deadline=None, database=None, print_blob=False)
settings.load_profile("seeded")


def random_matrix(n, seed, m=None):
    return uniform(rng_for(seed), (n, n if m is None else m))


@pytest.fixture
def tmp_matrix_path(tmp_path):
    return tmp_path / "a.teig"


_schur_cache = {}


def schur_form(n, seed, tile_size=None):
    """(A, S, Q) from the full pipeline on a seeded random matrix; cached."""
    from taskeig.hessenberg import hessenberg_reduce
    from taskeig.schur import schur_reduce
    from taskeig.tiled import from_dense, to_dense

    key = (n, seed, tile_size)
    if key not in _schur_cache:
        a = random_matrix(n, seed)
        h, q = hessenberg_reduce(from_dense(a, tile_size=tile_size))
        d = schur_reduce(h, q)
        _schur_cache[key] = (a, to_dense(d.S), to_dense(d.Q))
    a, s, q = _schur_cache[key]
    return a, s.copy(), q.copy()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
