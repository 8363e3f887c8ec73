import numpy as np
import pytest

from taskeig.tiled import TileHandle, TiledMatrix, default_tile_size, from_dense, identity, to_dense, window_view
from conftest import random_matrix


def test_from_dense_flat_row_major():
    m = from_dense([1, 2, 3, 4, 5, 6], rows=2, cols=3, tile_size=2)
    assert m.grid == (1, 2)
    np.testing.assert_array_equal(to_dense(m), [[1, 2, 3], [4, 5, 6]])
    # edge tile keeps its true size
    assert m.tile(0, 1).shape == (2, 1)


def test_tiles_are_column_major_views():
    m = from_dense(random_matrix(10, 1), tile_size=4)
    t = m.tile(1, 2)
    assert t.base is not None and np.shares_memory(t, m.data)
    assert m.data.flags.f_contiguous


@pytest.mark.parametrize("n,ts", [(1, 2), (7, 3), (16, 4), (33, 8)])
def test_round_trip_bitwise(n, ts):
    a = random_matrix(n, n)
    b = to_dense(from_dense(a, tile_size=ts))
    assert b.tobytes() == a.tobytes()


def test_to_dense_is_a_copy():
    m = from_dense(np.eye(4), tile_size=2)
    d = to_dense(m)
    d[0, 0] = 7.0
    assert m.data[0, 0] == 1.0


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        from_dense([1.0, 2.0, 3.0], rows=2, cols=2)
    with pytest.raises(ValueError):
        from_dense(np.zeros((2, 3)), rows=3, cols=2)
    with pytest.raises(ValueError):
        TiledMatrix(0, 3, 4)
    with pytest.raises(ValueError):
        TiledMatrix(3, 3, 1)


def test_window_three_to_five_touches_four_tiles():
    m = from_dense(np.zeros((8, 8)), tile_size=4)
    pieces = window_view(m, (3, 5), (3, 5))
    handles = [p[0] for p in pieces]
    assert handles == [TileHandle(m.id, 0, 0), TileHandle(m.id, 0, 1), TileHandle(m.id, 1, 0), TileHandle(m.id, 1, 1)]
    assert pieces[0][1:] == ((3, 4), (3, 4))
    assert pieces[3][1:] == ((0, 1), (0, 1))
    assert m.tiles_in(3, 5, 3, 5) == handles


def test_window_outside_matrix():
    m = from_dense(np.zeros((5, 5)), tile_size=4)
    with pytest.raises(ValueError):
        window_view(m, (3, 6), (0, 2))
    with pytest.raises(ValueError):
        window_view(m, (2, 2), (0, 2))


def test_handle_out_of_grid():
    m = identity(5, 2)
    assert m.handle(2, 2) == TileHandle(m.id, 2, 2)
    with pytest.raises(ValueError):
        m.handle(3, 0)


def test_default_tile_size():
    assert default_tile_size(10) == 32
    assert default_tile_size(500) == 64
    assert default_tile_size(5000) == 128
    assert all(default_tile_size(n) % 8 == 0 for n in range(1, 1200, 37))


def test_copy_is_independent():
    m = identity(6, 4)
    c = m.copy()
    c.data[0, 0] = 3.0
    assert m.data[0, 0] == 1.0 and c.id != m.id


def test_row_blocks_split_at_tile_edges():
    m = identity(10, 4)
    assert m.row_blocks(2, 9) == [(2, 4), (4, 8), (8, 9)]
    assert m.col_blocks(4, 8) == [(4, 8)]
