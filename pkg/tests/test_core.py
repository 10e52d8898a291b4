import io
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lppgeo.core import (
    BRUTE_FORCE_CAP,
    DiagonalNotKept,
    SizeOverflowError,
    brute_force_G,
    compute_field,
    dense_G,
    diagonal_vectors,
    dump_parents,
    load_parents,
    monotone_paths,
    row_bytes,
)
from lppgeo.env import EnvSpec, time_grid

# times indexed [x, y]: w(0,0)=1, w(1,0)=2, w(0,1)=3, w(1,1)=1
FIXTURE = np.array([[1.0, 3.0], [2.0, 1.0]])


def padded_fixture(size=4, fill=1.0):
    g = np.full((size, size), fill)
    g[:2, :2] = FIXTURE
    return g


def test_fixture_passage_times():
    f = compute_field(padded_fixture(), 2, keep_m=2)
    assert f.G(0, 0) == 1.0
    assert f.G(1, 0) == 3.0
    assert f.G(0, 1) == 4.0
    assert f.G(1, 1) == 5.0
    assert f.parent(1, 1) == (0, 1)
    assert f.parent_bit(1, 1) == 0  # left neighbour


def test_fixture_square_corner():
    f = compute_field(FIXTURE, 1, square=True)
    assert f.top_G[1] == 5.0 and f.right_G[1] == 5.0
    assert dense_G(f)[1, 1] == 5.0


def test_brute_force_fixture():
    bf = brute_force_G(FIXTURE)
    np.testing.assert_array_equal(bf.G, [[1.0, 4.0], [3.0, 5.0]])
    assert (bf.count == 1).all()


def test_path_count_binomial():
    assert sum(1 for _ in monotone_paths(2, 2)) == 6
    bf = brute_force_G(np.ones((4, 5)))
    for x in range(4):
        for y in range(5):
            assert bf.paths[x, y] == math.comb(x + y, x)


def test_brute_force_cap():
    with pytest.raises(ValueError):
        brute_force_G(np.ones((BRUTE_FORCE_CAP + 1, 2)))


def test_axis_prefix_sums():
    spec = EnvSpec(17)
    N = 40
    f = compute_field(spec, N, keep_m=N)
    t = time_grid(spec, N + 1)
    for k in range(N + 1):
        assert f.G(k, 0) == pytest.approx(t[: k + 1, 0].sum(), rel=1e-13)
        assert f.G(0, k) == pytest.approx(t[0, : k + 1].sum(), rel=1e-13)
        if k:
            assert f.parent(k, 0) == (k - 1, 0)
            assert f.parent(0, k) == (0, k - 1)


@pytest.mark.parametrize("seed", range(100))
def test_dp_matches_brute_force(seed):
    N = 5
    t = time_grid(EnvSpec(seed), N + 1)
    f = compute_field(t, N, keep_m=N, square=True)
    bf = brute_force_G(t)
    G = dense_G(f)
    np.testing.assert_allclose(G, bf.G, rtol=1e-12, atol=0)
    for x in range(N + 1):
        for y in range(N + 1 - x):
            assert f.G(x, y) == G[x, y]
    assert (bf.count == 1).all()


def test_dp_recursion_and_parent_rule():
    spec = EnvSpec(3)
    N = 30
    f = compute_field(spec, N, keep_m=N)
    t = time_grid(spec, N + 1)
    for x in range(1, N):
        for y in range(1, N - x + 1):
            left, below = f.G(x - 1, y), f.G(x, y - 1)
            assert f.G(x, y) == t[x, y] + max(left, below)
            assert f.parent_bit(x, y) == int(below > left)
            px, py = f.parent(x, y)
            assert f.G(px, py) < f.G(x, y)


def test_ties_go_left():
    f = compute_field(np.ones((3, 3)), 2, keep_m=2, square=True)
    assert f.G(0, 1) == f.G(1, 0) == 2.0
    assert f.parent_bit(1, 1) == 0
    assert f.parent(1, 1) == (0, 1)


def test_origin_bit_zero():
    f = compute_field(EnvSpec(5), 10)
    assert f.parent_bit(0, 0) == 0


def test_diagonal_vectors_fixture():
    f = compute_field(padded_fixture(), 2, keep_m=2)
    dv = diagonal_vectors(f, 1)
    np.testing.assert_array_equal(dv.G, [3.0, 4.0])
    np.testing.assert_array_equal(dv.X, [2.0, 3.0])
    np.testing.assert_array_equal(dv.Y, [1.0, 1.0])


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=1, max_value=12))
@settings(max_examples=40, deadline=None)
def test_diagonal_decomposition(seed, m):
    f = compute_field(EnvSpec(seed), 12, keep_m=12)
    dv = diagonal_vectors(f, m)
    assert np.all(dv.G == dv.X + dv.Y)
    assert np.all(dv.X >= 0) and np.all(dv.Y >= 0)
    if m == 1:
        w00 = f.time(0, 0)
        np.testing.assert_array_equal(dv.Y, [w00, w00])
    # Y of an axis site is G of its axis predecessor
    assert dv.Y[0] == f.G(m - 1, 0)
    assert dv.Y[-1] == f.G(0, m - 1)


def test_diagonal_not_kept():
    f = compute_field(EnvSpec(1), 10, keep_m=2)
    with pytest.raises(DiagonalNotKept, match="not kept"):
        diagonal_vectors(f, 3)
    with pytest.raises(DiagonalNotKept):
        f.G(2, 2)
    assert len(f.diagonal(10)) == 11


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=-6, max_value=6))
@settings(max_examples=25, deadline=None)
def test_power_of_two_scaling_keeps_parents(seed, k):
    a = compute_field(EnvSpec(seed), 64)
    b = compute_field(EnvSpec(seed, 2.0**k), 64)
    np.testing.assert_array_equal(a.parents, b.parents)
    np.testing.assert_array_equal(b.diag_G, 2.0**k * a.diag_G)


@pytest.mark.parametrize("square", [False, True])
def test_workers_and_tiles_bit_identical(square):
    spec = EnvSpec(2718)
    N = 700
    ref = compute_field(spec, N, square=square, workers=1)
    for workers, tile in [(4, 256), (3, 64), (1, 8)]:
        f = compute_field(spec, N, square=square, workers=workers, tile=tile)
        np.testing.assert_array_equal(f.parents, ref.parents)
        np.testing.assert_array_equal(f.diag_G, ref.diag_G)
        if square:
            np.testing.assert_array_equal(f.top_G, ref.top_G)


def test_explicit_times_match_env():
    spec = EnvSpec(8)
    N = 50
    a = compute_field(spec, N, keep_m=N)
    b = compute_field(time_grid(spec, N + 1), N, keep_m=N)
    np.testing.assert_array_equal(a.parents, b.parents)
    np.testing.assert_array_equal(a.kept, b.kept)


def test_explicit_times_must_cover_box():
    with pytest.raises(ValueError):
        compute_field(np.ones((3, 3)), 3)


def test_dump_format_and_round_trip():
    f = compute_field(EnvSpec(4), 19)
    buf = io.BytesIO()
    dump_parents(f, buf)
    raw = buf.getvalue()
    assert raw[:4] == b"LPPT"
    assert raw[4] == 1
    assert struct.unpack("<Q", raw[5:13])[0] == 19
    assert len(raw) == 13 + 20 * row_bytes(19)
    N, rows = load_parents(io.BytesIO(raw))
    assert N == 19
    np.testing.assert_array_equal(rows, f.parents)
    # row y, bit x (LSB first)
    bits = f.parent_bits()
    for x in range(20):
        for y in range(20 - x):
            assert (rows[y, x // 8] >> (x % 8)) & 1 == bits[x, y] == f.parent_bit(x, y)


def test_load_rejects_garbage():
    with pytest.raises(ValueError):
        load_parents(io.BytesIO(b"NOPE\x01" + bytes(8)))
    with pytest.raises(ValueError):
        load_parents(io.BytesIO(b"LPPT\x01" + struct.pack("<Q", 100) + bytes(3)))


def test_size_overflow():
    with pytest.raises(SizeOverflowError):
        compute_field(EnvSpec(1), 200000)
