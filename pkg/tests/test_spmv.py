import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macko.density import gen_random, gen_vector, gen_worst_case
from macko.formats import (
    DenseMatrix,
    MackoFormatError,
    MackoMatrix,
    MackoParams,
    csr_from_dense,
    macko_from_dense,
)
from macko.spmv import (
    FLOAT_REL_BOUND,
    WarpConfig,
    csr_spmv,
    dense_mv,
    reference_spmv,
    relative_error,
    warp_prefix_sum,
    warp_reduce_sum,
    warp_spmv,
)
from oracles import exact_dot, scalar_dense_mv, sequential_exclusive_scan


def bits(y):
    return np.asarray(y, dtype=np.float16).view(np.uint16)


def sample(b_delta=2):
    row = np.zeros((1, 14), dtype=np.float16)
    row[0, [1, 4, 11, 12]] = [1, 2, 3, 4]
    return DenseMatrix(row), macko_from_dense(DenseMatrix(row), MackoParams(b_delta))


# -- prefix sum ----------------------------------------------------------------------

def test_prefix_sum_all_ones():
    assert warp_prefix_sum(np.ones(32, dtype=np.int64)).tolist() == list(range(32))


def test_prefix_sum_digits_of_pi():
    x = np.array([3, 1, 4, 1, 5, 9, 2, 6] + [0] * 24)
    out = warp_prefix_sum(x).tolist()
    assert out[:8] == [0, 3, 4, 8, 9, 14, 23, 25]
    assert out[8:] == [31] * 24
    assert out == sequential_exclusive_scan(x)


def test_prefix_sum_matches_scan_batched():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 1 << 12, size=(10_000, 32))
    got = warp_prefix_sum(x)
    want = np.cumsum(x, axis=1) - x
    assert np.array_equal(got, want)
    assert np.array_equal(got[:, 31] + x[:, 31], x.sum(axis=1))


@settings(max_examples=200)
@given(st.lists(st.integers(0, 8 * 256), min_size=32, max_size=32))
def test_prefix_sum_property(xs):
    assert warp_prefix_sum(np.array(xs)).tolist() == sequential_exclusive_scan(xs)


def test_prefix_sum_rejects_wrong_width():
    with pytest.raises(ValueError):
        warp_prefix_sum(np.ones(31))


def test_reduce_sum():
    x = np.arange(64, dtype=np.float32).reshape(2, 32)
    assert warp_reduce_sum(x).tolist() == [sum(range(32)), sum(range(32, 64))]


# -- dense and csr oracles ------------------------------------------------------------

def test_dense_identity_and_zero():
    v = np.array([1.5, -2, 3, 0.25], dtype=np.float16)
    assert np.array_equal(dense_mv(DenseMatrix(np.eye(4)), v), v)
    assert not np.any(dense_mv(DenseMatrix(np.zeros((3, 4))), v))


def test_dense_matches_scalar_oracle_float():
    x = gen_random(64, 64, 0.6, seed=4)
    v = gen_vector(64, seed=4)
    assert np.array_equal(bits(dense_mv(x, v)), bits(scalar_dense_mv(x.data, v)))


def test_csr_identity_and_empty_rows():
    v = np.arange(1, 6, dtype=np.float16)
    assert np.array_equal(csr_spmv(csr_from_dense(DenseMatrix(np.eye(5))), v), v)
    data = np.zeros((3, 5))
    data[1, 2] = 4
    assert csr_spmv(csr_from_dense(DenseMatrix(data)), v).tolist() == [0, 12, 0]


@pytest.mark.parametrize("engine", [dense_mv, csr_spmv, reference_spmv, warp_spmv])
def test_dimension_mismatch(engine):
    x = gen_random(4, 6, 0.5, seed=0)
    m = {dense_mv: x, csr_spmv: csr_from_dense(x)}.get(engine, macko_from_dense(x))
    with pytest.raises(ValueError):
        engine(m, np.ones(5, dtype=np.float16))


# -- reference decoder -----------------------------------------------------------------

def test_reference_sample_row_all_ones():
    _, m = sample()
    assert reference_spmv(m, np.ones(14, dtype=np.float16)).tolist() == [10]


def test_reference_zero_vector():
    m = macko_from_dense(gen_random(20, 300, 0.1, seed=1))
    assert not np.any(reference_spmv(m, np.zeros(300, dtype=np.float16)))


def test_reference_rejects_overflow():
    _, m = sample(4)
    bad = MackoMatrix(1, 10, m.params, m.values, m.packed_deltas, m.row_pointers)
    with pytest.raises(MackoFormatError):
        reference_spmv(bad, np.ones(10, dtype=np.float16))
    with pytest.raises(MackoFormatError):
        warp_spmv(bad, np.ones(10, dtype=np.float16))


# -- warp emulation ---------------------------------------------------------------------

@pytest.mark.parametrize("b_delta", [1, 2, 4, 8])
def test_warp_sample_row_ramp(b_delta):
    x, m = sample(b_delta)
    v = np.arange(1, 15, dtype=np.float16)
    y = warp_spmv(m, v)
    assert y.tolist() == [1 * 2 + 2 * 5 + 3 * 12 + 4 * 13]
    assert np.array_equal(bits(y), bits(reference_spmv(m, v)))


@pytest.mark.parametrize("b_delta", [1, 2, 4, 8])
def test_warp_partial_steps(b_delta):
    # row lengths chosen so stored entries straddle 256-element steps and
    # rows start at offsets that are not multiples of 8
    rng = np.random.default_rng(b_delta)
    data = np.zeros((7, 1500), dtype=np.float16)
    for r, n in enumerate([1, 255, 257, 3, 511, 0, 700]):
        cols = rng.choice(1500, size=n, replace=False)
        data[r, cols] = rng.integers(1, 9, size=n)
    m = macko_from_dense(DenseMatrix(data), MackoParams(b_delta))
    assert any(p % 8 for p in m.row_pointers.tolist())
    v = rng.integers(-8, 9, size=1500).astype(np.float16)
    want = exact_dot(data, v)
    assert np.array_equal(bits(warp_spmv(m, v)), bits(want))
    assert np.array_equal(bits(warp_spmv(m, v, WarpConfig(roma=False))), bits(want))


def int_cases():
    rng = np.random.default_rng(2024)
    kinds = ["random", "empty_rows", "single_row", "single_col", "dense", "zero", "worst"]
    for i in range(70):
        kind = kinds[i % len(kinds)]
        b_delta = [1, 2, 4, 8][i % 4]
        R, C = int(rng.integers(1, 40)), int(rng.integers(1, 700))
        if kind == "single_row":
            R = 1
        if kind == "single_col":
            C = 1
        if kind == "worst":
            run = 1 << b_delta
            x = gen_worst_case(R, 4 * (run + 1), 1 - 4 * run / (4 * (run + 1)), b_delta,
                               seed=i, mode="int")
        elif kind == "zero":
            x = DenseMatrix(np.zeros((R, C)))
        elif kind == "dense":
            x = gen_random(R, C, 1.0, seed=i, mode="int")
        else:
            x = gen_random(R, C, float(rng.uniform(0.01, 0.9)), seed=i, mode="int")
            if kind == "empty_rows":
                d = x.data.copy()
                d[::3] = 0
                x = DenseMatrix(d)
        yield pytest.param(x, b_delta, id=f"{i}-{kind}-b{b_delta}")


@pytest.mark.parametrize("x, b_delta", list(int_cases()))
def test_all_engines_agree_bit_exactly(x, b_delta):
    v = gen_vector(x.cols, seed=x.rows, mode="int")
    m = macko_from_dense(x, MackoParams(b_delta))
    want = bits(exact_dot(x.data, v))
    assert np.array_equal(bits(dense_mv(x, v)), want)
    assert np.array_equal(bits(csr_spmv(csr_from_dense(x), v)), want)
    assert np.array_equal(bits(reference_spmv(m, v)), want)
    assert np.array_equal(bits(warp_spmv(m, v)), want)


@pytest.mark.parametrize("b_delta", [1, 2, 4, 8])
def test_traced_columns_match_sequential_decode(b_delta):
    x = gen_random(12, 900, 0.3, seed=b_delta)
    m = macko_from_dense(x, MackoParams(b_delta))
    cols = m.column_indices()
    seen = {}
    warp_spmv(m, gen_vector(900, seed=0), trace=lambda t: seen.setdefault(t.row, []).append(t))
    for r in range(m.rows):
        lo, hi = int(m.row_pointers[r]), int(m.row_pointers[r + 1])
        got = np.concatenate([t.columns[t.active] for t in seen.get(r, [])]) if hi > lo else []
        assert np.array_equal(got, cols[lo:hi])
        steps = seen.get(r, [])
        assert [t.step for t in steps] == list(range(len(steps)))
        assert steps == [] or steps[0].base == -1


def test_roma_elements_before_row_start_never_contribute():
    # fill the previous row with huge values: any leak would change the output
    data = np.zeros((2, 64), dtype=np.float16)
    data[0, :5] = 1000
    data[1, [3, 40]] = [1, 2]
    m = macko_from_dense(DenseMatrix(data), MackoParams(4))
    assert m.row_pointers[1] % 8
    v = np.ones(64, dtype=np.float16)
    traces = []
    y = warp_spmv(m, v, trace=traces.append)
    assert np.array_equal(bits(y), bits(warp_spmv(m, v, WarpConfig(roma=False))))
    assert y.tolist() == [5000, 3]
    first = next(t for t in traces if t.row == 1)
    # row 1 stores 3, 19 (pad), 35 (pad), 40 and starts 5 entries into an 8-wide load
    assert first.active.sum() == 4 and not first.active.flat[:5].any()
    assert first.columns[first.active].tolist() == [3, 19, 35, 40]


def test_roma_matches_no_roma_on_random_float_matrix():
    x = gen_random(300, 1000, 0.2, seed=8)
    v = gen_vector(1000, seed=8)
    for b_delta in (1, 2, 4, 8):
        m = macko_from_dense(x, MackoParams(b_delta))
        assert np.array_equal(bits(warp_spmv(m, v)), bits(warp_spmv(m, v, WarpConfig(roma=False))))


def test_deterministic_across_workers_and_blocks():
    x = gen_random(700, 800, 0.4, seed=3)
    v = gen_vector(800, seed=3)
    m = macko_from_dense(x)
    base = bits(warp_spmv(m, v))
    for workers, block in [(1, 2048), (4, 64), (8, 7)]:
        got = warp_spmv(m, v, WarpConfig(row_block=block), workers=workers)
        assert np.array_equal(bits(got), base)


def test_float_error_bound_small():
    x = gen_random(256, 2048, 0.5, seed=5)
    v = gen_vector(2048, seed=5)
    y = warp_spmv(macko_from_dense(x), v)
    assert relative_error(y, dense_mv(x, v), x, v).max() <= FLOAT_REL_BOUND


def test_warp_config_is_fixed_shape():
    with pytest.raises(ValueError):
        WarpConfig(warp_size=16)
    assert WarpConfig().step_elems == 256
