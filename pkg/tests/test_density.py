import math

import numpy as np
import pytest

from macko.density import (
    Format,
    FormatCostModel,
    crossover,
    density_grid,
    effd,
    expected_pad_count,
    gen_best_case,
    gen_random,
    gen_worst_case,
    measured_effd,
    row_pointer_term,
)
from macko.formats import MackoFormatError, MackoParams, macko_from_dense, padding_count

CSR16 = FormatCostModel(Format.CSR16)
CSR32 = FormatCostModel(Format.CSR32)
BITMASK = FormatCostModel(Format.BITMASK)
BEST = FormatCostModel(Format.MACKO_BEST)
WORST = FormatCostModel(Format.MACKO_WORST)
EXPECTED = FormatCostModel(Format.MACKO_EXPECTED)
DENSE = FormatCostModel(Format.DENSE)


def test_effd_examples():
    assert effd(CSR16, 0.5) == pytest.approx(1.0)
    assert effd(BEST, 0.5) == pytest.approx(0.625)
    assert 1 / effd(BEST, 0.5) == pytest.approx(1.6)
    assert effd(BITMASK, 0.2) == pytest.approx(0.2625)
    assert effd(EXPECTED, 0.4) == pytest.approx(0.5, abs=1e-3)


def test_dense_is_one_everywhere():
    assert all(effd(DENSE, d) == 1.0 for d in density_grid(0.05))


def test_tiled_csl_tile_term():
    model = FormatCostModel(Format.TILED_CSL)
    R = C = 12288
    nt = (R // 128) * (C // 64)
    assert effd(model, 0.5, R, C) == pytest.approx(1.0 + 32 * nt / (R * C))


def test_effd_rejects_bad_density():
    with pytest.raises(ValueError):
        effd(BEST, 1.5)
    with pytest.raises(ValueError):
        effd(BEST, -0.1)


def test_expected_limits():
    assert effd(EXPECTED, 1.0) == pytest.approx(1.25)
    # d -> 0: d * z / (1 - z) -> 1/16, times 20/16
    assert effd(EXPECTED, 0.0) == pytest.approx(effd(EXPECTED, 1e-7), rel=1e-5)


@pytest.mark.parametrize("b_delta", [1, 2, 4, 8])
def test_positive(b_delta):
    for f in Format:
        model = FormatCostModel(f, b_delta=b_delta)
        assert all(effd(model, d, 4096, 4096) > 0 for d in density_grid(0.05)[1:])
        assert effd(model, 0.0, 4096, 4096) >= 0


def test_expected_is_monotone_above_005():
    ds = np.linspace(0.05, 1.0, 500)
    vals = [effd(EXPECTED, d) for d in ds]
    assert np.all(np.diff(vals) > 0)


def test_crossovers():
    assert crossover(EXPECTED.effd, BITMASK.effd, 0.1, 0.5) == pytest.approx(0.23, abs=0.01)
    assert crossover(EXPECTED.effd, lambda d: 0.5, 0.2, 0.6) == pytest.approx(0.40, abs=0.01)
    assert crossover(CSR32.effd, lambda d: 0.5, 0.01, 0.9) == pytest.approx(1 / 6, abs=1e-9)
    # d * 20/16 = 1 once the padding term has vanished
    assert crossover(EXPECTED.effd, lambda d: 1.0, 0.5, 0.99) == pytest.approx(0.8, abs=1e-6)


def test_bitmask_wins_only_above_crossover_on_grid():
    grid = [d for d in density_grid(0.01) if d >= 0.05]
    first = next(d for d in grid if effd(EXPECTED, d) >= effd(BITMASK, d))
    assert first == pytest.approx(0.23, abs=0.01)


# -- measured density -------------------------------------------------------------

def test_measured_dense_matrix():
    m = macko_from_dense(gen_random(4096, 4096, 1.0, seed=0), MackoParams(4))
    assert padding_count(m) == 0
    assert measured_effd(m) == pytest.approx(1.25 + row_pointer_term(4096, 4096))
    assert measured_effd(m, row_pointers=False) == 1.25


def test_measured_random_tracks_expected():
    m = macko_from_dense(gen_random(4096, 4096, 0.5, seed=1), MackoParams(4))
    assert measured_effd(m) == pytest.approx(effd(EXPECTED, 0.5), rel=0.01)


@pytest.mark.parametrize("R, C, d, b_delta", [
    (1, 32, 0.5, 4), (8, 4096, 0.5, 4), (3, 340, 0.2, 4), (5, 64, 0.75, 2), (2, 96, 1 / 3, 1),
])
def test_worst_case_measured_equals_closed_form(R, C, d, b_delta):
    m = macko_from_dense(gen_worst_case(R, C, d, b_delta), MackoParams(b_delta))
    model = FormatCostModel(Format.MACKO_WORST, b_delta=b_delta)
    assert measured_effd(m) == pytest.approx(effd(model, d) + row_pointer_term(R, C), rel=1e-12)


@pytest.mark.parametrize("d", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_measured_between_best_and_worst(d):
    R, C = 16, 4096
    x = gen_random(R, C, d, seed=3)
    actual_d = np.count_nonzero(x.data) / (R * C)
    m = macko_from_dense(x, MackoParams(4))
    assert effd(BEST, actual_d) <= measured_effd(m)
    assert measured_effd(m) <= effd(WORST, actual_d) + row_pointer_term(R, C)


def test_best_case_pattern_has_no_padding():
    m = macko_from_dense(gen_best_case(64, 4096, 0.5), MackoParams(4))
    assert padding_count(m) == 0
    assert measured_effd(m, row_pointers=False) == pytest.approx(0.625)


# -- generators --------------------------------------------------------------------

def test_random_extremes():
    assert not np.any(gen_random(16, 16, 0.0, seed=5).data)
    assert np.all(gen_random(16, 16, 1.0, seed=5).data != 0)


def test_random_density_within_three_sigma():
    R, C, d = 1024, 4096, 0.3
    nnz = np.count_nonzero(gen_random(R, C, d, seed=11).data)
    n = R * C
    assert abs(nnz - n * d) <= 3 * math.sqrt(n * d * (1 - d))


def test_random_is_deterministic_per_seed():
    a = gen_random(33, 70, 0.4, seed=9, mode="int")
    assert a == gen_random(33, 70, 0.4, seed=9, mode="int")
    assert not a == gen_random(33, 70, 0.4, seed=10, mode="int")


def test_int_mode_values():
    vals = gen_random(64, 64, 0.5, seed=2, mode="int").data
    nz = vals[vals != 0]
    assert np.all(nz == np.round(nz)) and np.abs(nz).max() <= 8


def test_worst_case_small_row():
    x = gen_worst_case(1, 32, 0.5, 4)
    assert np.array_equal(x.data[0] != 0, np.r_[np.zeros(16, bool), np.ones(16, bool)])
    assert padding_count(macko_from_dense(x, MackoParams(4))) == 1


def test_worst_case_full_density_has_no_pads():
    assert padding_count(macko_from_dense(gen_worst_case(4, 64, 1.0, 4))) == 0


def test_worst_case_large_exact():
    m = macko_from_dense(gen_worst_case(64, 4096, 0.5, 4), MackoParams(4))
    assert padding_count(m) == 64 * 4096 * 0.5 / 16 == 8192


@pytest.mark.parametrize("C, d", [(32, 0.6), (17, 0.5), (16, 0.0)])
def test_worst_case_infeasible(C, d):
    with pytest.raises(MackoFormatError):
        gen_worst_case(2, C, d, 4)


# -- expected padding ---------------------------------------------------------------

def test_expected_pad_count_closed_form():
    assert expected_pad_count(10, 10, 1.0, 4) == 0
    z = 0.5**16
    assert z == pytest.approx(1.526e-5, rel=1e-3)
    assert expected_pad_count(1024, 4096, 0.5, 4) == pytest.approx(1024 * 4096 * 0.5 * z / (1 - z))


def test_expected_pad_count_monte_carlo():
    R, C, d = 1024, 4096, 0.1
    measured = [padding_count(macko_from_dense(gen_random(R, C, d, seed=s), MackoParams(4)))
                for s in range(20)]
    assert np.mean(measured) == pytest.approx(expected_pad_count(R, C, d, 4), rel=0.02)
