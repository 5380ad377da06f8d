"""Effective-density models for sparse formats and matrix pattern generators.

Effective density is total storage bits over ``R * C * b_val``; a dense
matrix scores exactly 1. The closed forms drop row pointers and other
terms that vanish for large matrices. :func:`measured_effd` counts them.

Expected MACKO padding: with entries nonzero independently at rate ``d``
and ``z = (1 - d) ** 2**b_delta``, each nonzero's gap forces
``z / (1 - z)`` pads on average, giving ``R*C*d*z/(1-z)`` pads in total.
Note that this is a count per *nonzero*; reading it as a per-zero
probability would introduce an extra ``(1 - d)`` factor that simulation
does not support.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from macko.formats import DenseMatrix, MackoFormatError, MackoMatrix

TILE_ROWS = 128
TILE_COLS = 64


class Format(str, enum.Enum):
    CSR32 = "CSR32"
    CSR16 = "CSR16"
    TILED_CSL = "TiledCSL"
    BITMASK = "Bitmask"
    MACKO_BEST = "MackoBest"
    MACKO_WORST = "MackoWorst"
    MACKO_EXPECTED = "MackoExpected"
    DENSE = "Dense"


@dataclass(frozen=True)
class FormatCostModel:
    format: Format
    b_val: int = 16
    b_delta: int = 4
    tile_rows: int = TILE_ROWS
    tile_cols: int = TILE_COLS

    def __post_init__(self) -> None:
        object.__setattr__(self, "format", Format(self.format))

    def tile_count(self, R: int, C: int) -> int:
        return math.ceil(R / self.tile_rows) * math.ceil(C / self.tile_cols)

    def effd(self, d: float, R: int = 1, C: int = 1) -> float:
        return effd(self, d, R, C)


def padding_ratio(d: float, b_delta: int) -> float:
    """Expected pads per nonzero, ``z / (1 - z)``; zero at ``d == 1``."""
    if d <= 0.0:
        return math.inf
    z = (1.0 - d) ** (1 << b_delta)
    return z / (1.0 - z)


def effd(model: FormatCostModel, d: float, R: int = 1, C: int = 1) -> float:
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {d}")
    f, bv, bd = model.format, model.b_val, model.b_delta
    macko_width = (bv + bd) / bv
    if f is Format.DENSE:
        return 1.0
    if f is Format.CSR32:
        return d * (32 + bv) / bv
    if f is Format.CSR16:
        return d * (16 + bv) / bv
    if f is Format.TILED_CSL:
        return d * (16 + bv) / bv + 32 * model.tile_count(R, C) / (R * C)
    if f is Format.BITMASK:
        return d + 1 / bv
    if f is Format.MACKO_BEST:
        return d * macko_width
    if f is Format.MACKO_WORST:
        return (d + (1 - d) / (1 << bd)) * macko_width
    if f is Format.MACKO_EXPECTED:
        if d == 0.0:
            # Limit of d * (1 + z/(1-z)) as d -> 0 is 1 / 2**b_delta.
            return macko_width / (1 << bd)
        return d * (1 + padding_ratio(d, bd)) * macko_width
    raise ValueError(f"unknown format {f!r}")


def macko_storage_bits(m: MackoMatrix, row_pointers: bool = True) -> int:
    """Values plus packed-delta bits for ``pad_nnz`` entries, without tail alignment."""
    bits = m.pad_nnz * (m.params.b_val + m.params.b_delta)
    if row_pointers:
        bits += 32 * (m.rows + 1)
    return bits


def measured_effd(m: MackoMatrix, row_pointers: bool = True) -> float:
    return macko_storage_bits(m, row_pointers) / (m.rows * m.cols * m.params.b_val)


def row_pointer_term(R: int, C: int, b_val: int = 16) -> float:
    return 32 * (R + 1) / (R * C * b_val)


def expected_pad_count(R: int, C: int, d: float, b_delta: int) -> float:
    if d == 0.0:
        return 0.0
    return R * C * d * padding_ratio(d, b_delta)


def density_grid(step: float = 0.01, lo: float = 0.0, hi: float = 1.0) -> list[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + k * step, 12) for k in range(n + 1)]


def effd_curves(grid, models, R: int = 12288, C: int = 12288) -> list[list[float]]:
    """One row ``[d, effd(model_1, d), ...]`` per grid point."""
    return [[d] + [effd(m, d, R, C) for m in models] for d in grid]


def crossover(f, g, lo: float, hi: float, tol: float = 1e-12) -> float:
    """The ``d`` in ``[lo, hi]`` where ``f(d) - g(d)`` changes sign (Brent's method)."""
    def h(d: float) -> float:
        return f(d) - g(d)

    if h(lo) * h(hi) > 0:
        raise ValueError(f"no sign change of f - g on [{lo}, {hi}]")
    return float(optimize.brentq(h, lo, hi, xtol=tol))


# -- generators ---------------------------------------------------------------

def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    mask_seq, value_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(mask_seq), np.random.default_rng(value_seq)


def _draw_values(rng: np.random.Generator, n: int, mode: str) -> np.ndarray:
    if mode == "int":
        mags = rng.integers(1, 9, size=n)
        signs = rng.integers(0, 2, size=n) * 2 - 1
        return (mags * signs).astype(np.float16)
    if mode == "float":
        # |x| ~ U[0.25, 1) with random sign; never rounds to zero in float16.
        mags = rng.uniform(0.25, 1.0, size=n)
        signs = rng.integers(0, 2, size=n) * 2 - 1
        return (mags * signs).astype(np.float16)
    raise ValueError(f"mode must be 'int' or 'float', got {mode!r}")


def random_mask_rows(R: int, C: int, d: float, seed: int, block_rows: int = 256):
    """Yield ``(row0, mask_block)`` pairs of the nonzero pattern used by :func:`gen_random`.

    Row blocks let large shapes be analysed without materialising the matrix.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {d}")
    mask_rng, _ = _streams(seed)
    for r0 in range(0, R, block_rows):
        n = min(block_rows, R - r0)
        yield r0, mask_rng.random((n, C), dtype=np.float32) < np.float32(d)


def gen_random(R: int, C: int, d: float, seed: int = 0, mode: str = "float") -> DenseMatrix:
    """Each entry nonzero with probability ``d``, independently.

    Nonzero values: ``mode="float"`` draws ``sign * U[0.25, 1)``; ``mode="int"``
    draws integers in ``[-8, 8] \\ {0}``, which every engine multiplies and
    sums exactly.
    """
    _, value_rng = _streams(seed)
    data = np.zeros((R, C), dtype=np.float16)
    for r0, mask in random_mask_rows(R, C, d, seed):
        block = data[r0 : r0 + mask.shape[0]]
        block[mask] = _draw_values(value_rng, int(mask.sum()), mode)
    return DenseMatrix(data)


def gen_vector(n: int, seed: int = 0, mode: str = "float") -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    if mode == "int":
        return rng.integers(-8, 9, size=n).astype(np.float16)
    if mode == "float":
        return rng.uniform(-1.0, 1.0, size=n).astype(np.float16)
    raise ValueError(f"mode must be 'int' or 'float', got {mode!r}")


def worst_case_row(C: int, d: float, b_delta: int) -> np.ndarray:
    """Boolean row pattern whose zeros come in runs of exactly ``2**b_delta``,
    each run closed by a nonzero so it forces exactly one pad."""
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {d}")
    run = 1 << b_delta
    zeros = C * (1.0 - d)
    n_zero = round(zeros)
    if abs(zeros - n_zero) > 1e-9 or n_zero % run:
        raise MackoFormatError(
            f"infeasible worst case: C*(1-d)={zeros:g} is not a multiple of {run}"
        )
    n_runs = n_zero // run
    if n_runs > C - n_zero:
        raise MackoFormatError(
            f"infeasible worst case: {n_runs} zero runs need as many nonzeros, have {C - n_zero}"
        )
    row = np.ones(C, dtype=bool)
    for k in range(n_runs):
        row[k * (run + 1) : k * (run + 1) + run] = False
    return row


def gen_worst_case(R: int, C: int, d: float, b_delta: int = 4, seed: int = 0,
                   mode: str = "float") -> DenseMatrix:
    pattern = np.broadcast_to(worst_case_row(C, d, b_delta), (R, C))
    _, value_rng = _streams(seed)
    data = np.zeros((R, C), dtype=np.float16)
    data[pattern] = _draw_values(value_rng, int(pattern.sum()), mode)
    return DenseMatrix(data)


def gen_best_case(R: int, C: int, d: float, b_delta: int = 4, seed: int = 0,
                  mode: str = "float") -> DenseMatrix:
    """Nonzeros spread evenly so no gap exceeds ``2**b_delta`` whenever
    ``d >= 2**-b_delta``; no padding is needed."""
    nnz_row = round(C * d)
    pattern = np.zeros(C, dtype=bool)
    if nnz_row:
        pattern[np.floor(np.arange(nnz_row) * (C / nnz_row)).astype(np.int64)] = True
    full = np.broadcast_to(pattern, (R, C))
    _, value_rng = _streams(seed)
    data = np.zeros((R, C), dtype=np.float16)
    data[full] = _draw_values(value_rng, int(full.sum()), mode)
    return DenseMatrix(data)
