"""Dense, CSR and MACKO matrix containers and the lossless conversions among them.

MACKO stores every row as a run of 16-bit values aligned one-to-one with
fixed-width column deltas. A delta is the gap to the previous stored column,
starting from a virtual column -1, and must lie in ``[1, 2**b_delta]``. Gaps
that are too wide are bridged by explicit zero-valued padding entries.

Delta packing layout: ``8 // b_delta`` deltas per byte, element ``i`` sits at
bit offset ``(i % per_byte) * b_delta`` of byte ``i // per_byte`` (low bits
first), and the stored codeword is ``delta - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALIGN_BYTES = 16
VALID_B_DELTA = (1, 2, 4, 8)


class MackoFormatError(ValueError):
    """Raised when a matrix violates the invariants of its container."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _round_up(n: int, multiple: int) -> int:
    return -(-n // multiple) * multiple


@dataclass(frozen=True)
class DenseMatrix:
    """Row-major float16 matrix; ground truth for conversions and oracles."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise MackoFormatError(f"dense data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise MackoFormatError(f"dense matrix needs R, C >= 1, got {data.shape}")
        object.__setattr__(self, "data", _frozen(data.astype(np.float16, copy=False)))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        # Bit-level comparison so that -0.0 and +0.0 are told apart.
        return self.shape == other.shape and np.array_equal(
            self.data.view(np.uint16), other.data.view(np.uint16)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class CsrMatrix:
    rows: int
    cols: int
    values: np.ndarray
    column_indices: np.ndarray
    row_pointers: np.ndarray
    index_width: int = 32

    def __post_init__(self) -> None:
        values = np.asarray(self.values).astype(np.float16, copy=False)
        col_idx = np.asarray(self.column_indices, dtype=np.int64)
        row_ptr = np.asarray(self.row_pointers, dtype=np.int64)
        if self.rows < 1 or self.cols < 1:
            raise MackoFormatError("CSR matrix needs R, C >= 1")
        if self.index_width not in (16, 32):
            raise MackoFormatError(f"index_width must be 16 or 32, got {self.index_width}")
        if row_ptr.shape != (self.rows + 1,):
            raise MackoFormatError("row_pointers must have R+1 entries")
        nnz = values.shape[0]
        if col_idx.shape != (nnz,):
            raise MackoFormatError("values and column_indices differ in length")
        if row_ptr[0] != 0 or row_ptr[-1] != nnz or np.any(np.diff(row_ptr) < 0):
            raise MackoFormatError("row_pointers must run monotonically from 0 to nnz")
        if nnz:
            if col_idx.min() < 0 or col_idx.max() >= self.cols:
                raise MackoFormatError("column index out of range")
            row_start = np.zeros(nnz, dtype=bool)
            row_start[row_ptr[:-1][row_ptr[:-1] < nnz]] = True
            steps = np.diff(col_idx)
            if np.any((steps <= 0) & ~row_start[1:]):
                raise MackoFormatError("column indices not strictly increasing within a row")
            if np.any(values == 0):
                raise MackoFormatError("CSR stores an explicit zero")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "column_indices", _frozen(col_idx))
        object.__setattr__(self, "row_pointers", _frozen(row_ptr))

    @property
    def nnz(self) -> int:
        return int(self.row_pointers[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.rows), np.diff(self.row_pointers))


@dataclass(frozen=True)
class MackoParams:
    b_delta: int = 4
    b_val: int = 16

    def __post_init__(self) -> None:
        if self.b_delta not in VALID_B_DELTA:
            raise MackoFormatError(f"b_delta must be one of {VALID_B_DELTA}, got {self.b_delta}")
        if self.b_val != 16:
            raise MackoFormatError("only 16-bit values are supported")

    @property
    def max_delta(self) -> int:
        return 1 << self.b_delta

    @property
    def per_byte(self) -> int:
        return 8 // self.b_delta


@dataclass(frozen=True)
class MackoMatrix:
    """Padded values, packed deltas and element row pointers.

    ``values`` and ``packed_deltas`` carry zero tails up to a 16-byte
    multiple; only the first ``pad_nnz`` entries are meaningful.
    """

    rows: int
    cols: int
    params: MackoParams
    values: np.ndarray
    packed_deltas: np.ndarray
    row_pointers: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values).astype(np.float16, copy=False)
        packed = np.asarray(self.packed_deltas, dtype=np.uint8)
        row_ptr = np.asarray(self.row_pointers, dtype=np.int64)
        if self.rows < 1 or self.cols < 1:
            raise MackoFormatError("MACKO matrix needs R, C >= 1")
        if row_ptr.shape != (self.rows + 1,) or row_ptr[0] != 0:
            raise MackoFormatError("row_pointers must have R+1 entries starting at 0")
        if np.any(np.diff(row_ptr) < 0):
            raise MackoFormatError("row_pointers not monotone")
        pad_nnz = int(row_ptr[-1])
        if pad_nnz >= 1 << 32:
            raise MackoFormatError("pad_nnz does not fit 32-bit row pointers")
        if values.shape != (values_length(pad_nnz),):
            raise MackoFormatError(
                f"values length {values.shape} != {values_length(pad_nnz)} for pad_nnz={pad_nnz}"
            )
        if packed.shape != (packed_length(pad_nnz, self.params.b_delta),):
            raise MackoFormatError("packed_deltas length inconsistent with pad_nnz")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "packed_deltas", _frozen(packed))
        object.__setattr__(self, "row_pointers", _frozen(row_ptr))

    @property
    def pad_nnz(self) -> int:
        return int(self.row_pointers[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def deltas(self) -> np.ndarray:
        return unpack_deltas(self.packed_deltas, self.pad_nnz, self.params.b_delta)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.rows), np.diff(self.row_pointers))

    def column_indices(self) -> np.ndarray:
        """Decode absolute zero-based columns for the ``pad_nnz`` stored entries."""
        deltas = self.deltas().astype(np.int64)
        running = np.cumsum(deltas)
        row_ptr = self.row_pointers
        # running total just before each row starts
        before = np.concatenate(([0], running))[row_ptr[:-1]]
        cols = running - np.repeat(before, np.diff(row_ptr)) - 1
        if cols.size and cols.max() >= self.cols:
            raise MackoFormatError("decoded column index exceeds matrix width")
        return cols

    def validate(self) -> None:
        """Check the decoded-content invariants (delta range, zero padding, tails)."""
        pad_nnz = self.pad_nnz
        codes = unpack_codes(self.packed_deltas, len(self.packed_deltas) * self.params.per_byte,
                             self.params.b_delta)
        if np.any(codes[pad_nnz:] != 0):
            raise MackoFormatError("packed delta tail is not zero")
        if np.any(self.values[pad_nnz:].view(np.uint16) != 0):
            raise MackoFormatError("value tail is not zero")
        self.column_indices()  # raises on overflow past C
        deltas = self.deltas()
        vals = self.values[:pad_nnz]
        is_pad = vals == 0
        # A padding entry always jumps by the full delta range and is never last in its row.
        row_last = np.zeros(pad_nnz, dtype=bool)
        ends = self.row_pointers[1:][np.diff(self.row_pointers) > 0] - 1
        row_last[ends] = True
        if np.any(is_pad & ((deltas != self.params.max_delta) | row_last)):
            raise MackoFormatError("padding entry with short delta or at row end")


def values_length(pad_nnz: int) -> int:
    """Number of float16 slots in the tail-padded values array."""
    return _round_up(pad_nnz * 2, ALIGN_BYTES) // 2


def packed_length(pad_nnz: int, b_delta: int) -> int:
    """Number of bytes in the tail-padded packed delta array."""
    return _round_up(-(-pad_nnz * b_delta // 8), ALIGN_BYTES)


def pack_deltas(deltas, b_delta: int) -> bytes:
    """Pack deltas in ``[1, 2**b_delta]`` as ``delta - 1`` codewords, low bits first."""
    if b_delta not in VALID_B_DELTA:
        raise MackoFormatError(f"b_delta must be one of {VALID_B_DELTA}")
    d = np.asarray(deltas, dtype=np.int64)
    if d.size and (d.min() < 1 or d.max() > 1 << b_delta):
        raise MackoFormatError(f"delta outside [1, {1 << b_delta}]")
    return _pack_codes((d - 1).astype(np.uint8), b_delta).tobytes()


def _pack_codes(codes: np.ndarray, b_delta: int) -> np.ndarray:
    per = 8 // b_delta
    n_bytes = -(-codes.size // per)
    padded = np.zeros(n_bytes * per, dtype=np.uint8)
    padded[: codes.size] = codes
    shifts = (np.arange(per, dtype=np.uint8) * b_delta).astype(np.uint8)
    lanes = padded.reshape(n_bytes, per) << shifts
    return np.bitwise_or.reduce(lanes, axis=1).astype(np.uint8)


def unpack_codes(packed, count: int, b_delta: int) -> np.ndarray:
    if isinstance(packed, (bytes, bytearray, memoryview)):
        buf = np.frombuffer(packed, dtype=np.uint8)
    else:
        buf = np.asarray(packed, dtype=np.uint8)
    per = 8 // b_delta
    if count > buf.size * per:
        raise MackoFormatError(f"need {count} deltas but only {buf.size * per} are stored")
    n_bytes = -(-count // per)
    shifts = (np.arange(per, dtype=np.uint8) * b_delta).astype(np.uint8)
    mask = np.uint8((1 << b_delta) - 1)
    codes = (buf[:n_bytes, None] >> shifts) & mask
    return codes.reshape(-1)[:count]


def unpack_deltas(packed, count: int, b_delta: int) -> np.ndarray:
    if b_delta not in VALID_B_DELTA:
        raise MackoFormatError(f"b_delta must be one of {VALID_B_DELTA}")
    return unpack_codes(packed, count, b_delta).astype(np.int64) + 1


def csr_from_dense(m: DenseMatrix, index_width: int = 32) -> CsrMatrix:
    rows, cols = np.nonzero(m.data != 0)
    row_ptr = np.zeros(m.rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m.rows), out=row_ptr[1:])
    return CsrMatrix(m.rows, m.cols, m.data[rows, cols], cols, row_ptr, index_width)


def dense_from_csr(m: CsrMatrix) -> DenseMatrix:
    out = np.zeros(m.shape, dtype=np.float16)
    out[m.row_ids(), m.column_indices] = m.values
    return DenseMatrix(out)


def row_gaps(column_indices: np.ndarray, row_pointers: np.ndarray) -> np.ndarray:
    """Gap from each stored column to the previous one in its row (or to column -1)."""
    col = np.asarray(column_indices, dtype=np.int64)
    prev = np.empty_like(col)
    prev[1:] = col[:-1]
    starts = row_pointers[:-1][np.diff(row_pointers) > 0]
    prev[starts] = -1
    return col - prev


def gap_padding(m: CsrMatrix, max_delta: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-nonzero gap and the number of pads the greedy encoder puts before it."""
    gaps = row_gaps(m.column_indices, m.row_pointers)
    return gaps, (gaps - 1) // max_delta


def macko_from_csr(m: CsrMatrix, params: MackoParams | None = None) -> MackoMatrix:
    """Greedy left-to-right padding: each gap wider than ``max_delta`` is
    bridged by full-width zero entries placed as late as possible."""
    params = params or MackoParams()
    max_delta = params.max_delta
    gaps, pads = gap_padding(m, max_delta)
    pads_before = np.concatenate(([0], np.cumsum(pads)))
    pad_nnz = m.nnz + int(pads_before[-1])
    out_pos = np.arange(m.nnz) + pads_before[1:]

    deltas = np.full(pad_nnz, max_delta, dtype=np.int64)
    deltas[out_pos] = gaps - pads * max_delta
    values = np.zeros(values_length(pad_nnz), dtype=np.float16)
    values[out_pos] = m.values

    row_ptr = m.row_pointers + pads_before[m.row_pointers]
    packed = np.zeros(packed_length(pad_nnz, params.b_delta), dtype=np.uint8)
    body = _pack_codes((deltas - 1).astype(np.uint8), params.b_delta)
    packed[: body.size] = body
    return MackoMatrix(m.rows, m.cols, params, values, packed, row_ptr)


def macko_from_dense(m: DenseMatrix, params: MackoParams | None = None) -> MackoMatrix:
    return macko_from_csr(csr_from_dense(m), params)


def csr_from_macko(m: MackoMatrix, index_width: int = 32) -> CsrMatrix:
    cols = m.column_indices()
    vals = m.values[: m.pad_nnz]
    keep = vals != 0
    row_ptr = np.zeros(m.rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(m.row_ids()[keep], minlength=m.rows), out=row_ptr[1:])
    return CsrMatrix(m.rows, m.cols, vals[keep], cols[keep], row_ptr, index_width)


def dense_from_macko(m: MackoMatrix) -> DenseMatrix:
    cols = m.column_indices()
    out = np.zeros(m.shape, dtype=np.float16)
    vals = m.values[: m.pad_nnz]
    keep = vals != 0
    out[m.row_ids()[keep], cols[keep]] = vals[keep]
    return DenseMatrix(out)


def padding_count(m: MackoMatrix) -> int:
    """Number of explicitly stored zeros (pad_nnz minus the source nnz)."""
    return int(np.count_nonzero(m.values[: m.pad_nnz] == 0))
