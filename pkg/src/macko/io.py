"""MCKO binary container and a small Matrix Market coordinate reader/writer.

MCKO layout, all little-endian::

    magic      4s   b"MCKO"
    version    u16  1
    b_val      u8
    b_delta    u8
    rows       u64
    cols       u64
    pad_nnz    u64
    row_pointers   (rows + 1) x u32
    packed_deltas  ceil(pad_nnz * b_delta / 8) bytes, zero-filled to a 16-byte multiple
    values         pad_nnz x float16, zero-filled to a 16-byte multiple
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, TextIO

import numpy as np

from macko.formats import (
    DenseMatrix,
    MackoFormatError,
    MackoMatrix,
    MackoParams,
    packed_length,
    values_length,
)

MAGIC = b"MCKO"
VERSION = 1
HEADER = struct.Struct("<4sHBBQQQ")


class MackoIOError(ValueError):
    pass


class BadMagicError(MackoIOError):
    pass


class UnsupportedVersionError(MackoIOError):
    pass


class TruncatedFileError(MackoIOError):
    pass


class MatrixMarketError(MackoIOError):
    pass


def macko_to_bytes(m: MackoMatrix) -> bytes:
    if m.pad_nnz >= 1 << 32:
        raise MackoIOError(f"pad_nnz={m.pad_nnz} does not fit u32 row pointers")
    header = HEADER.pack(MAGIC, VERSION, m.params.b_val, m.params.b_delta,
                         m.rows, m.cols, m.pad_nnz)
    return b"".join((
        header,
        m.row_pointers.astype("<u4").tobytes(),
        m.packed_deltas.tobytes(),
        m.values.astype("<f2").tobytes(),
    ))


def write_macko(m: MackoMatrix, sink: BinaryIO | str | Path) -> None:
    data = macko_to_bytes(m)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def macko_from_bytes(data: bytes) -> MackoMatrix:
    if len(data) < HEADER.size:
        raise TruncatedFileError(f"file holds {len(data)} bytes, header needs {HEADER.size}")
    magic, version, b_val, b_delta, rows, cols, pad_nnz = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported MCKO version {version}")
    try:
        params = MackoParams(b_delta=b_delta, b_val=b_val)
    except MackoFormatError as exc:
        raise MackoIOError(str(exc)) from exc

    sizes = (4 * (rows + 1), packed_length(pad_nnz, b_delta), 2 * values_length(pad_nnz))
    need = HEADER.size + sum(sizes)
    if len(data) < need:
        raise TruncatedFileError(f"file holds {len(data)} bytes, layout needs {need}")
    if len(data) > need:
        raise MackoIOError(f"{len(data) - need} trailing bytes after values section")

    off = HEADER.size
    row_ptr = np.frombuffer(data, "<u4", rows + 1, off).astype(np.int64)
    off += sizes[0]
    packed = np.frombuffer(data, np.uint8, sizes[1], off).copy()
    off += sizes[1]
    values = np.frombuffer(data, "<f2", sizes[2] // 2, off).astype(np.float16)

    if row_ptr[-1] != pad_nnz:
        raise MackoIOError(f"row_pointers end at {row_ptr[-1]}, header says pad_nnz={pad_nnz}")
    try:
        m = MackoMatrix(rows, cols, params, values, packed, row_ptr)
        m.validate()
    except MackoFormatError as exc:
        raise MackoIOError(f"invalid MCKO content: {exc}") from exc
    return m


def read_macko(source: BinaryIO | str | Path) -> MackoMatrix:
    if isinstance(source, (str, Path)):
        return macko_from_bytes(Path(source).read_bytes())
    return macko_from_bytes(source.read())


def is_macko_file(path: str | Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def read_matrix_market(source: TextIO | str | Path) -> DenseMatrix:
    """Read a ``coordinate real|integer general`` Matrix Market file into float16."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return read_matrix_market(fh)
    header = source.readline()
    tokens = header.lower().split()
    if len(tokens) != 5 or tokens[0] != "%%matrixmarket" or tokens[1] != "matrix":
        raise MatrixMarketError(f"not a Matrix Market header: {header.strip()!r}")
    fmt, field, symmetry = tokens[2:]
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r} (only coordinate)")
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"unsupported field {field!r}")
    if symmetry != "general":
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}")

    line = source.readline()
    while line.startswith("%") or (line and not line.strip()):
        line = source.readline()
    try:
        rows, cols, nnz = (int(t) for t in line.split())
    except ValueError:
        raise MatrixMarketError(f"bad size line {line.strip()!r}") from None
    if rows < 1 or cols < 1 or nnz < 0:
        raise MatrixMarketError(f"bad dimensions {rows} x {cols}, nnz {nnz}")

    data = np.zeros((rows, cols), dtype=np.float16)
    seen = np.zeros((rows, cols), dtype=bool)
    count = 0
    for raw in source:
        raw = raw.strip()
        if not raw or raw.startswith("%"):
            continue
        parts = raw.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"bad entry line {raw!r}")
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= i < rows and 0 <= j < cols):
            raise MatrixMarketError(f"entry ({i + 1}, {j + 1}) outside {rows} x {cols}")
        if seen[i, j]:
            raise MatrixMarketError(f"duplicate entry ({i + 1}, {j + 1})")
        seen[i, j] = True
        data[i, j] = float(parts[2])
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"header promises {nnz} entries, found {count}")
    return DenseMatrix(data)


def write_matrix_market(m: DenseMatrix, sink: TextIO | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w") as fh:
            write_matrix_market(m, fh)
        return
    rows, cols = np.nonzero(m.data != 0)
    sink.write("%%MatrixMarket matrix coordinate real general\n")
    sink.write(f"{m.rows} {m.cols} {rows.size}\n")
    for i, j, x in zip(rows.tolist(), cols.tolist(), m.data[rows, cols].tolist()):
        sink.write(f"{i + 1} {j + 1} {x!r}\n")
