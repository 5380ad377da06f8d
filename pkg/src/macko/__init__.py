"""MACKO sparse matrix format, SpMV emulation and analytic cost models."""

from macko.formats import (
    CsrMatrix,
    DenseMatrix,
    MackoFormatError,
    MackoMatrix,
    MackoParams,
    csr_from_dense,
    csr_from_macko,
    dense_from_csr,
    dense_from_macko,
    macko_from_csr,
    macko_from_dense,
    pack_deltas,
    padding_count,
    unpack_deltas,
)

__version__ = "0.1.0"
