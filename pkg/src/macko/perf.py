"""Roofline model for MV/SpMV: compute intensity, memory traffic per format
and predicted runtimes on a device described by peak FLOPS and bandwidth."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from macko.density import Format, FormatCostModel, effd
from macko.formats import CsrMatrix, DenseMatrix, MackoMatrix, packed_length, values_length

SHIPPED_DEVICES = ("rtx4090", "rtx3090", "rtx2080")


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    flops: float
    bandwidth: float  # bytes per second

    @property
    def opb(self) -> float:
        return self.flops / self.bandwidth


def parse_device_profile(text: str) -> DeviceProfile:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        fields[key.strip()] = value.strip()
    missing = {"name", "flops", "bandwidth_bytes_per_s"} - fields.keys()
    if missing:
        raise ValueError(f"device profile lacks {sorted(missing)}")
    dev = DeviceProfile(fields["name"], float(fields["flops"]),
                        float(fields["bandwidth_bytes_per_s"]))
    if dev.flops <= 0 or dev.bandwidth <= 0:
        raise ValueError("flops and bandwidth must be positive")
    return dev


def load_device_profile(path: str | Path) -> DeviceProfile:
    """Load a profile file, or a shipped profile by short name (e.g. ``rtx4090``)."""
    if str(path) in SHIPPED_DEVICES:
        text = resources.files("macko.devices").joinpath(f"{path}.cfg").read_text()
    else:
        text = Path(path).read_text()
    return parse_device_profile(text)


def shipped_devices() -> list[DeviceProfile]:
    return [load_device_profile(name) for name in SHIPPED_DEVICES]


def ci_mv(R: int, C: int) -> float:
    return 2 * R * C / (2 * (R * C + R + C))


def ci_spmv(d: float, effd_value: float, R: int, C: int) -> float:
    if effd_value <= 0:
        raise ValueError("effective density must be positive")
    return 2 * d * R * C / (2 * (effd_value * R * C + R + C))


@dataclass(frozen=True)
class TrafficReport:
    """Bytes moved and flops done by one SpMV."""

    bytes_matrix: float
    bytes_vector_in: float
    bytes_vector_out: float
    flops: float

    @property
    def total_bytes(self) -> float:
        return self.bytes_matrix + self.bytes_vector_in + self.bytes_vector_out

    @property
    def compute_intensity(self) -> float:
        return self.flops / self.total_bytes


def spmv_traffic(m: MackoMatrix | CsrMatrix | DenseMatrix | tuple[int, int],
                 pessimistic_vector: bool = False) -> TrafficReport:
    """Traffic from the actual stored arrays of ``m``.

    By default ``v`` is read once (perfect caching). With
    ``pessimistic_vector`` every stored sparse entry re-reads its ``v`` element.
    """
    if isinstance(m, tuple) or isinstance(m, DenseMatrix):
        R, C = m if isinstance(m, tuple) else m.shape
        return TrafficReport(2 * R * C, 2 * C, 2 * R, 2 * R * C)
    if isinstance(m, MackoMatrix):
        nnz = int(np.count_nonzero(m.values[: m.pad_nnz]))
        return macko_traffic(m.rows, m.cols, nnz, m.pad_nnz, m.params.b_delta,
                             pessimistic_vector)
    if isinstance(m, CsrMatrix):
        return csr_traffic(m.rows, m.cols, m.nnz, m.index_width, pessimistic_vector)
    raise TypeError(f"unsupported matrix type {type(m).__name__}")


def macko_traffic(R: int, C: int, nnz: int, pad_nnz: int, b_delta: int = 4,
                  pessimistic_vector: bool = False) -> TrafficReport:
    """Traffic of a MACKO matrix with the given counts, tail alignment included."""
    bytes_matrix = 2 * values_length(pad_nnz) + packed_length(pad_nnz, b_delta) + 4 * (R + 1)
    v_in = 2 * pad_nnz if pessimistic_vector else 2 * C
    return TrafficReport(bytes_matrix, v_in, 2 * R, 2 * nnz)


def csr_traffic(R: int, C: int, nnz: int, index_width: int = 32,
                pessimistic_vector: bool = False) -> TrafficReport:
    bytes_matrix = nnz * (2 + index_width // 8) + 4 * (R + 1)
    v_in = 2 * nnz if pessimistic_vector else 2 * C
    return TrafficReport(bytes_matrix, v_in, 2 * R, 2 * nnz)


def model_traffic(model: FormatCostModel | str, d: float, R: int, C: int) -> TrafficReport:
    """Traffic implied by a closed-form effective density."""
    if not isinstance(model, FormatCostModel):
        model = FormatCostModel(Format(model))
    e = effd(model, d, R, C)
    flops = 2 * R * C if model.format is Format.DENSE else 2 * d * R * C
    return TrafficReport(e * R * C * model.b_val / 8, 2 * C, 2 * R, flops)


def predict_runtime(t: TrafficReport, dev: DeviceProfile) -> float:
    return max(t.total_bytes / dev.bandwidth, t.flops / dev.flops)


def is_memory_bound(t: TrafficReport, dev: DeviceProfile) -> bool:
    return t.compute_intensity < dev.opb


def predict_speedup(a: TrafficReport, b: TrafficReport, dev: DeviceProfile) -> float:
    """How many times faster ``a`` runs than ``b``."""
    return predict_runtime(b, dev) / predict_runtime(a, dev)
