"""Benchmark sweeps over matrix shapes, sparsities and storage formats.

A scenario point streams the random nonzero pattern row block by row block,
so even the largest LLM shapes are measured without building the matrix.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from macko.density import (
    FormatCostModel,
    Format,
    gen_random,
    gen_vector,
    random_mask_rows,
)
from macko.formats import MackoParams, macko_from_dense, row_gaps
from macko.perf import (
    DeviceProfile,
    TrafficReport,
    csr_traffic,
    load_device_profile,
    macko_traffic,
    predict_speedup,
    spmv_traffic,
)
from macko.spmv import warp_spmv

# LLM linear-layer shapes (rows, cols).
LLM_SHAPES: tuple[tuple[int, int], ...] = (
    (4096, 4096), (8192, 8192), (8192, 29568), (32000, 5120), (32000, 8192),
    (28672, 8192), (5120, 5120), (5120, 13824), (3584, 20480), (4096, 11008),
    (13824, 5120), (18944, 3584), (14336, 4096), (4096, 14336), (8192, 28672),
    (11008, 4096), (32000, 4096), (20480, 3584), (3584, 18944), (21504, 7168),
    (7168, 7168), (28672, 7168), (7168, 28672), (27648, 9216), (9216, 9216),
    (36864, 9216), (9216, 36864), (36864, 12288), (12288, 12288), (49152, 12288),
    (12288, 49152),
)

DEFAULT_SPARSITIES = tuple(round(0.05 * k, 2) for k in range(20))  # 0.00 .. 0.95
BENCH_FORMATS = ("MACKO", "CSR32", "CSR16", "TiledCSL", "Bitmask", "Dense")

CSV_COLUMNS = (
    "shape", "rows", "cols", "sparsity", "density", "format", "nnz", "stored",
    "measured_effd", "predicted_speedup", "emulated_wall_s_not_gpu_comparable",
)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class BenchScenario:
    shapes: tuple[tuple[int, int], ...] = ((4096, 4096),)
    sparsities: tuple[float, ...] = DEFAULT_SPARSITIES
    formats: tuple[str, ...] = BENCH_FORMATS
    device: str = "rtx4090"
    seed: int = 0
    mode: str = "float"
    repetitions: int = 1
    b_delta: int = 4
    timing: bool = False

    def __post_init__(self) -> None:
        for s in self.sparsities:
            if not 0.0 <= s <= 1.0:
                raise ScenarioError(f"sparsity {s} outside [0, 1]")
        for f in self.formats:
            if f not in BENCH_FORMATS:
                raise ScenarioError(f"unknown format {f!r}; choose from {BENCH_FORMATS}")
        for r, c in self.shapes:
            if r < 1 or c < 1:
                raise ScenarioError(f"bad shape {r}x{c}")
        if self.mode not in ("int", "float"):
            raise ScenarioError(f"mode must be int or float, got {self.mode!r}")
        if self.repetitions < 1:
            raise ScenarioError("repetitions must be >= 1")
        MackoParams(self.b_delta)

    def points(self) -> list[tuple[int, int, float]]:
        return [(r, c, s) for r, c in self.shapes for s in self.sparsities]


def _parse_shapes(raw) -> tuple[tuple[int, int], ...]:
    if raw == "llm":
        return LLM_SHAPES
    shapes = []
    for item in raw:
        if isinstance(item, str):
            if "x" not in item:
                raise ScenarioError(f"unknown shape {item!r}; use 'RxC' or [R, C]")
            item = item.split("x")
        try:
            r, c = (int(x) for x in item)
        except (TypeError, ValueError):
            raise ScenarioError(f"unknown shape {item!r}; use 'RxC' or [R, C]") from None
        shapes.append((r, c))
    return tuple(shapes)


def load_scenario(path: str | Path) -> BenchScenario:
    """Read a JSON scenario file.

    Keys (all optional): ``shapes`` (list of ``[R, C]`` or ``"RxC"``, or the
    string ``"llm"``), ``sparsities``, ``formats``, ``device``,
    ``seed``, ``mode``, ``repetitions``, ``b_delta``, ``timing``.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    known = set(BenchScenario.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
    kwargs = dict(raw)
    if "shapes" in kwargs:
        kwargs["shapes"] = _parse_shapes(kwargs["shapes"])
    for key in ("sparsities", "formats"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return BenchScenario(**kwargs)


def pattern_counts(R: int, C: int, d: float, seed: int, b_delta: int) -> tuple[int, int]:
    """``(nnz, pads)`` of the :func:`gen_random` pattern, streamed by row block."""
    max_delta = 1 << b_delta
    nnz = pads = 0
    for _, mask in random_mask_rows(R, C, d, seed):
        rows, cols = np.nonzero(mask)
        if rows.size == 0:
            continue
        row_ptr = np.zeros(mask.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=mask.shape[0]), out=row_ptr[1:])
        gaps = row_gaps(cols, row_ptr)
        nnz += rows.size
        pads += int(((gaps - 1) // max_delta).sum())
    return nnz, pads


def _format_traffic(fmt: str, R: int, C: int, nnz: int, pads: int,
                    b_delta: int) -> tuple[TrafficReport, int, float]:
    """Traffic, stored entry count and measured effective density for one format."""
    dense_bits = R * C * 16
    if fmt == "MACKO":
        t = macko_traffic(R, C, nnz, nnz + pads, b_delta)
        bits = (nnz + pads) * (16 + b_delta) + 32 * (R + 1)
        return t, nnz + pads, bits / dense_bits
    if fmt in ("CSR32", "CSR16"):
        width = 32 if fmt == "CSR32" else 16
        t = csr_traffic(R, C, nnz, width)
        return t, nnz, (nnz * (16 + width) + 32 * (R + 1)) / dense_bits
    if fmt == "TiledCSL":
        tiles = FormatCostModel(Format.TILED_CSL).tile_count(R, C)
        bits = nnz * 32 + 32 * tiles
        return TrafficReport(bits / 8, 2 * C, 2 * R, 2 * nnz), nnz, bits / dense_bits
    if fmt == "Bitmask":
        bits = nnz * 16 + R * C
        return TrafficReport(bits / 8, 2 * C, 2 * R, 2 * nnz), nnz, bits / dense_bits
    if fmt == "Dense":
        return spmv_traffic((R, C)), R * C, 1.0
    raise ScenarioError(f"unknown format {fmt!r}")


def _emulate(R: int, C: int, d: float, sc: BenchScenario) -> float:
    m = macko_from_dense(gen_random(R, C, d, sc.seed, sc.mode), MackoParams(sc.b_delta))
    v = gen_vector(C, sc.seed, sc.mode)
    best = float("inf")
    for _ in range(sc.repetitions):
        t0 = time.perf_counter()
        warp_spmv(m, v)
        best = min(best, time.perf_counter() - t0)
    return best


def run_point(args: tuple[int, BenchScenario, DeviceProfile]) -> list[dict]:
    index, sc, dev = args
    R, C, s = sc.points()[index]
    d = 1.0 - s
    nnz, pads = pattern_counts(R, C, d, sc.seed, sc.b_delta)
    dense = spmv_traffic((R, C))
    out = []
    for fmt in sc.formats:
        t, stored, e = _format_traffic(fmt, R, C, nnz, pads, sc.b_delta)
        wall = ""
        if sc.timing and fmt == "MACKO":
            wall = f"{_emulate(R, C, d, sc):.6f}"
        out.append({
            "shape": f"{R}x{C}", "rows": R, "cols": C,
            "sparsity": repr(s), "density": repr(round(d, 12)), "format": fmt,
            "nnz": nnz, "stored": stored,
            "measured_effd": repr(e),
            "predicted_speedup": repr(predict_speedup(t, dense, dev)),
            "emulated_wall_s_not_gpu_comparable": wall,
        })
    return out


def run_bench(sc: BenchScenario, device: DeviceProfile | None = None,
              workers: int = 1) -> list[dict]:
    dev = device or load_device_profile(sc.device)
    jobs = [(i, sc, dev) for i in range(len(sc.points()))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_point, jobs))
    else:
        chunks = [run_point(job) for job in jobs]
    return [row for chunk in chunks for row in chunk]


def bench_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
