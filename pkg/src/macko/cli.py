"""``macko`` command-line driver.

Exit status: 0 on success, 1 when a verification check fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import sys
from pathlib import Path

import numpy as np

from macko import io
from macko.bench import ScenarioError, bench_csv, load_scenario, run_bench
from macko.density import (
    Format,
    FormatCostModel,
    density_grid,
    effd_curves,
    gen_best_case,
    gen_random,
    gen_vector,
    gen_worst_case,
    measured_effd,
)
from macko.formats import (
    DenseMatrix,
    MackoFormatError,
    MackoMatrix,
    MackoParams,
    csr_from_dense,
    dense_from_macko,
    macko_from_dense,
    padding_count,
)
from macko.perf import load_device_profile, predict_runtime, spmv_traffic
from macko.spmv import dense_mv, csr_spmv, reference_spmv, warp_spmv

EXIT_OK, EXIT_VERIFY, EXIT_INPUT = 0, 1, 2
ENGINES = ("reference", "warp", "csr", "dense")


class InputError(Exception):
    pass


def _load_any(path: str, b_delta: int) -> tuple[MackoMatrix, DenseMatrix | None]:
    """MCKO files load as-is; anything else is parsed as Matrix Market."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    if io.is_macko_file(p):
        return io.read_macko(p), None
    dense = io.read_matrix_market(p)
    return macko_from_dense(dense, MackoParams(b_delta)), dense


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_convert(args) -> int:
    m, _ = _load_any(args.input, args.b_delta)
    if m.params.b_delta != args.b_delta:
        m = macko_from_dense(dense_from_macko(m), MackoParams(args.b_delta))
    io.write_macko(m, args.output)
    print(f"shape {m.rows}x{m.cols}")
    print(f"pad_nnz {m.pad_nnz}")
    print(f"padding {padding_count(m)}")
    print(f"measured_effd {measured_effd(m):.6f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    names = args.formats or [f.value for f in Format]
    try:
        models = [FormatCostModel(Format(n), b_val=args.b_val, b_delta=args.b_delta) for n in names]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    grid = density_grid(args.step)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["d", *names])
    for row in effd_curves(grid, models, *args.shape):
        writer.writerow([repr(x) for x in row])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _read_vector(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return np.loadtxt(p, dtype=np.float64, ndmin=1).astype(np.float16)
    except ValueError as exc:
        raise InputError(f"bad vector file {path}: {exc}") from exc


def _write_vector(path: str, y: np.ndarray) -> None:
    Path(path).write_text("".join(f"{float(x)!r}\n" for x in y))


def checksum(y: np.ndarray) -> str:
    return hashlib.sha256(np.asarray(y, dtype="<f2").tobytes()).hexdigest()[:16]


def cmd_spmv(args) -> int:
    m, dense = _load_any(args.matrix, args.b_delta)
    v = _read_vector(args.vector) if args.vector else gen_vector(m.cols, args.seed, args.mode)
    if v.shape[0] != m.cols:
        raise InputError(f"vector has {v.shape[0]} entries, matrix has {m.cols} columns")
    if args.engine in ("csr", "dense") and dense is None:
        dense = dense_from_macko(m)

    if args.engine == "reference":
        y, traffic = reference_spmv(m, v), spmv_traffic(m)
    elif args.engine == "warp":
        y, traffic = warp_spmv(m, v, workers=args.workers), spmv_traffic(m)
    elif args.engine == "csr":
        csr = csr_from_dense(dense)
        y, traffic = csr_spmv(csr, v), spmv_traffic(csr)
    else:
        y, traffic = dense_mv(dense, v), spmv_traffic(dense)

    print(f"engine {args.engine}")
    print(f"checksum {checksum(y)}")
    print(f"sum {float(y.astype(np.float64).sum())!r}")
    print(f"bytes_matrix {traffic.bytes_matrix:g}")
    print(f"bytes_vector_in {traffic.bytes_vector_in:g}")
    print(f"bytes_vector_out {traffic.bytes_vector_out:g}")
    print(f"bytes_total {traffic.total_bytes:g}")
    print(f"flops {traffic.flops:g}")
    if args.device:
        dev = load_device_profile(args.device)
        print(f"predicted_runtime_s {predict_runtime(traffic, dev):.6e} ({dev.name})")
    if args.out:
        _write_vector(args.out, y)
    if args.check:
        ref = reference_spmv(m, v)
        if not np.array_equal(ref.view(np.uint16), y.view(np.uint16)):
            bad = int((ref.view(np.uint16) != y.view(np.uint16)).sum())
            print(f"check FAILED: {bad} of {y.size} outputs differ from reference", file=sys.stderr)
            return EXIT_VERIFY
        print("check ok")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    if args.timing:
        sc = type(sc)(**{**sc.__dict__, "timing": True})
    device = load_device_profile(args.device) if args.device else None
    rows = run_bench(sc, device, workers=args.workers)
    _emit(bench_csv(rows), args.out)
    return EXIT_OK


def cmd_gen(args) -> int:
    R, C = args.shape
    kind = args.kind
    if kind == "random":
        dense = gen_random(R, C, args.density, args.seed, args.mode)
    elif kind == "worst":
        dense = gen_worst_case(R, C, args.density, args.b_delta, args.seed, args.mode)
    else:
        dense = gen_best_case(R, C, args.density, args.b_delta, args.seed, args.mode)
    if args.out.endswith((".mcko", ".bin")):
        io.write_macko(macko_from_dense(dense, MackoParams(args.b_delta)), args.out)
    else:
        io.write_matrix_market(dense, args.out)
    if args.vector_out:
        _write_vector(args.vector_out, gen_vector(C, args.seed, args.mode))
    print(f"wrote {kind} {R}x{C} d={args.density} to {args.out}")
    return EXIT_OK


def _density(text: str) -> float:
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--b-delta", type=int, choices=(1, 2, 4, 8), default=4)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mode", choices=("int", "float"), default="float")
    common.add_argument("--device", help="device profile file or shipped name (rtx4090, ...)")
    common.add_argument("--out", help="output path (default: stdout where applicable)")

    parser = argparse.ArgumentParser(prog="macko", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="Matrix Market or MCKO -> MCKO")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("analyze", parents=[common], help="effective-density curves as CSV")
    p.add_argument("--b-val", type=int, default=16)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--formats", nargs="+", metavar="FORMAT",
                   help=f"subset of {[f.value for f in Format]}")
    p.add_argument("--shape", type=int, nargs=2, default=(12288, 12288), metavar=("R", "C"),
                   help="matrix shape for the Tiled-CSL tile term")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("spmv", parents=[common], help="run one SpMV engine")
    p.add_argument("matrix")
    p.add_argument("--vector", help="text file, one value per line (default: random from --seed)")
    p.add_argument("--engine", choices=ENGINES, default="warp")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--check", action="store_true",
                   help="exit 1 unless the output matches the reference engine bit for bit")
    p.set_defaults(func=cmd_spmv)

    p = sub.add_parser("bench", parents=[common], help="sweep a JSON scenario, CSV out")
    p.add_argument("scenario")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="also time the warp emulator (makes the CSV non-reproducible)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", parents=[common], help="generate a test matrix")
    p.add_argument("--kind", choices=("random", "worst", "best"), default="random")
    p.add_argument("--shape", type=int, nargs=2, default=(256, 256), metavar=("R", "C"))
    p.add_argument("--density", type=_density, default=0.5)
    p.add_argument("--vector-out", help="also write a matching random vector")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen" and not args.out:
        parser.error("gen requires --out")
    try:
        return args.func(args)
    except (InputError, io.MackoIOError, MackoFormatError, ScenarioError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
