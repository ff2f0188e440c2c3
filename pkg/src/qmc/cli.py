"""Command-line surface: `qmc <subcommand>`.

Exit codes: 0 success, 1 operational failure (message on stderr),
2 usage error (argparse). File outputs are written atomically
(temp file + rename), so failures never leave partial results.
An optional --config JSON file supplies defaults for any flag of the
subcommand (explicit flags win). --threads caps per-tensor parallelism
(env QMC_THREADS is the fallback); timed benchmarks always run
single-threaded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile

import numpy as np

from . import bench, codecs, container
from .codecs.blob import Blob
from .errors import QmcError, ValidationError
from .quant import (
    dequantize,
    quantize_channel_wise,
    quantize_tensor_wise,
    scheme_from_dict,
    scheme_to_dict,
    QuantizedTensor,
)
from .tensorio import SynthSpec, Tensor, TensorMap, load_model, save_model, \
    synth_activation, synth_weights

_STRATEGY_ALIASES = {
    "read": "buffered_read",
    "mmap": "memory_mapped",
    "buffered_read": "buffered_read",
    "memory_mapped": "memory_mapped",
}


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("QMC_THREADS")
    if env and env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def _atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qmc-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if getattr(args, "output", None):
        _atomic_write(args.output, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _rows_json(rows) -> str:
    return json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n"


def _config_echo(args) -> dict:
    skip = {"func", "config", "output"}  # output path is not an experiment knob
    return {
        k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None
    }


def _csv_with_config(args, csv_text: str) -> str:
    echo = json.dumps(_config_echo(args), sort_keys=True)
    return f"# config: {echo}\n{csv_text}"


def _parse_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


# --- subcommand handlers ----------------------------------------------------


def _cmd_synth(args) -> int:
    m = TensorMap(metadata={"source": "qmc-synth", "seed": str(args.seed)})
    for i in range(args.count):
        spec = SynthSpec(
            rows=args.rows,
            cols=args.cols,
            base_std=args.base_std,
            outlier_fraction=args.outlier_fraction,
            outlier_scale=args.outlier_scale,
            outlier_axis=args.outlier_axis,
            seed=args.seed + i,
        )
        maker = synth_activation if args.kind == "activation" else synth_weights
        name = f"h.{i}.{args.name}" if args.count > 1 else args.name
        m.add(maker(spec, name=name))
    save_model(m, args.out)
    print(f"wrote {len(m)} tensor(s) to {args.out}")
    return 0


def _quantize_map(m: TensorMap, scheme: str, axis: str, mode: str):
    quantized = []
    for t in m:
        if t.dtype != "float32":
            raise ValidationError(
                f"tensor '{t.name}' is {t.dtype}; quantization needs float32"
            )
        if scheme == "tensor":
            quantized.append(quantize_tensor_wise(t, mode))
        elif scheme == "channel":
            quantized.append(quantize_channel_wise(t, axis, mode))
        else:
            raise ValidationError(f"unknown scheme '{scheme}'")
    return quantized


def _quantized_to_map(quantized, metadata: dict[str, str]) -> TensorMap:
    out = TensorMap(metadata=metadata)
    for q in quantized:
        out.metadata[f"scheme:{q.name}"] = json.dumps(
            scheme_to_dict(q.scheme), sort_keys=True, separators=(",", ":")
        )
        out.add(Tensor(q.name, q.data))
    return out


def _map_to_quantized(m: TensorMap) -> list[QuantizedTensor]:
    out = []
    for t in m:
        key = f"scheme:{t.name}"
        if key not in m.metadata:
            raise ValidationError(
                f"tensor '{t.name}' is int8 but has no '{key}' metadata"
            )
        scheme = scheme_from_dict(json.loads(m.metadata[key]))
        out.append(QuantizedTensor(t.name, t.shape, t.data, scheme))
    return out


def _cmd_quantize(args) -> int:
    m = load_model(args.model)
    quantized = _quantize_map(m, args.scheme, args.axis, args.mode)
    out = _quantized_to_map(
        quantized, {"source": "qmc-quantize", "scheme": args.scheme, "mode": args.mode}
    )
    save_model(out, args.out)
    print(f"quantized {len(out)} tensor(s) ({args.scheme}, {args.mode}) to {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    m = load_model(args.model)
    report = bench.analyze_model(
        m,
        schemes=_parse_list(args.schemes),
        codecs_list=_parse_list(args.codecs),
        axis=args.axis,
        mode=args.mode,
        table_log=args.table_log,
        level=args.level,
        threads=_threads(args),
    )
    for n in report.notices:
        print(f"notice: {n}", file=sys.stderr)
    if args.json:
        _emit(args, _rows_json(report.rows))
    else:
        _emit(args, _csv_with_config(args, report.csv_text()))
    return 0


def _cmd_compress(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    blob = codecs.compress(data, args.codec, table_log=args.table_log, level=args.level)
    _atomic_write(args.out, blob.to_bytes())
    c = codecs.compression_ratio(len(data), blob)
    print(f"{args.codec}: {len(data)} -> {blob.total_len()} bytes (C={c:.3f})")
    return 0


def _cmd_decompress(args) -> int:
    with open(args.input, "rb") as f:
        blob = Blob.from_bytes(f.read())
    data = codecs.decompress(blob)
    _atomic_write(args.out, data)
    print(f"{blob.codec_id}: restored {len(data)} bytes")
    return 0


def _cmd_pack(args) -> int:
    m = load_model(args.model)
    dtypes = {t.dtype for t in m}
    if dtypes == {"int8"}:
        quantized = _map_to_quantized(m)
    else:
        quantized = _quantize_map(m, args.scheme, args.axis, args.mode)
    container.pack(
        quantized,
        args.out,
        codec=args.codec,
        metadata={"source": "qmc-pack"},
        table_log=args.table_log,
        level=args.level,
        threads=_threads(args),
    )
    size = os.path.getsize(args.out)
    raw = sum(len(q.payload_bytes()) for q in quantized)
    print(f"packed {len(quantized)} tensor(s), {raw} -> {size} bytes ({args.codec})")
    return 0


def _cmd_unpack(args) -> int:
    quantized = container.unpack(args.container, threads=_threads(args))
    if args.dequantize:
        out = TensorMap(metadata={"source": "qmc-unpack"})
        for q in quantized:
            out.add(dequantize(q))
    else:
        out = _quantized_to_map(quantized, {"source": "qmc-unpack"})
    save_model(out, args.out)
    print(f"unpacked {len(quantized)} tensor(s) to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    report = container.verify(args.container)
    for e in report.entries:
        print(f"{e.name}: {'ok' if e.ok else 'FAIL ' + e.detail}")
    if report.ok:
        print(f"{args.container}: all checks passed ({len(report.entries)} tensors)")
        return 0
    for line in report.failures():
        print(f"error: {line}", file=sys.stderr)
    return 1


def _cmd_bench_speed(args) -> int:
    if args.input:
        with open(args.input, "rb") as f:
            data = f.read()
    else:
        rng = np.random.default_rng(args.seed)
        vals = rng.normal(0.0, args.sigma, args.size_mb << 20)
        data = np.clip(np.round(vals), -127, 127).astype(np.int8).tobytes()
    reports = [
        codecs.bench_codec_speed(c, data, repetitions=args.reps)
        for c in _parse_list(args.codecs)
    ]
    if args.json:
        _emit(args, _rows_json(reports))
    else:
        lines = ["codec,data_len,comp_mb_s,decomp_mb_s"]
        for r in reports:
            lines.append(f"{r.codec},{r.data_len},{r.comp_mb_s:.1f},{r.decomp_mb_s:.1f}")
        _emit(args, _csv_with_config(args, "\n".join(lines) + "\n"))
    return 0


def _cmd_bench_load(args) -> int:
    raw_rep, comp_rep = bench.bench_load(
        args.container,
        args.raw,
        strategy=_STRATEGY_ALIASES[args.strategy],
        trials=args.trials,
        bandwidth_cap_mb_s=args.bandwidth_cap,
        decode_mb_s=args.decode_throughput,
        cold_cache=args.cold_cache,
        evict_bytes=args.evict_mb << 20 if args.evict_mb else None,
    )
    rows = [raw_rep, comp_rep]
    if args.json:
        _emit(args, _rows_json(rows))
    else:
        names = [f.name for f in dataclasses.fields(bench.LoadReport)]
        lines = [",".join(names)]
        for r in rows:
            lines.append(",".join(str(getattr(r, n)) for n in names))
        _emit(args, _csv_with_config(args, "\n".join(lines) + "\n"))
    return 0


def _cmd_sweep_alpha(args) -> int:
    alphas = [float(a) for a in _parse_list(args.alphas)]
    if args.activation and args.weight:
        x = next(iter(load_model(args.activation)))
        w = next(iter(load_model(args.weight)))
    else:
        spec = SynthSpec(
            rows=args.rows,
            cols=args.cols,
            outlier_fraction=args.outlier_fraction,
            outlier_scale=args.outlier_scale,
            seed=args.seed,
        )
        x = synth_activation(spec)
        w = synth_weights(
            SynthSpec(rows=args.cols, cols=args.cols, seed=args.seed)
        )
    report = bench.sweep_alpha(x, w, alphas, codec=args.codec, mode=args.mode)
    if args.json:
        _emit(args, _rows_json(report.rows))
    else:
        _emit(args, _csv_with_config(args, report.csv_text()))
    return 0


# --- parser -----------------------------------------------------------------


def _add_common(p, *, threads=False, output=False, jsonflag=False):
    p.add_argument("--config", help="JSON file of default values for these flags")
    if threads:
        p.add_argument("--threads", type=int, help="worker threads (default: cores)")
    if output:
        p.add_argument("-o", "--output", help="write report here (default: stdout)")
    if jsonflag:
        p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qmc",
        description="Quantize model tensors, analyze their entropy, compress "
        "them with entropy coders, and benchmark codecs and loading.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True, metavar="subcommand")

    p = sub.add_parser("synth", help="generate synthetic tensors")
    p.add_argument("out")
    p.add_argument("--rows", type=int, default=512)
    p.add_argument("--cols", type=int, default=512)
    p.add_argument("--base-std", type=float, default=1.0)
    p.add_argument("--outlier-fraction", type=float, default=0.01)
    p.add_argument("--outlier-scale", type=float, default=100.0)
    p.add_argument("--outlier-axis", choices=("row", "column"), default="column")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=("weights", "activation"), default="weights")
    p.add_argument("--count", type=int, default=1, help="number of tensors")
    p.add_argument("--name", default="mlp.c_proj.weight")
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("quantize", help="float32 model -> int8 model (+scheme)")
    p.add_argument("model")
    p.add_argument("out")
    p.add_argument("--scheme", choices=("tensor", "channel"), default="tensor")
    p.add_argument("--axis", choices=("row", "column"), default="row")
    p.add_argument("--mode", choices=("symmetric", "asymmetric"), default="symmetric")
    _add_common(p)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("analyze", help="entropy/ratio report per (tensor, scheme, codec)")
    p.add_argument("model")
    p.add_argument("--schemes", default="tensor,channel")
    p.add_argument("--codecs", default="huffman,tans")
    p.add_argument("--axis", choices=("row", "column"), default="row")
    p.add_argument("--mode", choices=("symmetric", "asymmetric"), default="symmetric")
    p.add_argument("--table-log", type=int, default=codecs.DEFAULT_TABLE_LOG)
    p.add_argument("--level", type=int, default=3)
    _add_common(p, threads=True, output=True, jsonflag=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("compress", help="compress a raw file into a blob")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--codec", choices=codecs.ALL_CODECS, default="tans")
    p.add_argument("--table-log", type=int, default=codecs.DEFAULT_TABLE_LOG)
    p.add_argument("--level", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("decompress", help="restore a blob to the original file")
    p.add_argument("input")
    p.add_argument("out")
    _add_common(p)
    p.set_defaults(func=_cmd_decompress)

    p = sub.add_parser("pack", help="model file -> compressed container")
    p.add_argument("model")
    p.add_argument("out")
    p.add_argument("--codec", choices=codecs.ALL_CODECS, default="tans")
    p.add_argument("--scheme", choices=("tensor", "channel"), default="tensor")
    p.add_argument("--axis", choices=("row", "column"), default="row")
    p.add_argument("--mode", choices=("symmetric", "asymmetric"), default="symmetric")
    p.add_argument("--table-log", type=int, default=codecs.DEFAULT_TABLE_LOG)
    p.add_argument("--level", type=int, default=3)
    _add_common(p, threads=True)
    p.set_defaults(func=_cmd_pack)

    p = sub.add_parser("unpack", help="container -> int8 model (or float32)")
    p.add_argument("container")
    p.add_argument("out")
    p.add_argument("--dequantize", action="store_true", help="emit float32 tensors")
    _add_common(p, threads=True)
    p.set_defaults(func=_cmd_unpack)

    p = sub.add_parser("verify", help="integrity-check a container")
    p.add_argument("container")
    _add_common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bench-speed", help="codec throughput (single-threaded)")
    p.add_argument("--codecs", default="huffman,tans")
    p.add_argument("--input", help="benchmark on this file's bytes")
    p.add_argument("--size-mb", type=int, default=4, help="synthetic input size")
    p.add_argument("--sigma", type=float, default=20.0, help="synthetic int8 spread")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    _add_common(p, output=True, jsonflag=True)
    p.set_defaults(func=_cmd_bench_speed)

    p = sub.add_parser("bench-load", help="raw vs compressed loading time")
    p.add_argument("container")
    p.add_argument("raw")
    p.add_argument(
        "--strategy", choices=tuple(_STRATEGY_ALIASES), default="read",
        help="read = buffered, mmap = memory-mapped",
    )
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--bandwidth-cap", type=float, help="pace storage to MB/s")
    p.add_argument("--decode-throughput", type=float, help="pace decode to MB/s")
    p.add_argument("--cold-cache", choices=("auto", "drop", "evict", "none"),
                   default="auto")
    p.add_argument("--evict-mb", type=int,
                   help="junk-file size for eviction (default: 2x RAM)")
    _add_common(p, output=True, jsonflag=True)
    p.set_defaults(func=_cmd_bench_load)

    p = sub.add_parser("sweep-alpha", help="smoothing-exponent sweep report")
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--activation", help="activation tensor file (first tensor)")
    p.add_argument("--weight", help="weight tensor file (first tensor)")
    p.add_argument("--rows", type=int, default=512)
    p.add_argument("--cols", type=int, default=512)
    p.add_argument("--outlier-fraction", type=float, default=0.01)
    p.add_argument("--outlier-scale", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--codec", choices=codecs.ALL_CODECS, default="tans")
    p.add_argument("--mode", choices=("symmetric", "asymmetric"), default="symmetric")
    _add_common(p, output=True, jsonflag=True)
    p.set_defaults(func=_cmd_sweep_alpha)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "config", None):
            with open(args.config) as f:
                cfg = json.load(f)
            if not isinstance(cfg, dict):
                raise ValidationError("--config: expected a JSON object")
            explicit = _explicit_dests(argv if argv is not None else sys.argv[1:])
            for key, value in cfg.items():
                dest = key.replace("-", "_")
                if not hasattr(args, dest) or dest in ("func", "cmd", "config"):
                    raise ValidationError(f"--config: unknown option '{key}'")
                if dest not in explicit:
                    setattr(args, dest, value)
        return args.func(args)
    except QmcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _explicit_dests(argv) -> set[str]:
    out = set()
    for a in argv:
        if a.startswith("--") and len(a) > 2:
            out.add(a[2:].split("=", 1)[0].replace("-", "_"))
    return out


if __name__ == "__main__":
    sys.exit(main())
