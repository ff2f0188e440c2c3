"""Experiment harness: per-layer compression-ratio reports, smoothing
sweeps, and storage-loading benchmarks.

Ratios use C = int8 bytes / total blob bytes (recomputable from the
container alone); the overall ratio against float32 storage is 4*C.
Loading benchmarks implement both a buffered sequential read and a
memory-mapped strategy, against a raw flat int8 dump baseline. Timing is
single-threaded. For hardware-independent checks the harness can pace
storage at a bandwidth cap and decode at a target throughput; it reports
the sequential wall time and the overlapped-decode model (max of the two
phases) side by side.
"""

from __future__ import annotations

import csv
import io
import mmap
import os
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import codecs
from .codecs.blob import Blob
from .container import ContainerReader
from .entropy import entropy_report
from .errors import ValidationError
from .quant import (
    compute_smoothing_factors,
    quant_error,
    quantize_channel_wise,
    quantize_smoothed,
    quantize_tensor_wise,
)
from .tensorio import ChannelStats, Tensor, TensorMap

SCHEMES = ("tensor", "channel")


def layer_group(name: str) -> str:
    """Group key for a tensor name: last two non-index path components.

    'h.11.mlp.c_proj.weight' -> 'mlp.c_proj'.
    """
    parts = name.split(".")
    if parts and parts[-1] in ("weight", "bias"):
        parts = parts[:-1]
    parts = [p for p in parts if not p.isdigit()]
    return ".".join(parts[-2:]) if parts else name


def _rows_to_csv(rows, out) -> None:
    if not rows:
        return
    names = [f.name for f in fields(rows[0])]
    w = csv.writer(out)
    w.writerow(names)
    for r in rows:
        w.writerow(["" if getattr(r, n) is None else getattr(r, n) for n in names])


@dataclass(frozen=True)
class RatioRow:
    tensor: str
    layer_group: str
    scheme: str
    codec: str
    entropy_bits: float
    excess_kurtosis: float
    ideal_size_bytes: int
    actual_size_bytes: int
    c_ratio: float
    total_ratio_vs_f32: float
    original_len: int
    mse: float
    max_abs_err: float


@dataclass
class RatioReport:
    rows: list
    notices: list

    def to_csv(self, out) -> None:
        _rows_to_csv(self.rows, out)

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def mean_c(self, scheme: str, codec: str, group: str | None = None) -> float:
        vals = [
            r.c_ratio
            for r in self.rows
            if r.scheme == scheme
            and r.codec == codec
            and (group is None or r.layer_group == group)
        ]
        if not vals:
            raise ValidationError(f"no rows for scheme={scheme} codec={codec}")
        return sum(vals) / len(vals)

    def group_means(self, scheme: str, codec: str) -> dict[str, float]:
        groups = sorted({r.layer_group for r in self.rows})
        return {g: self.mean_c(scheme, codec, g) for g in groups}


def _quantize_for(scheme: str, t: Tensor, axis: str, mode: str):
    if scheme == "tensor":
        return quantize_tensor_wise(t, mode)
    if scheme == "channel":
        return quantize_channel_wise(t, axis, mode)
    raise ValidationError(f"unknown scheme '{scheme}' (expected tensor|channel)")


def analyze_model(
    m: TensorMap,
    schemes=SCHEMES,
    codecs_list=("huffman", "tans"),
    *,
    axis: str = "row",
    mode: str = "symmetric",
    table_log: int = codecs.DEFAULT_TABLE_LOG,
    level: int = 3,
    threads: int | None = None,
) -> RatioReport:
    """Quantize and compress every rank-2 tensor under each (scheme, codec).

    Non-matrix tensors are skipped with a notice; per-tensor failures are
    recorded as notices rather than aborting the run.
    """
    report = RatioReport(rows=[], notices=[])
    work = []
    for t in m:
        if t.data.ndim != 2:
            report.notices.append(f"skipped '{t.name}': rank {t.data.ndim} (not 2)")
            continue
        if t.dtype != "float32":
            report.notices.append(f"skipped '{t.name}': dtype {t.dtype}")
            continue
        work.append(t)

    def _one(t: Tensor):
        rows, notes = [], []
        for scheme in schemes:
            try:
                q = _quantize_for(scheme, t, axis, mode)
                err = quant_error(t, q)
                rep = entropy_report(q.data)
                for codec in codecs_list:
                    blob = codecs.compress(
                        q.data, codec, table_log=table_log, level=level
                    )
                    c = codecs.compression_ratio(blob.original_len, blob)
                    rows.append(
                        RatioRow(
                            tensor=t.name,
                            layer_group=layer_group(t.name),
                            scheme=scheme,
                            codec=codec,
                            entropy_bits=rep.entropy_bits,
                            excess_kurtosis=rep.excess_kurtosis,
                            ideal_size_bytes=rep.ideal_size_bytes,
                            actual_size_bytes=blob.total_len(),
                            c_ratio=c,
                            total_ratio_vs_f32=codecs.total_ratio_vs_f32(c),
                            original_len=blob.original_len,
                            mse=err.mse,
                            max_abs_err=err.max_abs_err,
                        )
                    )
            except Exception as e:  # per-tensor failures are non-fatal
                notes.append(f"failed '{t.name}' ({scheme}): {e}")
        return rows, notes

    if threads and threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one, work))
    else:
        results = [_one(t) for t in work]
    for rows, notes in results:
        report.rows.extend(rows)
        report.notices.extend(notes)
    return report


# --- smoothing sweep -------------------------------------------------------


@dataclass(frozen=True)
class AlphaRow:
    alpha: float | None
    subject: str  # activation | weight
    variant: str  # plain | smoothed
    entropy_bits: float
    c_ratio: float
    mse: float
    max_abs_err: float
    relative_frobenius_err: float


@dataclass
class AlphaSweepReport:
    rows: list

    def to_csv(self, out) -> None:
        _rows_to_csv(self.rows, out)

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def row(self, subject: str, variant: str, alpha=None) -> AlphaRow:
        for r in self.rows:
            if r.subject == subject and r.variant == variant and r.alpha == alpha:
                return r
        raise ValidationError(f"no row for {subject}/{variant}/alpha={alpha}")


def sweep_alpha(
    x: Tensor,
    w: Tensor,
    alphas,
    *,
    codec: str = "tans",
    mode: str = "symmetric",
) -> AlphaSweepReport:
    """Smoothing sweep: per alpha, smooth-quantize X and W tensor-wise and
    record entropy, C, and reconstruction error against the originals.

    Channel stats are the column abs-maxima of x itself. Plain tensor-wise
    baselines appear once with alpha empty.
    """
    stats = ChannelStats.from_activation(x)
    rows = []

    def _measure(subject, variant, alpha, q, orig):
        err = quant_error(orig, q)
        rep = entropy_report(q.data)
        blob = codecs.compress(q.data, codec)
        rows.append(
            AlphaRow(
                alpha=alpha,
                subject=subject,
                variant=variant,
                entropy_bits=rep.entropy_bits,
                c_ratio=codecs.compression_ratio(blob.original_len, blob),
                mse=err.mse,
                max_abs_err=err.max_abs_err,
                relative_frobenius_err=err.relative_frobenius_err,
            )
        )

    _measure("activation", "plain", None, quantize_tensor_wise(x, mode), x)
    _measure("weight", "plain", None, quantize_tensor_wise(w, mode), w)
    for alpha in alphas:
        s = compute_smoothing_factors(stats, w, float(alpha))
        _measure(
            "activation", "smoothed", float(alpha),
            quantize_smoothed(x, s, "activation", mode), x,
        )
        _measure(
            "weight", "smoothed", float(alpha),
            quantize_smoothed(w, s, "weight", mode), w,
        )
    return AlphaSweepReport(rows)


# --- loading benchmark ------------------------------------------------------

STRATEGIES = ("buffered_read", "memory_mapped")
_CHUNK = 1 << 20


@dataclass(frozen=True)
class LoadReport:
    strategy: str
    compressed: bool
    wall_time_s: float
    bytes_from_storage: int
    decode_time_s: float
    io_time_s: float
    overlapped_wall_s: float
    effective_throughput_mb_s: float


def write_raw_int8(tensors, path) -> int:
    """Flat headerless int8 dump (the before-compression baseline)."""
    total = 0
    with open(os.fspath(path), "wb") as f:
        for t in tensors:
            raw = t.payload_bytes()
            f.write(raw)
            total += len(raw)
    return total


class _Pacer:
    """Stretches each accounted window to at least bytes/rate seconds.

    Window-local pacing keeps the io and decode phases separately honest
    even when they interleave, so their reported component times add up
    like a sequential pipeline.
    """

    def __init__(self, rate_mb_s: float | None):
        self.rate = rate_mb_s

    def account(self, n: int, window_start: float) -> None:
        if not self.rate:
            return
        dt = n / (self.rate * 1e6) - (time.perf_counter() - window_start)
        if dt > 0:
            time.sleep(dt)


def drop_page_cache() -> bool:
    """Best-effort cold-cache: privileged drop_caches, else False."""
    try:
        with open("/proc/sys/vm/drop_caches", "w") as f:
            f.write("3")
        return True
    except OSError:
        return False


_evict_file: tuple[str, int] | None = None


def evict_page_cache(nbytes: int | None = None) -> None:
    """Unprivileged cold-cache fallback: stream a junk file through the
    page cache. Defaults to twice physical RAM so resident pages of the
    benchmarked files are displaced; the junk file persists across calls.
    """
    global _evict_file
    if nbytes is None:
        nbytes = 2 * os.sysconf("SC_PHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    nbytes = max(nbytes, 1 << 20)
    if _evict_file is None or _evict_file[1] < nbytes or not os.path.exists(
        _evict_file[0]
    ):
        import tempfile

        fd, p = tempfile.mkstemp(prefix="qmc-evict-")
        chunk = os.urandom(1 << 20)
        with os.fdopen(fd, "wb") as f:
            for _ in range(-(-nbytes // len(chunk))):
                f.write(chunk)
        _evict_file = (p, nbytes)
    with open(_evict_file[0], "rb") as f:
        while f.read(1 << 22):
            pass


def _prepare_cold(mode: str, paced: bool, evict_bytes: int | None) -> None:
    if mode == "none" or paced:
        return
    if mode == "evict":
        evict_page_cache(evict_bytes)
        return
    if drop_page_cache():
        return
    if mode == "drop":
        raise ValidationError("cold_cache='drop' requires privileges")
    warnings.warn(
        "cannot drop the page cache (unprivileged); evicting via junk-file "
        "read-through instead"
    )
    evict_page_cache(evict_bytes)


def _load_raw(path, strategy, pacer: _Pacer) -> tuple[float, int]:
    size = os.path.getsize(path)
    t0 = time.perf_counter()
    if strategy == "buffered_read":
        with open(path, "rb") as f:
            while True:
                tw = time.perf_counter()
                chunk = f.read(_CHUNK)
                if not chunk:
                    break
                pacer.account(len(chunk), tw)
    else:
        with open(path, "rb") as f:
            mm = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
            try:
                arr = np.frombuffer(mm, dtype=np.uint8)
                try:
                    for start in range(0, size, _CHUNK):
                        tw = time.perf_counter()
                        # touch every page in the window
                        arr[start : start + _CHUNK : mmap.PAGESIZE].sum()
                        pacer.account(min(_CHUNK, size - start), tw)
                finally:
                    del arr  # release the buffer so the map can close
            finally:
                mm.close()
    return time.perf_counter() - t0, size


def _load_compressed(
    path, strategy, pacer: _Pacer, decode_mb_s: float | None
) -> tuple[float, float, float, int, int]:
    """Returns (wall, io_time, decode_time, bytes_read, decoded_bytes)."""
    t0 = time.perf_counter()
    io_time = decode_time = 0.0
    decoded = 0
    with ContainerReader(path) as r:
        mm = None
        f = None
        if strategy == "memory_mapped":
            f = open(path, "rb")
            mm = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
        try:
            decode_pacer = _Pacer(decode_mb_s)
            for e in r.manifest["tensors"]:
                ti = time.perf_counter()
                if mm is not None:
                    start = r.region_start + e["blob_offset"]
                    raw = mm[start : start + e["blob_len"]]
                    r.bytes_read += len(raw)
                else:
                    raw = r.read_blob_bytes(e["name"])
                pacer.account(len(raw), ti)
                td = time.perf_counter()
                io_time += td - ti
                blob = Blob.from_bytes(raw)
                data = codecs.decompress(blob)
                decoded += len(data)
                decode_pacer.account(len(data), td)
                decode_time += time.perf_counter() - td
        finally:
            if mm is not None:
                mm.close()
                f.close()
        bytes_read = r.bytes_read
    return time.perf_counter() - t0, io_time, decode_time, bytes_read, decoded


def bench_load(
    container_path,
    raw_path,
    strategy: str = "buffered_read",
    trials: int = 3,
    *,
    bandwidth_cap_mb_s: float | None = None,
    decode_mb_s: float | None = None,
    cold_cache: str = "auto",
    evict_bytes: int | None = None,
) -> tuple[LoadReport, LoadReport]:
    """Median raw vs compressed load times under one strategy.

    With bandwidth_cap_mb_s/decode_mb_s set, storage and decode are paced
    to those rates (hardware-independent model check); page-cache state is
    then irrelevant. cold_cache: 'auto' (privileged drop where possible,
    else junk-file eviction with a warning), 'drop' (require privileges),
    'evict' (always read evict_bytes of junk through the cache; defaults
    to twice physical RAM), or 'none'.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy '{strategy}'")
    if cold_cache not in ("auto", "drop", "evict", "none"):
        raise ValidationError(f"unknown cold_cache mode '{cold_cache}'")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    paced = bandwidth_cap_mb_s is not None

    # untimed warmup decode: loads/JITs codec kernels before any timing
    _load_compressed(container_path, strategy, _Pacer(None), None)
    raw_walls, comp = [], []
    raw_size = os.path.getsize(raw_path)
    for _ in range(trials):
        _prepare_cold(cold_cache, paced, evict_bytes)
        wall, _ = _load_raw(raw_path, strategy, _Pacer(bandwidth_cap_mb_s))
        raw_walls.append(wall)
        _prepare_cold(cold_cache, paced, evict_bytes)
        comp.append(
            _load_compressed(
                container_path, strategy, _Pacer(bandwidth_cap_mb_s), decode_mb_s
            )
        )
    raw_wall = statistics.median(raw_walls)
    wall = statistics.median(c[0] for c in comp)
    io_time = statistics.median(c[1] for c in comp)
    decode_time = statistics.median(c[2] for c in comp)
    bytes_read = comp[0][3]
    decoded = comp[0][4]
    raw_report = LoadReport(
        strategy=strategy,
        compressed=False,
        wall_time_s=raw_wall,
        bytes_from_storage=raw_size,
        decode_time_s=0.0,
        io_time_s=raw_wall,
        overlapped_wall_s=raw_wall,
        effective_throughput_mb_s=raw_size / 1e6 / raw_wall if raw_wall > 0 else 0.0,
    )
    comp_report = LoadReport(
        strategy=strategy,
        compressed=True,
        wall_time_s=wall,
        bytes_from_storage=bytes_read,
        decode_time_s=decode_time,
        io_time_s=io_time,
        overlapped_wall_s=max(io_time, decode_time),
        effective_throughput_mb_s=decoded / 1e6 / wall if wall > 0 else 0.0,
    )
    return raw_report, comp_report
