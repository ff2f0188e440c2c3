"""Lossless entropy coders behind one interface.

Native coders (canonical Huffman, tabled ANS) carry the order-0 entropy
science; `zstd` is an adapter to an external RFC 8878 implementation and
is feature-gated. All coders produce the same Blob wire format.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from ..errors import IntegrityError, ValidationError
from . import huffman, tans, zstd
from .blob import (
    BLOCK_SIZE,
    CODEC_IDS,
    Blob,
    compress,
    compression_ratio,
    decompress,
    total_ratio_vs_f32,
)
from .tans import DEFAULT_TABLE_LOG, NormalizedCounts, normalize_counts

NATIVE_CODECS = ("huffman", "tans")
ALL_CODECS = ("huffman", "tans", "zstd")

MIN_BENCH_BYTES = 1 << 20


def available_codecs() -> tuple[str, ...]:
    """Codecs usable in this environment (zstd needs a system library)."""
    return ALL_CODECS if zstd.available() else NATIVE_CODECS


@dataclass(frozen=True)
class SpeedReport:
    codec: str
    data_len: int
    comp_mb_s: float
    decomp_mb_s: float
    comp_seconds: tuple[float, ...]
    decomp_seconds: tuple[float, ...]


def bench_codec_speed(codec: str, data: bytes, repetitions: int = 5) -> SpeedReport:
    """Median single-threaded throughput (MB/s, decimal) over repetitions.

    Performs an untimed warmup pass (also triggering JIT compilation) and
    verifies the roundtrip stays exact while timing.
    """
    if len(data) < MIN_BENCH_BYTES:
        raise ValidationError("benchmark input must be at least 1 MiB")
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    blob = compress(data, codec)
    if decompress(blob) != data:
        raise IntegrityError(f"{codec} roundtrip failed during warmup")
    comp_t, decomp_t = [], []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        blob = compress(data, codec)
        comp_t.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        out = decompress(blob)
        decomp_t.append(time.perf_counter() - t0)
        if out != data:
            raise IntegrityError(f"{codec} roundtrip failed under timing")
    mb = len(data) / 1e6
    return SpeedReport(
        codec=codec,
        data_len=len(data),
        comp_mb_s=mb / statistics.median(comp_t),
        decomp_mb_s=mb / statistics.median(decomp_t),
        comp_seconds=tuple(comp_t),
        decomp_seconds=tuple(decomp_t),
    )


__all__ = [
    "ALL_CODECS",
    "BLOCK_SIZE",
    "Blob",
    "CODEC_IDS",
    "DEFAULT_TABLE_LOG",
    "NATIVE_CODECS",
    "NormalizedCounts",
    "SpeedReport",
    "available_codecs",
    "bench_codec_speed",
    "compress",
    "compression_ratio",
    "decompress",
    "huffman",
    "normalize_counts",
    "tans",
    "total_ratio_vs_f32",
    "zstd",
]
