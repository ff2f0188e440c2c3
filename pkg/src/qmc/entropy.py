"""Order-0 information analysis of byte streams: histograms, Shannon
entropy, excess kurtosis, and the ideal (entropy-bound) compressed size.

int8 payloads are reinterpreted as unsigned bytes for histogramming; the
bijection (two's complement <-> 0..255) is fixed, so negative values count
near index 255. The entropy model is memoryless: match-based codecs (the
zstd adapter's LZ stage) may beat the resulting bound, the native order-0
coders cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _as_bytes_array(data) -> np.ndarray:
    """View input as a flat uint8 array without copying where possible."""
    if isinstance(data, (bytes, bytearray, memoryview)):
        return np.frombuffer(data, dtype=np.uint8)
    arr = np.asarray(data)
    if arr.dtype == np.int8:
        return arr.reshape(-1).view(np.uint8)
    if arr.dtype == np.uint8:
        return arr.reshape(-1)
    raise ValidationError(f"expected bytes or an int8/uint8 array, got {arr.dtype}")


@dataclass(frozen=True)
class Histogram:
    """256-bin symbol counts over byte values."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (256,):
            raise ValidationError("histogram needs exactly 256 bins")
        if (c < 0).any():
            raise ValidationError("histogram counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def distinct_symbols(self) -> int:
        return int((self.counts > 0).sum())

    def __add__(self, other: "Histogram") -> "Histogram":
        return Histogram(self.counts + other.counts)


@dataclass(frozen=True)
class EntropyReport:
    entropy_bits: float
    excess_kurtosis: float
    ideal_size_bytes: int
    distinct_symbols: int


def histogram(data) -> Histogram:
    """Exact byte-value counts of a non-empty byte sequence."""
    arr = _as_bytes_array(data)
    if arr.size == 0:
        raise ValidationError("cannot histogram empty input")
    return Histogram(np.bincount(arr, minlength=256))


def entropy_bits(h: Histogram) -> float:
    """Shannon entropy -sum p*log2(p) of the empirical distribution, in
    bits per symbol. Zero-count symbols contribute nothing."""
    total = h.total
    if total <= 0:
        raise ValidationError("entropy of an empty histogram is undefined")
    c = h.counts[h.counts > 0].astype(np.float64)
    p = c / total
    return float(-np.sum(p * np.log2(p)))


def ideal_compressed_size(h: Histogram) -> int:
    """Entropy lower bound on the compressed size, in whole bytes."""
    return math.ceil(entropy_bits(h) * h.total / 8.0)


def excess_kurtosis(values) -> float:
    """Population excess kurtosis m4/m2^2 - 3 of a numeric sequence.

    Positive = peakier than Gaussian (leptokurtic), negative = flatter
    (platykurtic). Requires length >= 4 and nonzero variance.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size < 4:
        raise ValidationError("kurtosis needs at least 4 values")
    d = v - v.mean()
    m2 = np.mean(d * d)
    if m2 == 0.0:
        raise ValidationError("kurtosis undefined for zero-variance data")
    m4 = np.mean(d**4)
    return float(m4 / (m2 * m2) - 3.0)


def entropy_report(data) -> EntropyReport:
    """Full order-0 report of an int8/byte payload.

    Entropy and ideal size are computed over the byte alphabet; kurtosis
    over the signed int8 values (distribution shape of the quantized grid).
    """
    arr = _as_bytes_array(data)
    h = histogram(arr)
    signed = arr.view(np.int8)
    try:
        kurt = excess_kurtosis(signed)
    except ValidationError:
        kurt = float("nan")
    return EntropyReport(
        entropy_bits=entropy_bits(h),
        excess_kurtosis=kurt,
        ideal_size_bytes=ideal_compressed_size(h),
        distinct_symbols=h.distinct_symbols,
    )
