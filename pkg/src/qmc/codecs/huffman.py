"""Canonical Huffman coder over the byte alphabet.

Code lengths are capped at 15; when the optimal tree is deeper, lengths
are recomputed with the package-merge algorithm. Only the lengths are
stored (256 packed nibbles, 128 bytes); canonical codes are rebuilt from
them on decode, so the block header is constant-size and bit-exact.

Block layout: lengths[128] | nbits u32 LE | bitstream (MSB-first,
zero-padded). Decoding validates the Kraft sum, the exact bit count, the
zero padding, and that the declared symbol set equals the decoded one, so
any single-bit corruption raises a typed error.
"""

from __future__ import annotations

import heapq
import struct

import numpy as np

from ..errors import FormatError, IntegrityError, ValidationError
from . import _kernels

MAX_CODE_LEN = 15
_HEADER_LEN = 128 + 4
_KRAFT_ONE = 1 << MAX_CODE_LEN


def _natural_lengths(counts: np.ndarray) -> np.ndarray:
    """Optimal (unbounded) Huffman code lengths, deterministic tie-breaks."""
    syms = np.flatnonzero(counts)
    heap = [(int(counts[s]), int(s)) for s in syms]
    heapq.heapify(heap)
    children: dict[int, tuple[int, int]] = {}
    uid = 256
    while len(heap) > 1:
        wa, a = heapq.heappop(heap)
        wb, b = heapq.heappop(heap)
        children[uid] = (a, b)
        heapq.heappush(heap, (wa + wb, uid))
        uid += 1
    root = heap[0][1]
    lengths = np.zeros(256, dtype=np.int64)
    stack = [(root, 0)]
    while stack:
        node, depth = stack.pop()
        if node < 256:
            lengths[node] = depth
        else:
            a, b = children[node]
            stack.append((a, depth + 1))
            stack.append((b, depth + 1))
    return lengths


def _package_merge(counts: np.ndarray, max_len: int) -> np.ndarray:
    """Length-limited optimal code lengths (package-merge).

    Each symbol's length is the number of chosen packages containing it;
    choosing the 2(n-1) lightest packages of the final level yields a
    Kraft-tight prefix code of depth <= max_len.
    """
    syms = [int(s) for s in np.flatnonzero(counts)]
    n = len(syms)
    if n < 2:
        raise ValidationError("package-merge needs at least two symbols")
    if (1 << max_len) < n:
        raise ValidationError(f"cannot code {n} symbols within {max_len} bits")
    items = sorted((int(counts[s]), (s,)) for s in syms)
    level = list(items)
    for _ in range(max_len - 1):
        pairs = [
            (level[i][0] + level[i + 1][0], level[i][1] + level[i + 1][1])
            for i in range(0, len(level) - 1, 2)
        ]
        level = sorted(items + pairs)
    lengths = np.zeros(256, dtype=np.int64)
    for _, leaves in level[: 2 * (n - 1)]:
        for s in leaves:
            lengths[s] += 1
    return lengths


def code_lengths(counts: np.ndarray, max_len: int = MAX_CODE_LEN) -> np.ndarray:
    """Per-symbol code lengths for a histogram (0 = absent symbol).

    A single distinct symbol gets the degenerate 1-bit code.
    """
    counts = np.asarray(counts, dtype=np.int64)
    distinct = int((counts > 0).sum())
    if distinct == 0:
        raise ValidationError("cannot build a code for empty input")
    lengths = np.zeros(256, dtype=np.int64)
    if distinct == 1:
        lengths[int(np.flatnonzero(counts)[0])] = 1
        return lengths
    lengths = _natural_lengths(counts)
    if lengths.max() > max_len:
        lengths = _package_merge(counts, max_len)
    return lengths


def canonical_codes(lengths: np.ndarray) -> np.ndarray:
    """Canonical codes from lengths: sorted by (length, symbol)."""
    lengths = np.asarray(lengths, dtype=np.int64)
    codes = np.zeros(256, dtype=np.int64)
    bl_count = np.bincount(lengths[lengths > 0], minlength=MAX_CODE_LEN + 1)
    next_code = 0
    first = np.zeros(MAX_CODE_LEN + 1, dtype=np.int64)
    for l in range(1, MAX_CODE_LEN + 1):
        next_code = (next_code + int(bl_count[l - 1])) << 1
        first[l] = next_code
    assign = first.copy()
    for s in range(256):
        l = int(lengths[s])
        if l > 0:
            codes[s] = assign[l]
            assign[l] += 1
    return codes


def _check_kraft(lengths: np.ndarray) -> None:
    nz = lengths[lengths > 0]
    if nz.size == 0:
        raise FormatError("code table declares no symbols")
    kraft = int(np.sum(1 << (MAX_CODE_LEN - nz)))
    if nz.size == 1:
        if int(nz[0]) != 1:
            raise FormatError("single-symbol table must use a 1-bit code")
        return
    if kraft != _KRAFT_ONE:
        raise FormatError("code lengths violate the Kraft equality")


def _pack_lengths(lengths: np.ndarray) -> bytes:
    nib = lengths.astype(np.uint8)
    return (nib[0::2] | (nib[1::2] << 4)).tobytes()


def _unpack_lengths(raw: bytes) -> np.ndarray:
    b = np.frombuffer(raw, dtype=np.uint8)
    lengths = np.empty(256, dtype=np.int64)
    lengths[0::2] = b & 0x0F
    lengths[1::2] = b >> 4
    return lengths


def _decode_lut(lengths: np.ndarray, codes: np.ndarray):
    lut_sym = np.zeros(1 << MAX_CODE_LEN, dtype=np.uint8)
    lut_len = np.zeros(1 << MAX_CODE_LEN, dtype=np.uint8)
    for s in np.flatnonzero(lengths):
        l = int(lengths[s])
        base = int(codes[s]) << (MAX_CODE_LEN - l)
        span = 1 << (MAX_CODE_LEN - l)
        lut_sym[base : base + span] = s
        lut_len[base : base + span] = l
    return lut_sym, lut_len


def encode_block(data: np.ndarray) -> bytes:
    """Compress one block of bytes (uint8 array) to its wire form."""
    counts = np.bincount(data, minlength=256)
    lengths = code_lengths(counts)
    codes = canonical_codes(lengths)
    out = np.zeros((MAX_CODE_LEN * data.size) // 8 + 8, dtype=np.uint8)
    nbits = int(_kernels.huff_encode(data, codes, lengths, out))
    nbytes = (nbits + 7) // 8
    return _pack_lengths(lengths) + struct.pack("<I", nbits) + out[:nbytes].tobytes()


def decode_block(block: bytes, n: int) -> np.ndarray:
    """Decompress one block back to exactly n bytes, validating everything."""
    if len(block) < _HEADER_LEN:
        raise FormatError("huffman block shorter than its header")
    lengths = _unpack_lengths(block[:128])
    _check_kraft(lengths)
    (nbits,) = struct.unpack_from("<I", block, 128)
    nbytes = (nbits + 7) // 8
    if len(block) != _HEADER_LEN + nbytes:
        raise IntegrityError(
            f"huffman block length {len(block)} != header + {nbytes} stream bytes"
        )
    bits = np.frombuffer(block, dtype=np.uint8, offset=_HEADER_LEN)
    if nbits % 8 and bits.size and int(bits[-1]) & ((1 << (8 - nbits % 8)) - 1):
        raise IntegrityError("nonzero padding bits in huffman stream")
    codes = canonical_codes(lengths)
    lut_sym, lut_len = _decode_lut(lengths, codes)
    out = np.empty(n, dtype=np.uint8)
    consumed = int(_kernels.huff_decode(bits, nbits, n, lut_sym, lut_len, out))
    if consumed == -1:
        raise IntegrityError("invalid huffman code in stream")
    if consumed == -2:
        raise IntegrityError("huffman stream truncated")
    if consumed != nbits:
        raise IntegrityError(
            f"huffman stream has {nbits - consumed} unconsumed payload bits"
        )
    declared = lengths > 0
    present = np.bincount(out, minlength=256) > 0
    if not np.array_equal(declared, present):
        raise IntegrityError("huffman symbol table does not match decoded payload")
    return out
