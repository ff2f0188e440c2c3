"""Tabled ANS coder (finite-state-entropy style) over the byte alphabet.

Counts are normalized to sum exactly 2^table_log by largest-remainder
apportionment (every occurring symbol keeps at least one slot), symbols
are spread over the state table with the stride 5/8*size + 3, and symbols
are encoded in reverse so decoding streams forward. The encoder starts at
state 2^table_log and stores its final state; a clean decode therefore
ends back at 2^table_log with every payload bit consumed, which doubles
as an integrity check.

Block layout: table_log u8 | 256 LEB128 counts | final_state u16 LE |
nbits u32 LE | bitstream (LSB-first, zero-padded).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..entropy import Histogram
from ..errors import FormatError, IntegrityError, ValidationError
from . import _kernels

TABLE_LOG_MIN = 5
TABLE_LOG_MAX = 12
DEFAULT_TABLE_LOG = 12


@dataclass(frozen=True)
class NormalizedCounts:
    """256 integers summing to exactly 2^table_log, >= 1 iff occurring."""

    table_log: int
    norm: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.norm, dtype=np.int64)
        if n.shape != (256,) or (n < 0).any():
            raise ValidationError("normalized counts must be 256 non-negative ints")
        if int(n.sum()) != 1 << self.table_log:
            raise ValidationError("normalized counts must sum to 2^table_log")
        n.setflags(write=False)
        object.__setattr__(self, "norm", n)


def _check_table_log(table_log: int) -> None:
    if not TABLE_LOG_MIN <= table_log <= TABLE_LOG_MAX:
        raise ValidationError(
            f"table_log must be in [{TABLE_LOG_MIN}, {TABLE_LOG_MAX}], got {table_log}"
        )


def normalize_counts(h, table_log: int = DEFAULT_TABLE_LOG) -> NormalizedCounts:
    """Scale histogram counts to sum 2^table_log (largest remainder).

    Occurring symbols always keep >= 1 slot. Raises if the table has
    fewer slots than distinct symbols.
    """
    _check_table_log(table_log)
    counts = h.counts if isinstance(h, Histogram) else np.asarray(h, dtype=np.int64)
    if counts.shape != (256,):
        raise ValidationError("expected a 256-bin histogram")
    total = int(counts.sum())
    if total <= 0:
        raise ValidationError("cannot normalize an empty histogram")
    size = 1 << table_log
    occurring = counts > 0
    distinct = int(occurring.sum())
    if distinct > size:
        raise ValidationError(
            f"table_log {table_log} too small for {distinct} distinct symbols"
        )
    norm = np.zeros(256, dtype=np.int64)
    if distinct == 1:
        norm[int(np.flatnonzero(occurring)[0])] = size
        return NormalizedCounts(table_log, norm)

    ideal = counts.astype(np.float64) * (size / total)
    floors = np.floor(ideal).astype(np.int64)
    norm = np.where(occurring, np.maximum(floors, 1), 0)
    remainder = ideal - floors
    diff = size - int(norm.sum())
    if diff > 0:
        # hand out leftover slots by largest remainder, low symbol first on ties
        order = np.lexsort((np.arange(256), -remainder))
        picked = 0
        for s in order:
            if picked == diff:
                break
            if occurring[s]:
                norm[s] += 1
                picked += 1
    elif diff < 0:
        # reclaim slots from the most over-allocated symbols, keeping >= 1
        overshoot = norm - ideal
        order = np.lexsort((np.arange(256), -overshoot))
        while diff < 0:
            for s in order:
                if norm[s] > 1:
                    norm[s] -= 1
                    diff += 1
                    if diff == 0:
                        break
    return NormalizedCounts(table_log, norm)


def spread_symbols(nc: NormalizedCounts) -> np.ndarray:
    """The symbol-per-state-cell table used by both coder directions."""
    return _kernels.tans_spread(nc.norm, nc.table_log)


def _write_varints(values: np.ndarray) -> bytes:
    out = bytearray()
    for v in values:
        v = int(v)
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return bytes(out)


def _read_varints(buf: bytes, pos: int, count: int) -> tuple[np.ndarray, int]:
    values = np.empty(count, dtype=np.int64)
    for i in range(count):
        v = 0
        shift = 0
        while True:
            if pos >= len(buf):
                raise FormatError("tans header truncated inside counts")
            b = buf[pos]
            pos += 1
            v |= (b & 0x7F) << shift
            if b < 0x80:
                if b == 0 and shift != 0:
                    raise FormatError("non-minimal varint in tans header")
                break
            shift += 7
            if shift > 14:
                raise FormatError("oversized varint in tans header")
        values[i] = v
    return values, pos


def encode_block(data: np.ndarray, table_log: int = DEFAULT_TABLE_LOG) -> bytes:
    """Compress one block of bytes (uint8 array) to its wire form."""
    _check_table_log(table_log)
    counts = np.bincount(data, minlength=256)
    nc = normalize_counts(counts, table_log)
    spread = _kernels.tans_spread(nc.norm, table_log)
    next_state, delta, maxbits, minstate = _kernels.tans_encode_tables(
        spread, nc.norm, table_log
    )
    out = np.zeros((table_log * data.size) // 8 + 8, dtype=np.uint8)
    nbits, final_state = _kernels.tans_encode(
        data, next_state, delta, maxbits, minstate, table_log, out
    )
    nbits, final_state = int(nbits), int(final_state)
    nbytes = (nbits + 7) // 8
    header = (
        bytes([table_log])
        + _write_varints(nc.norm)
        + struct.pack("<HI", final_state, nbits)
    )
    return header + out[:nbytes].tobytes()


def decode_block(block: bytes, n: int) -> np.ndarray:
    """Decompress one block back to exactly n bytes, validating everything."""
    if len(block) < 1:
        raise FormatError("empty tans block")
    table_log = block[0]
    if not TABLE_LOG_MIN <= table_log <= TABLE_LOG_MAX:
        raise FormatError(f"tans table_log {table_log} out of range")
    size = 1 << table_log
    norm, pos = _read_varints(block, 1, 256)
    if int(norm.sum()) != size or (norm > size).any():
        raise FormatError("tans counts do not sum to 2^table_log")
    if pos + 6 > len(block):
        raise FormatError("tans header truncated")
    final_state, nbits = struct.unpack_from("<HI", block, pos)
    pos += 6
    if not size <= final_state < 2 * size:
        raise FormatError(f"tans final state {final_state} out of range")
    nbytes = (nbits + 7) // 8
    if len(block) != pos + nbytes:
        raise IntegrityError(
            f"tans block length {len(block)} != header + {nbytes} stream bytes"
        )
    stream = np.frombuffer(block, dtype=np.uint8, offset=pos)
    if nbits % 8 and stream.size and int(stream[-1]) >> (nbits % 8):
        raise IntegrityError("nonzero padding bits in tans stream")
    padded = np.zeros(stream.size + 4, dtype=np.uint8)
    padded[: stream.size] = stream
    spread = _kernels.tans_spread(norm, table_log)
    sym, nb, new_state = _kernels.tans_decode_tables(spread, norm, table_log)
    out = np.empty(n, dtype=np.uint8)
    status = int(
        _kernels.tans_decode(
            padded, nbits, n, final_state, sym, nb, new_state, table_log, out
        )
    )
    if status == -2:
        raise IntegrityError("tans stream truncated")
    if status == -3:
        raise IntegrityError("tans stream has unconsumed payload bits")
    if status == -4:
        raise IntegrityError("tans decode did not end at the initial state")
    declared = norm > 0
    present = np.bincount(out, minlength=256) > 0
    if not np.array_equal(declared, present):
        raise IntegrityError("tans symbol table does not match decoded payload")
    return out
