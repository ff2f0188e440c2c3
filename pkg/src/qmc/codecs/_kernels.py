"""JIT-compiled per-symbol loops for the native entropy coders.

Everything here operates on plain numpy arrays with int64 tables so each
function compiles exactly once (cached on disk). Bit conventions:

- Huffman: MSB-first. The first bit written is bit 7 of byte 0; the last
  byte is padded with zero bits in its low positions.
- tANS: LSB-first. Bit i of the stream is bit (i & 7) of byte (i >> 3);
  the last byte is padded with zero bits in its high positions. The
  decoder walks the stream backward from the recorded bit count.

Decoder kernels return a status: >= 0 success (Huffman: consumed bits),
-1 invalid code, -2 bitstream over/underrun, -3 leftover bits,
-4 final-state mismatch.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def huff_encode(data, codes, lens, out):
    """Encode bytes with canonical codes; returns the bit count."""
    acc = 0
    cnt = 0
    j = 0
    nbits = 0
    for i in range(data.size):
        s = data[i]
        l = lens[s]
        acc = (acc << l) | codes[s]
        cnt += l
        nbits += l
        while cnt >= 8:
            out[j] = (acc >> (cnt - 8)) & 0xFF
            j += 1
            cnt -= 8
            acc &= (1 << cnt) - 1
    if cnt > 0:
        out[j] = (acc << (8 - cnt)) & 0xFF
    return nbits


@njit(cache=True, nogil=True)
def huff_decode(bits, nbits, n, lut_sym, lut_len, out):
    """Decode n symbols via the 15-bit prefix LUT; returns consumed bits."""
    acc = 0
    cnt = 0
    pos = 0
    consumed = 0
    size = bits.size
    for i in range(n):
        while cnt < 15 and pos < size:
            acc = ((acc & ((1 << cnt) - 1)) << 8) | bits[pos]
            pos += 1
            cnt += 8
        if cnt >= 15:
            idx = (acc >> (cnt - 15)) & 0x7FFF
        else:
            idx = ((acc & ((1 << cnt) - 1)) << (15 - cnt)) & 0x7FFF
        l = lut_len[idx]
        if l == 0:
            return -1
        if consumed + l > nbits:
            return -2
        out[i] = lut_sym[idx]
        consumed += l
        cnt -= l
    return consumed


@njit(cache=True, nogil=True)
def tans_spread(norm, table_log):
    """Place symbols over the state table with the stride 5/8*size + 3."""
    size = 1 << table_log
    step = (size >> 1) + (size >> 3) + 3
    mask = size - 1
    table = np.empty(size, dtype=np.int64)
    pos = 0
    for s in range(256):
        for _ in range(norm[s]):
            table[pos] = s
            pos = (pos + step) & mask
    return table


@njit(cache=True, nogil=True)
def tans_encode_tables(spread, norm, table_log):
    """Per-symbol encode transforms and the next-state table.

    For symbol s with normalized count q: maxbits = table_log - floor(log2 q),
    minstate = q << maxbits; a state below minstate emits one bit fewer.
    delta[s] + (state >> nbits) indexes next_state.
    """
    size = 1 << table_log
    next_state = np.zeros(size, dtype=np.int64)
    delta = np.zeros(256, dtype=np.int64)
    maxbits = np.zeros(256, dtype=np.int64)
    minstate = np.zeros(256, dtype=np.int64)
    cumul = np.zeros(256, dtype=np.int64)
    total = 0
    for s in range(256):
        cumul[s] = total
        q = norm[s]
        total += q
        if q > 0:
            delta[s] = cumul[s] - q
            h = 0
            while (1 << (h + 1)) <= q:
                h += 1
            maxbits[s] = table_log - h
            minstate[s] = q << maxbits[s]
    fill = cumul.copy()
    for u in range(size):
        s = spread[u]
        next_state[fill[s]] = size + u
        fill[s] += 1
    return next_state, delta, maxbits, minstate


@njit(cache=True, nogil=True)
def tans_decode_tables(spread, norm, table_log):
    """Per-cell symbol, bit count, and new-state base for decoding."""
    size = 1 << table_log
    sym = np.zeros(size, dtype=np.int64)
    nb = np.zeros(size, dtype=np.int64)
    new_state = np.zeros(size, dtype=np.int64)
    nxt = norm.copy()
    for u in range(size):
        s = spread[u]
        j = nxt[s]
        nxt[s] += 1
        h = 0
        while (1 << (h + 1)) <= j:
            h += 1
        k = table_log - h
        sym[u] = s
        nb[u] = k
        new_state[u] = (j << k) - size
    return sym, nb, new_state


@njit(cache=True, nogil=True)
def tans_encode(data, next_state, delta, maxbits, minstate, table_log, out):
    """Encode in reverse symbol order from state 2^table_log.

    Returns (bit count, final state); the final state seeds the decoder.
    """
    x = 1 << table_log
    acc = 0
    cnt = 0
    j = 0
    nbits = 0
    for i in range(data.size - 1, -1, -1):
        s = data[i]
        nb = maxbits[s]
        if x < minstate[s]:
            nb -= 1
        acc |= (x & ((1 << nb) - 1)) << cnt
        cnt += nb
        nbits += nb
        while cnt >= 8:
            out[j] = acc & 0xFF
            j += 1
            acc >>= 8
            cnt -= 8
        x = next_state[delta[s] + (x >> nb)]
    if cnt > 0:
        out[j] = acc & 0xFF
    return nbits, x


@njit(cache=True, nogil=True)
def tans_decode(bits, nbits, n, state, sym, nb, new_state, table_log, out):
    """Decode n symbols walking the bitstream backward from nbits.

    bits must carry >= 4 zero bytes of slack beyond the stream. A clean
    stream ends at bit position 0 with the state back at 2^table_log.
    """
    size = 1 << table_log
    x = state - size
    pos = nbits
    for i in range(n):
        out[i] = sym[x]
        k = nb[x]
        pos -= k
        if pos < 0:
            return -2
        b = pos >> 3
        off = pos & 7
        v = bits[b] | (bits[b + 1] << 8) | (bits[b + 2] << 16)
        x = new_state[x] + ((v >> off) & ((1 << k) - 1))
    if pos != 0:
        return -3
    if x != 0:
        return -4
    return 0
