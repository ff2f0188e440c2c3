"""Canonical Huffman: code construction, package-merge, block codec."""

import itertools
import struct

import numpy as np
import pytest

from qmc.codecs import huffman
from qmc.errors import FormatError, IntegrityError


def brute_force_min_cost(weights, max_len):
    """Exhaustive optimal length-limited code cost for tiny alphabets."""
    n = len(weights)
    best = None
    for lens in itertools.product(range(1, max_len + 1), repeat=n):
        if sum(2 ** (max_len - l) for l in lens) != (1 << max_len):
            continue  # only Kraft-tight assignments are canonical-codable
        cost = sum(w * l for w, l in zip(weights, lens))
        best = cost if best is None else min(best, cost)
    return best


class TestCodeLengths:
    def test_single_symbol_forced_to_one_bit(self):
        counts = np.zeros(256, dtype=np.int64)
        counts[0x41] = 1000
        lengths = huffman.code_lengths(counts)
        assert lengths[0x41] == 1 and lengths.sum() == 1

    def test_two_symbols(self):
        counts = np.zeros(256, dtype=np.int64)
        counts[3], counts[7] = 10, 1
        lengths = huffman.code_lengths(counts)
        assert lengths[3] == 1 and lengths[7] == 1

    def test_kraft_equality_random(self, rng):
        for _ in range(50):
            counts = rng.integers(0, 2000, 256)
            counts[rng.integers(0, 256)] += 1  # non-empty
            lengths = huffman.code_lengths(counts)
            nz = lengths[lengths > 0]
            if nz.size > 1:
                assert int(np.sum(1 << (15 - nz))) == 1 << 15
            assert nz.max() <= 15

    def test_fibonacci_counts_trigger_length_limiting(self):
        # fibonacci weights force depth ~ number of symbols in a plain tree
        fib = [1, 1]
        while len(fib) < 24:
            fib.append(fib[-1] + fib[-2])
        counts = np.zeros(256, dtype=np.int64)
        counts[: len(fib)] = fib
        natural = huffman._natural_lengths(counts)
        assert natural.max() > 15
        limited = huffman.code_lengths(counts)
        assert limited.max() <= 15
        nz = limited[limited > 0]
        assert int(np.sum(1 << (15 - nz))) == 1 << 15

    @pytest.mark.parametrize("weights,max_len", [
        ((1, 1, 1, 1), 2),
        ((8, 4, 2, 1), 3),
        ((20, 10, 9, 1, 1), 3),
        ((5, 4, 3, 2, 1), 4),
    ])
    def test_package_merge_is_optimal(self, weights, max_len):
        counts = np.zeros(256, dtype=np.int64)
        counts[: len(weights)] = weights
        lengths = huffman._package_merge(counts, max_len)
        cost = int(np.sum(counts * lengths))
        assert cost == brute_force_min_cost(weights, max_len)
        assert lengths[lengths > 0].max() <= max_len


class TestCanonicalCodes:
    def test_lengths_determine_codes(self):
        lengths = np.zeros(256, dtype=np.int64)
        lengths[10], lengths[20], lengths[30] = 1, 2, 2
        codes = huffman.canonical_codes(lengths)
        assert codes[10] == 0b0
        assert codes[20] == 0b10
        assert codes[30] == 0b11

    def test_codes_are_prefix_free(self, rng):
        counts = rng.integers(0, 500, 256)
        counts[0] += 1
        lengths = huffman.code_lengths(counts)
        codes = huffman.canonical_codes(lengths)
        seen = []
        for s in np.flatnonzero(lengths):
            bits = format(codes[s], f"0{lengths[s]}b")
            for other in seen:
                assert not bits.startswith(other) and not other.startswith(bits)
            seen.append(bits)


class TestBlockCodec:
    def test_degenerate_single_symbol_size(self):
        # 1000 copies of 0x41: 1-bit code -> 128 + 4 + ceil(1000/8) bytes
        data = np.full(1000, 0x41, dtype=np.uint8)
        block = huffman.encode_block(data)
        assert len(block) == 128 + 4 + 125
        assert np.array_equal(huffman.decode_block(block, 1000), data)

    def test_one_byte_roundtrip(self):
        data = np.array([9], dtype=np.uint8)
        assert np.array_equal(
            huffman.decode_block(huffman.encode_block(data), 1), data
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_random_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.integers(0, 256, rng.integers(1, 50_000), dtype=np.uint8)
        assert np.array_equal(
            huffman.decode_block(huffman.encode_block(data), data.size), data
        )

    def test_uniform_incompressible(self, rng):
        data = rng.integers(0, 256, 1 << 16, dtype=np.uint8)
        block = huffman.encode_block(data)
        assert len(block) >= data.size  # 8 bits/symbol + header
        assert np.array_equal(huffman.decode_block(block, data.size), data)

    def test_deep_tree_data_roundtrip(self):
        # data whose natural tree exceeds 15 levels (package-merge path)
        fib = [1, 1]
        while len(fib) < 24:
            fib.append(fib[-1] + fib[-2])
        data = np.concatenate(
            [np.full(c, s, dtype=np.uint8) for s, c in enumerate(fib)]
        )
        rng = np.random.default_rng(0)
        rng.shuffle(data)
        block = huffman.encode_block(data)
        assert np.array_equal(huffman.decode_block(block, data.size), data)

    def test_within_one_bit_of_entropy(self, rng):
        from qmc.entropy import entropy_bits, histogram

        data = np.clip(
            np.round(rng.normal(0, 12, 1 << 16)), -127, 127
        ).astype(np.int8).view(np.uint8)
        block = huffman.encode_block(data)
        (nbits,) = struct.unpack_from("<I", block, 128)
        h = entropy_bits(histogram(data))
        assert h <= nbits / data.size <= h + 1


class TestCorruption:
    def _block(self, rng, n=4096):
        data = np.clip(np.round(rng.normal(0, 9, n)), -127, 127).astype(np.int8)
        return huffman.encode_block(data.view(np.uint8)), n

    def test_truncated_block(self, rng):
        block, n = self._block(rng)
        with pytest.raises((FormatError, IntegrityError)):
            huffman.decode_block(block[:-3], n)

    def test_short_header(self):
        with pytest.raises(FormatError):
            huffman.decode_block(b"\x00" * 50, 10)

    def test_kraft_violation_detected(self, rng):
        block, n = self._block(rng)
        mutated = bytearray(block)
        mutated[0] ^= 0x01  # change one code length nibble
        with pytest.raises((FormatError, IntegrityError)):
            huffman.decode_block(bytes(mutated), n)

    def test_phantom_symbol_detected(self):
        # corrupt a single-symbol table to declare a second 1-bit symbol that
        # canonically sorts after the real one: decodes cleanly, so only the
        # declared-vs-present symbol check can catch it
        data = np.full(1000, 0x10, dtype=np.uint8)
        block = bytearray(huffman.encode_block(data))
        hi_sym = 0x80
        assert hi_sym > 0x10 and hi_sym % 2 == 0
        block[hi_sym // 2] |= 0x01  # set low nibble (even symbol) to length 1
        with pytest.raises(IntegrityError, match="symbol table"):
            huffman.decode_block(bytes(block), 1000)

    def test_every_bitflip_raises(self, rng):
        block, n = self._block(rng, n=512)
        for _ in range(300):
            pos = int(rng.integers(0, len(block)))
            bit = int(rng.integers(0, 8))
            mutated = bytearray(block)
            mutated[pos] ^= 1 << bit
            try:
                out = huffman.decode_block(bytes(mutated), n)
            except (FormatError, IntegrityError):
                continue
            # blob-level CRC is the final backstop; at block level a flip
            # must at least never return the original payload silently
            assert not np.array_equal(out, huffman.decode_block(block, n))
