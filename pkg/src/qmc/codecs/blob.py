"""Blob container for one compressed byte stream.

Wire layout (little-endian, documented in docs/formats.md):

    magic u8 (0xEB) | codec_id u8 | original_len u64 | crc32 u32 |
    block_count u32 | { compressed_len u32 | block bytes }*

Input is split into 1 MiB blocks, each carrying its own table/header so
blocks decode independently. crc32 (IEEE polynomial, zlib.crc32) covers
the original bytes and is verified on every decompression.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, IntegrityError, ValidationError
from . import huffman, tans, zstd

MAGIC = 0xEB
BLOCK_SIZE = 1 << 20

CODEC_IDS = {"huffman": 1, "tans": 2, "zstd": 3}
_ID_CODECS = {v: k for k, v in CODEC_IDS.items()}
_HEADER = struct.Struct("<BBQII")


def _as_u8(data) -> np.ndarray:
    if isinstance(data, (bytes, bytearray, memoryview)):
        return np.frombuffer(data, dtype=np.uint8)
    arr = np.asarray(data)
    if arr.dtype == np.int8:
        return arr.reshape(-1).view(np.uint8)
    if arr.dtype == np.uint8:
        return arr.reshape(-1)
    raise ValidationError(f"expected bytes or int8/uint8 array, got {arr.dtype}")


@dataclass(frozen=True)
class Blob:
    """Codec id + framed compressed payload + original length and CRC."""

    codec_id: str
    original_len: int
    crc32: int
    payload: bytes

    @property
    def block_count(self) -> int:
        return -(-self.original_len // BLOCK_SIZE)

    def total_len(self) -> int:
        """Full serialized size, header included."""
        return _HEADER.size + len(self.payload)

    def to_bytes(self) -> bytes:
        return (
            _HEADER.pack(
                MAGIC,
                CODEC_IDS[self.codec_id],
                self.original_len,
                self.crc32,
                self.block_count,
            )
            + self.payload
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Blob":
        if len(raw) < _HEADER.size:
            raise FormatError("blob shorter than its fixed header")
        magic, cid, original_len, crc, block_count = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise FormatError(f"bad blob magic 0x{magic:02X}")
        if cid not in _ID_CODECS:
            raise FormatError(f"unknown codec id {cid}")
        if original_len < 1:
            raise FormatError("blob declares empty original data")
        expected_blocks = -(-original_len // BLOCK_SIZE)
        if block_count != expected_blocks:
            raise FormatError(
                f"block count {block_count} inconsistent with length {original_len}"
            )
        blob = cls(_ID_CODECS[cid], original_len, crc, raw[_HEADER.size :])
        blob.blocks()  # validates framing covers the payload exactly
        return blob

    def blocks(self) -> list[bytes]:
        """Split the framed payload; validates lengths tile it exactly."""
        out = []
        pos = 0
        payload = self.payload
        for _ in range(self.block_count):
            if pos + 4 > len(payload):
                raise FormatError("blob payload truncated at block header")
            (clen,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            if clen < 1 or pos + clen > len(payload):
                raise FormatError("block length exceeds blob payload")
            out.append(payload[pos : pos + clen])
            pos += clen
        if pos != len(payload):
            raise FormatError("trailing bytes after the last block")
        return out


def _block_lengths(original_len: int) -> list[int]:
    full, rem = divmod(original_len, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rem] if rem else [])


def compress(data, codec: str, *, table_log: int = tans.DEFAULT_TABLE_LOG,
             level: int = 3) -> Blob:
    """Compress bytes (or an int8/uint8 array) with the named codec."""
    arr = _as_u8(data)
    if arr.size == 0:
        raise ValidationError("cannot compress empty input")
    if codec not in CODEC_IDS:
        raise ValidationError(f"unknown codec '{codec}'")
    crc = zlib.crc32(arr.tobytes())
    parts = []
    for start in range(0, arr.size, BLOCK_SIZE):
        chunk = arr[start : start + BLOCK_SIZE]
        if codec == "huffman":
            block = huffman.encode_block(np.ascontiguousarray(chunk))
        elif codec == "tans":
            block = tans.encode_block(np.ascontiguousarray(chunk), table_log)
        else:
            block = zstd.compress_block(chunk.tobytes(), level)
        parts.append(struct.pack("<I", len(block)))
        parts.append(block)
    return Blob(codec, int(arr.size), crc, b"".join(parts))


def decompress(blob: Blob) -> bytes:
    """Exact original bytes; verifies framing, per-block checks, and CRC."""
    lengths = _block_lengths(blob.original_len)
    blocks = blob.blocks()
    chunks = []
    for block, n in zip(blocks, lengths):
        if blob.codec_id == "huffman":
            chunks.append(huffman.decode_block(block, n))
        elif blob.codec_id == "tans":
            chunks.append(tans.decode_block(block, n))
        else:
            chunks.append(np.frombuffer(zstd.decompress_block(block, n), np.uint8))
    data = np.concatenate(chunks).tobytes() if chunks else b""
    if len(data) != blob.original_len:
        raise IntegrityError(
            f"decoded {len(data)} bytes, blob declares {blob.original_len}"
        )
    if zlib.crc32(data) != blob.crc32:
        raise IntegrityError("CRC mismatch: decompressed bytes are corrupt")
    return data


def compression_ratio(original_len: int, blob: Blob) -> float:
    """C = original size over total blob size (header + payload)."""
    return original_len / blob.total_len()


def total_ratio_vs_f32(c: float) -> float:
    """Overall ratio against float32 storage: 4x from int8, times C."""
    return 4.0 * c
