"""Adapter to an external Zstandard (RFC 8878) implementation.

Binds the shared library `libzstd` via ctypes; nothing in the native
codecs depends on it. When no library can be loaded, every entry point
raises CapabilityError. The produced payload is a standard Zstandard
frame per block, so any conforming decoder can read it. Set the
QMC_ZSTD_LIBRARY environment variable to pick a specific library file.
"""

from __future__ import annotations

import ctypes
import os

from ..errors import CapabilityError, IntegrityError, ValidationError

_CANDIDATES = ("libzstd.so.1", "libzstd.so", "libzstd.dylib", "libzstd.1.dylib")

_lib = None
_lib_error: str | None = None


def _bind(lib) -> None:
    lib.ZSTD_versionNumber.restype = ctypes.c_uint
    lib.ZSTD_versionNumber.argtypes = []
    lib.ZSTD_compressBound.restype = ctypes.c_size_t
    lib.ZSTD_compressBound.argtypes = [ctypes.c_size_t]
    lib.ZSTD_isError.restype = ctypes.c_uint
    lib.ZSTD_isError.argtypes = [ctypes.c_size_t]
    lib.ZSTD_getErrorName.restype = ctypes.c_char_p
    lib.ZSTD_getErrorName.argtypes = [ctypes.c_size_t]
    lib.ZSTD_compress.restype = ctypes.c_size_t
    lib.ZSTD_compress.argtypes = [
        ctypes.c_void_p,
        ctypes.c_size_t,
        ctypes.c_char_p,
        ctypes.c_size_t,
        ctypes.c_int,
    ]
    lib.ZSTD_decompress.restype = ctypes.c_size_t
    lib.ZSTD_decompress.argtypes = [
        ctypes.c_void_p,
        ctypes.c_size_t,
        ctypes.c_char_p,
        ctypes.c_size_t,
    ]


def load_library(path: str | None = None):
    """Load (or return the cached) libzstd handle; CapabilityError if absent."""
    global _lib, _lib_error
    if _lib is not None and path is None:
        return _lib
    candidates = (
        [path]
        if path
        else ([os.environ["QMC_ZSTD_LIBRARY"]] if "QMC_ZSTD_LIBRARY" in os.environ else [])
        + list(_CANDIDATES)
    )
    last = None
    for cand in candidates:
        try:
            lib = ctypes.CDLL(cand)
            _bind(lib)
        except OSError as e:
            last = str(e)
            continue
        if path is None:
            _lib = lib
        return lib
    _lib_error = last or "no candidate library found"
    raise CapabilityError(
        f"Zstandard adapter unavailable: cannot load libzstd ({_lib_error})"
    )


def available() -> bool:
    try:
        load_library()
        return True
    except CapabilityError:
        return False


def version() -> int:
    return int(load_library().ZSTD_versionNumber())


def compress_block(data: bytes, level: int = 3) -> bytes:
    """One standard Zstandard frame containing data."""
    if not data:
        raise ValidationError("cannot compress empty input")
    lib = load_library()
    bound = lib.ZSTD_compressBound(len(data))
    dst = ctypes.create_string_buffer(bound)
    n = lib.ZSTD_compress(dst, bound, data, len(data), int(level))
    if lib.ZSTD_isError(n):
        raise IntegrityError(
            f"zstd compression failed: {lib.ZSTD_getErrorName(n).decode()}"
        )
    return dst.raw[:n]


def decompress_block(frame: bytes, expected_len: int) -> bytes:
    """Decode one frame, requiring exactly expected_len output bytes."""
    lib = load_library()
    dst = ctypes.create_string_buffer(expected_len) if expected_len else b""
    n = lib.ZSTD_decompress(dst, expected_len, frame, len(frame))
    if lib.ZSTD_isError(n):
        raise IntegrityError(
            f"zstd decompression failed: {lib.ZSTD_getErrorName(n).decode()}"
        )
    if n != expected_len:
        raise IntegrityError(
            f"zstd frame decoded to {n} bytes, expected {expected_len}"
        )
    return dst.raw[:n]
