"""On-disk archive of compressed quantized tensors ("QMC1").

Layout (docs/formats.md): magic "QMC1" | manifest_len u64 LE | manifest
(canonical JSON, sorted keys) | manifest_crc32 u32 LE | zero padding to a
64-byte boundary | blob region. Each blob starts 64-byte aligned at the
offset recorded in the manifest (relative to the region start); padding
gaps are zero. Manifest entries carry two checksums per tensor: crc32 of
the original int8 payload (mirrored inside the blob) and blob_crc32 of
the stored compressed bytes, so verify() can prove integrity of every
byte in the file without decompressing anything.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import codecs
from .codecs.blob import Blob
from .errors import FormatError, IntegrityError, ValidationError
from .quant import QuantizedTensor, scheme_from_dict, scheme_to_dict

MAGIC = b"QMC1"
FORMAT_VERSION = 1
ALIGN = 64


def _align(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def pack(
    tensors,
    path,
    codec: str = "tans",
    *,
    metadata: dict[str, str] | None = None,
    table_log: int = codecs.DEFAULT_TABLE_LOG,
    level: int = 3,
    threads: int | None = None,
) -> None:
    """Write quantized tensors into a container file (atomic, deterministic)."""
    tensors = list(tensors)
    names = [t.name for t in tensors]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ValidationError(f"duplicate tensor name '{dup}'")
    if codec not in codecs.CODEC_IDS:
        raise ValidationError(f"unknown codec '{codec}'")

    def _one(t: QuantizedTensor) -> bytes:
        blob = codecs.compress(t.data, codec, table_log=table_log, level=level)
        return blob.to_bytes()

    if threads and threads > 1 and len(tensors) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            blobs = list(ex.map(_one, tensors))
    else:
        blobs = [_one(t) for t in tensors]

    entries = []
    offset = 0
    for t, raw in zip(tensors, blobs):
        payload = t.payload_bytes()
        entries.append(
            {
                "name": t.name,
                "shape": list(t.shape),
                "dtype": "int8",
                "source_dtype": t.source_dtype,
                "scheme": scheme_to_dict(t.scheme),
                "codec_id": codec,
                "blob_offset": offset,
                "blob_len": len(raw),
                "original_len": len(payload),
                "crc32": zlib.crc32(payload),
                "blob_crc32": zlib.crc32(raw),
            }
        )
        offset = _align(offset + len(raw))

    manifest = {
        "format_version": FORMAT_VERSION,
        "codec": codec,
        "metadata": {str(k): str(v) for k, v in (metadata or {}).items()},
        "tensors": entries,
    }
    mbytes = _canonical_json(manifest)

    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qmc-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<Q", len(mbytes)))
            f.write(mbytes)
            f.write(struct.pack("<I", zlib.crc32(mbytes)))
            pos = f.tell()
            f.write(b"\x00" * (_align(pos) - pos))
            at = 0
            for e, raw in zip(entries, blobs):
                f.write(b"\x00" * (e["blob_offset"] - at))
                f.write(raw)
                at = e["blob_offset"] + len(raw)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IntegrityError(f"failed writing '{path}': {e}") from e


def _validate_entry(e, i: int) -> None:
    req = {
        "name": str,
        "shape": list,
        "scheme": dict,
        "codec_id": str,
        "blob_offset": int,
        "blob_len": int,
        "original_len": int,
        "crc32": int,
        "blob_crc32": int,
    }
    if not isinstance(e, dict):
        raise FormatError(f"manifest entry {i} is not an object")
    for k, ty in req.items():
        if k not in e or not isinstance(e[k], ty):
            raise FormatError(f"manifest entry {i}: missing or invalid '{k}'")
    if e["blob_offset"] % ALIGN:
        raise FormatError(f"tensor '{e['name']}': blob offset not {ALIGN}-byte aligned")
    if e["blob_len"] < 1 or e["original_len"] < 1:
        raise FormatError(f"tensor '{e['name']}': empty blob or payload")


class ContainerReader:
    """Random-access reader; tracks how many bytes were read from storage."""

    def __init__(self, path):
        self._f = open(os.fspath(path), "rb")
        self.bytes_read = 0
        self.path = os.fspath(path)
        self._size = os.fstat(self._f.fileno()).st_size
        head = self._read(12)
        if head[:4] != MAGIC:
            raise FormatError(f"'{self.path}': bad container magic")
        (mlen,) = struct.unpack_from("<Q", head, 4)
        if 12 + mlen + 4 > self._size:
            raise FormatError(f"'{self.path}': manifest length exceeds file size")
        mbytes = self._read(mlen)
        (crc,) = struct.unpack("<I", self._read(4))
        if zlib.crc32(mbytes) != crc:
            raise IntegrityError(f"'{self.path}': manifest checksum mismatch")
        try:
            manifest = json.loads(mbytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"'{self.path}': malformed manifest JSON: {e}") from e
        if not isinstance(manifest, dict):
            raise FormatError(f"'{self.path}': manifest is not an object")
        if manifest.get("format_version") != FORMAT_VERSION:
            raise FormatError(
                f"'{self.path}': unsupported format_version "
                f"{manifest.get('format_version')!r} (expected {FORMAT_VERSION})"
            )
        tensors = manifest.get("tensors")
        if not isinstance(tensors, list):
            raise FormatError(f"'{self.path}': manifest has no tensor list")
        seen = set()
        prev_end = 0
        for i, e in enumerate(tensors):
            _validate_entry(e, i)
            if e["name"] in seen:
                raise FormatError(f"'{self.path}': duplicate tensor '{e['name']}'")
            seen.add(e["name"])
            if e["blob_offset"] < prev_end:
                raise FormatError(f"'{self.path}': overlapping blobs at '{e['name']}'")
            prev_end = e["blob_offset"] + e["blob_len"]
        self.manifest = manifest
        self.region_start = _align(12 + mlen + 4)
        if self.region_start + prev_end > self._size:
            raise FormatError(f"'{self.path}': blob region exceeds file size")
        self._entries = {e["name"]: e for e in tensors}

    def _read(self, n: int) -> bytes:
        b = self._f.read(n)
        self.bytes_read += len(b)
        if len(b) != n:
            raise IntegrityError(f"'{self.path}': unexpected end of file")
        return b

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def names(self) -> list[str]:
        return [e["name"] for e in self.manifest["tensors"]]

    @property
    def codec(self) -> str:
        return self.manifest.get("codec", "")

    @property
    def metadata(self) -> dict:
        return self.manifest.get("metadata", {})

    def read_blob_bytes(self, name: str) -> bytes:
        """The stored blob byte range for one tensor (no decode)."""
        e = self._entry(name)
        self._f.seek(self.region_start + e["blob_offset"])
        return self._read(e["blob_len"])

    def _entry(self, name: str) -> dict:
        if name not in self._entries:
            raise ValidationError(f"'{self.path}': no tensor named '{name}'")
        return self._entries[name]

    def tensor(self, name: str) -> QuantizedTensor:
        """Read, CRC-check, and decode one tensor (only its byte range)."""
        e = self._entry(name)
        return _decode_entry(e, self.read_blob_bytes(name))


def _decode_entry(e: dict, raw: bytes) -> QuantizedTensor:
    name = e["name"]
    if zlib.crc32(raw) != e["blob_crc32"]:
        raise IntegrityError(f"tensor '{name}': stored blob bytes are corrupt")
    blob = Blob.from_bytes(raw)
    if blob.crc32 != e["crc32"] or blob.original_len != e["original_len"]:
        raise IntegrityError(f"tensor '{name}': blob header disagrees with manifest")
    data = codecs.decompress(blob)
    shape = tuple(int(d) for d in e["shape"])
    if len(data) != int(np.prod(shape, dtype=np.int64)):
        raise IntegrityError(f"tensor '{name}': payload does not match shape")
    scheme = scheme_from_dict(e["scheme"])
    arr = np.frombuffer(data, dtype=np.int8).reshape(shape)
    return QuantizedTensor(name, shape, arr, scheme, e.get("source_dtype", "float32"))


def unpack(path, names=None, *, threads: int | None = None) -> list[QuantizedTensor]:
    """Decompress tensors (all, or the given names) with full verification.

    Blobs are independent: reads stay sequential, decodes fan out over
    threads when threads > 1.
    """
    with ContainerReader(path) as r:
        wanted = r.names() if names is None else list(names)
        work = [(r._entry(n), r.read_blob_bytes(n)) for n in wanted]
    if threads and threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda w: _decode_entry(*w), work))
    return [_decode_entry(e, raw) for e, raw in work]


@dataclass(frozen=True)
class VerifyEntry:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class VerifyReport:
    entries: list = field(default_factory=list)
    file_problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.file_problems and all(e.ok for e in self.entries)

    def failures(self) -> list[str]:
        out = [f"<file>: {p}" for p in self.file_problems]
        out += [f"{e.name}: {e.detail}" for e in self.entries if not e.ok]
        return out


def verify(path) -> VerifyReport:
    """Check every byte of a container without materializing tensors.

    Covers: magic/structure, manifest checksum, per-blob stored-byte CRCs,
    blob header consistency, and that all alignment padding is zero.
    Failures become report entries; nothing is raised for corrupt files.
    """
    report = VerifyReport()
    try:
        r = ContainerReader(path)
    except (FormatError, IntegrityError, OSError) as e:
        report.file_problems.append(str(e))
        return report
    with r:
        covered_end = 0
        with open(os.fspath(path), "rb") as raw_f:
            for e in r.manifest["tensors"]:
                name = e["name"]
                try:
                    raw = r.read_blob_bytes(name)
                    if zlib.crc32(raw) != e["blob_crc32"]:
                        raise IntegrityError("stored blob bytes are corrupt")
                    blob = Blob.from_bytes(raw)
                    if blob.crc32 != e["crc32"]:
                        raise IntegrityError("blob header CRC disagrees with manifest")
                    if blob.original_len != e["original_len"]:
                        raise IntegrityError("blob length disagrees with manifest")
                    report.entries.append(VerifyEntry(name, True))
                except (FormatError, IntegrityError) as err:
                    report.entries.append(VerifyEntry(name, False, str(err)))
                covered_end = max(covered_end, e["blob_offset"] + e["blob_len"])
            # all padding gaps (pre-region and inter-blob) must be zero
            raw_f.seek(0)
            whole = raw_f.read()
        mlen = struct.unpack_from("<Q", whole, 4)[0]
        gaps = [(12 + mlen + 4, r.region_start)]
        prev = 0
        for e in r.manifest["tensors"]:
            gaps.append((r.region_start + prev, r.region_start + e["blob_offset"]))
            prev = e["blob_offset"] + e["blob_len"]
        file_end = r.region_start + covered_end if r.manifest["tensors"] else r.region_start
        if len(whole) != file_end:
            report.file_problems.append(
                f"{len(whole) - file_end} unexpected trailing bytes"
            )
        for a, b in gaps:
            if any(whole[a:b]):
                report.file_problems.append(
                    f"nonzero padding bytes in gap [{a}, {b})"
                )
    return report
