"""Tensor data model, safetensors-compatible file I/O, and synthetic data.

File format (documented byte-exactly in docs/formats.md): an 8-byte
little-endian header length, a UTF-8 JSON header mapping tensor name to
{dtype, shape, data_offsets}, then the raw little-endian payload. Only
float32 ("F32") and int8 ("I8") tensors are admitted.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, IntegrityError, ValidationError

_DTYPE_TAGS = {"float32": "F32", "int8": "I8"}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}
_NP_DTYPES = {"float32": np.float32, "int8": np.int8}

# Domain separators for the seeded PRNG streams (PCG64 via default_rng);
# weights and activations must differ for the same seed.
_DOMAIN_WEIGHTS = 0
_DOMAIN_ACTIVATIONS = 1


@dataclass(frozen=True)
class Tensor:
    """Named, shaped, row-major numeric array (float32 or int8).

    Immutable after construction; the backing array is made read-only so
    instances are safe to share across threads.
    """

    name: str
    data: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValidationError("tensor name must be non-empty")
        if np.asarray(self.data).ndim < 1:
            raise ValidationError(
                f"tensor '{self.name}': shape must have rank >= 1"
            )
        arr = np.ascontiguousarray(self.data)
        if arr.dtype == np.float32:
            pass
        elif arr.dtype == np.int8:
            pass
        else:
            raise ValidationError(
                f"tensor '{self.name}': unsupported dtype {arr.dtype}; "
                "only float32 and int8 are admitted"
            )
        if arr.ndim < 1 or any(d < 1 for d in arr.shape):
            raise ValidationError(
                f"tensor '{self.name}': shape {arr.shape} must have rank >= 1 "
                "with every dimension >= 1"
            )
        if arr.dtype == np.float32 and not np.isfinite(arr).all():
            idx = int(np.flatnonzero(~np.isfinite(arr.reshape(-1)))[0])
            raise ValidationError(
                f"tensor '{self.name}': non-finite value at flat index {idx}"
            )
        arr = arr.copy() if arr.base is not None or arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> str:
        return str(self.data.dtype)

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def tobytes(self) -> bytes:
        """Row-major little-endian payload bytes."""
        return self.data.astype(self.data.dtype.newbyteorder("<")).tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


class TensorMap:
    """Ordered name -> Tensor mapping with model-level metadata.

    Iteration order is insertion order; names are unique.
    """

    def __init__(self, tensors=(), metadata: dict[str, str] | None = None):
        self._tensors: dict[str, Tensor] = {}
        # string-only metadata keeps save/load bit-exact roundtrips honest
        self.metadata: dict[str, str] = {
            str(k): str(v) for k, v in (metadata or {}).items()
        }
        for t in tensors:
            self.add(t)

    def add(self, tensor: Tensor) -> None:
        if tensor.name in self._tensors:
            raise ValidationError(f"duplicate tensor name '{tensor.name}'")
        self._tensors[tensor.name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorMap):
            return NotImplemented
        return (
            self.metadata == other.metadata
            and self.names() == other.names()
            and all(a == b for a, b in zip(self, other))
        )


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic Gaussian matrix with scaled outlier channels.

    The same spec (including seed) always reproduces the same data:
    the body is drawn from PCG64 seeded with SeedSequence([seed, domain]),
    then floor(outlier_fraction * channels) channels are chosen without
    replacement and multiplied by outlier_scale.
    """

    rows: int
    cols: int
    base_std: float = 1.0
    outlier_fraction: float = 0.0
    outlier_scale: float = 1.0
    outlier_axis: str = "column"
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("rows and cols must be positive")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValidationError("outlier_fraction must be in [0, 1)")
        if self.outlier_scale < 1.0:
            raise ValidationError("outlier_scale must be >= 1")
        if self.outlier_axis not in ("row", "column"):
            raise ValidationError("outlier_axis must be 'row' or 'column'")
        if self.base_std <= 0:
            raise ValidationError("base_std must be positive")

    @property
    def n_channels(self) -> int:
        return self.cols if self.outlier_axis == "column" else self.rows

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_fraction * self.n_channels)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel maxima of absolute activation values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if v.size < 1:
            raise ValidationError("ChannelStats needs at least one channel")
        if (v < 0).any():
            raise ValidationError("ChannelStats entries must be >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_activation(cls, x: Tensor) -> "ChannelStats":
        """Column-wise absolute maxima of an activation matrix [tokens, channels]."""
        if x.data.ndim != 2:
            raise ValidationError("activation tensor must be rank-2")
        return cls(np.abs(x.data).max(axis=0))


def _synth_matrix(spec: SynthSpec, domain: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, domain]))
    body = rng.normal(0.0, spec.base_std, size=(spec.rows, spec.cols))
    body = body.astype(np.float32)
    k = spec.n_outliers
    if k > 0:
        chosen = rng.choice(spec.n_channels, size=k, replace=False)
        if spec.outlier_axis == "column":
            body[:, chosen] *= np.float32(spec.outlier_scale)
        else:
            body[chosen, :] *= np.float32(spec.outlier_scale)
    return body


def synth_weights(spec: SynthSpec, name: str | None = None) -> Tensor:
    """Deterministic synthetic weight matrix with outlier channels."""
    data = _synth_matrix(spec, _DOMAIN_WEIGHTS)
    return Tensor(name or f"synth.weight.seed{spec.seed}", data)


def synth_activation(spec: SynthSpec, name: str | None = None) -> Tensor:
    """Deterministic synthetic activation matrix [tokens, channels].

    Drawn from a separate PRNG domain than synth_weights, so weights and
    activations under the same seed are independent.
    """
    data = _synth_matrix(spec, _DOMAIN_ACTIVATIONS)
    return Tensor(name or f"synth.act.seed{spec.seed}", data)


def synth_activation_stats(spec: SynthSpec) -> ChannelStats:
    """Per-channel absolute maxima of the synth_activation(spec) draw."""
    return ChannelStats.from_activation(synth_activation(spec))


# --- safetensors-compatible file I/O -------------------------------------

_MAX_HEADER = 100 * 1024 * 1024  # sanity cap on the JSON header


def save_model(m: TensorMap, path) -> None:
    """Write a TensorMap; load_model reads it back bit-exactly.

    The write is atomic: a temp file in the destination directory is
    renamed into place, so failures never leave partial output.
    """
    header: dict = {}
    if m.metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in m.metadata.items()}
    offset = 0
    payloads = []
    for t in m:
        raw = t.tobytes()
        header[t.name] = {
            "dtype": _DTYPE_TAGS[t.dtype],
            "shape": list(t.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        payloads.append(raw)
        offset += len(raw)
    hdr = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qmc-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(struct.pack("<Q", len(hdr)))
            f.write(hdr)
            for raw in payloads:
                f.write(raw)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IntegrityError(f"failed writing '{path}': {e}") from e


def load_model(path) -> TensorMap:
    """Read a tensor file, validating structure, dtypes, and finiteness.

    Raises FormatError for malformed headers, IntegrityError for truncated
    payloads, ValidationError for unsupported dtypes or non-finite floats
    (the offending tensor is named in every message).
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise FormatError(f"cannot read '{path}': {e}") from e

    if len(blob) < 8:
        raise FormatError(f"'{path}': file shorter than the 8-byte header length")
    (hdr_len,) = struct.unpack_from("<Q", blob, 0)
    if hdr_len > _MAX_HEADER or 8 + hdr_len > len(blob):
        raise FormatError(f"'{path}': header length {hdr_len} exceeds file size")
    try:
        header = json.loads(blob[8 : 8 + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"'{path}': malformed JSON header: {e}") from e
    if not isinstance(header, dict):
        raise FormatError(f"'{path}': header is not a JSON object")

    payload = blob[8 + hdr_len :]
    metadata = header.pop("__metadata__", {})
    if not isinstance(metadata, dict):
        raise FormatError(f"'{path}': __metadata__ is not an object")

    m = TensorMap(metadata={str(k): str(v) for k, v in metadata.items()})
    expected_offset = 0
    for name, entry in header.items():
        tag = entry.get("dtype") if isinstance(entry, dict) else None
        shape = entry.get("shape") if isinstance(entry, dict) else None
        offs = entry.get("data_offsets") if isinstance(entry, dict) else None
        if tag is None or shape is None or offs is None:
            raise FormatError(f"'{path}': tensor '{name}': incomplete header entry")
        if tag not in _TAG_DTYPES:
            raise ValidationError(
                f"'{path}': tensor '{name}': unsupported dtype '{tag}' "
                "(only F32 and I8 are supported)"
            )
        if (
            not isinstance(shape, list)
            or len(shape) < 1
            or any(not isinstance(d, int) or d < 1 for d in shape)
        ):
            raise FormatError(f"'{path}': tensor '{name}': invalid shape {shape}")
        if (
            not isinstance(offs, list)
            or len(offs) != 2
            or any(not isinstance(o, int) or o < 0 for o in offs)
        ):
            raise FormatError(f"'{path}': tensor '{name}': invalid data_offsets")
        start, end = offs
        if start != expected_offset:
            raise FormatError(
                f"'{path}': tensor '{name}': data_offsets must tile the payload "
                f"contiguously (expected start {expected_offset}, got {start})"
            )
        dtype = _TAG_DTYPES[tag]
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * np.dtype(_NP_DTYPES[dtype]).itemsize
        if end - start != nbytes:
            raise FormatError(
                f"'{path}': tensor '{name}': declared byte span {end - start} "
                f"does not match shape ({nbytes} bytes expected)"
            )
        if end > len(payload):
            raise IntegrityError(
                f"'{path}': tensor '{name}': payload truncated "
                f"(needs bytes up to {end}, file has {len(payload)})"
            )
        arr = np.frombuffer(payload[start:end], dtype=_NP_DTYPES[dtype])
        arr = arr.reshape(shape)
        try:
            m.add(Tensor(name, arr))
        except ValidationError as e:
            raise ValidationError(f"'{path}': {e}") from e
        expected_offset = end
    if expected_offset != len(payload):
        raise IntegrityError(
            f"'{path}': {len(payload) - expected_offset} trailing payload bytes "
            "not covered by any tensor"
        )
    return m
