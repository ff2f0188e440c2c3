"""INT8 quantization schemes: tensor-wise, channel-wise, and smoothed
(outlier-aware) tensor-wise, plus dequantization and error metrics.

Symmetric quantization (the default) maps to [-127, 127] with zero_point 0
and scale = max|x|/127; asymmetric maps [min(x, 0), max(x, 0)] affinely
onto [-128, 127] (the range is widened to include real zero so the zero
point always fits in int8; the half-scale reconstruction bound is
preserved). Rounding is round-half-to-even everywhere. An all-zero input
would give scale 0; the documented degenerate rule substitutes scale = 1.

Smoothing migrates activation magnitude into weights: activations are
divided column-wise by a positive per-channel vector s, weights multiplied
row-wise by the same s, preserving the matrix product exactly in real
arithmetic (and to float tolerance here).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ValidationError
from .tensorio import ChannelStats, Tensor

SMOOTH_EPS = 1e-8  # guards zero channel maxima in the smoothing formula


@dataclass(frozen=True)
class TensorWise:
    scale: float
    zero_point: int = 0
    mode: str = "symmetric"

    def __post_init__(self):
        if self.mode not in ("symmetric", "asymmetric"):
            raise ValidationError(f"unknown mode '{self.mode}'")
        if not self.scale > 0:
            raise ValidationError("scale must be strictly positive")
        if self.mode == "symmetric" and self.zero_point != 0:
            raise ValidationError("symmetric quantization requires zero_point 0")


@dataclass(frozen=True)
class ChannelWise:
    axis: str
    scales: np.ndarray
    zero_points: np.ndarray
    mode: str = "symmetric"

    def __post_init__(self):
        if self.axis not in ("row", "column"):
            raise ValidationError("axis must be 'row' or 'column'")
        if self.mode not in ("symmetric", "asymmetric"):
            raise ValidationError(f"unknown mode '{self.mode}'")
        s = np.asarray(self.scales, dtype=np.float32).reshape(-1)
        z = np.asarray(self.zero_points, dtype=np.int16).reshape(-1)
        if s.size != z.size:
            raise ValidationError("scales and zero_points must have equal length")
        if not (s > 0).all():
            raise ValidationError("all channel scales must be strictly positive")
        if self.mode == "symmetric" and (z != 0).any():
            raise ValidationError("symmetric quantization requires zero_points 0")
        s.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "zero_points", z)


@dataclass(frozen=True)
class SmoothingVector:
    """Strictly positive per-channel factors s with their migration exponent."""

    values: np.ndarray
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must be in [0, 1]")
        v = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if v.size < 1:
            raise ValidationError("smoothing vector must be non-empty")
        if not np.isfinite(v).all() or not (v > 0).all():
            raise ValidationError("smoothing factors must be positive and finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Smoothed:
    """Tensor-wise quantization of a smoothed matrix.

    side says which half of the equivalence transform this tensor is:
    'activation' (columns were divided by s) or 'weight' (rows were
    multiplied by s); dequantize uses it to return to the original domain.
    """

    s: SmoothingVector
    side: str
    inner: TensorWise

    def __post_init__(self):
        if self.side not in ("activation", "weight"):
            raise ValidationError("side must be 'activation' or 'weight'")
        if not isinstance(self.inner, TensorWise):
            raise ValidationError("smoothed quantization wraps a tensor-wise scheme")

    @property
    def alpha(self) -> float:
        return self.s.alpha

    @property
    def mode(self) -> str:
        return self.inner.mode


QuantScheme = Union[TensorWise, ChannelWise, Smoothed]


@dataclass(frozen=True)
class QuantizedTensor:
    name: str
    shape: tuple[int, ...]
    data: np.ndarray
    scheme: QuantScheme
    source_dtype: str = "float32"

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.dtype != np.int8:
            raise ValidationError("quantized payload must be int8")
        shape = tuple(int(d) for d in self.shape)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ValidationError("payload length does not match shape")
        mode = getattr(self.scheme, "mode", "symmetric")
        lo = -127 if mode == "symmetric" else -128
        if arr.size and int(arr.min()) < lo:
            raise ValidationError(f"int8 values below {lo} invalid for {mode} mode")
        arr = arr.reshape(shape)
        if arr.base is not None or arr.flags.writeable:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "shape", shape)

    def payload_bytes(self) -> bytes:
        return self.data.tobytes()


@dataclass(frozen=True)
class ErrorReport:
    mse: float
    max_abs_err: float
    relative_frobenius_err: float


def _require_float32(t: Tensor, op: str) -> np.ndarray:
    if t.dtype != "float32":
        raise ValidationError(f"{op} expects a float32 tensor, got {t.dtype}")
    return t.data


def _tensor_wise_params(x: np.ndarray, mode: str) -> tuple[float, int]:
    if mode == "symmetric":
        amax = float(np.abs(x).max())
        return (amax / 127.0, 0) if amax > 0 else (1.0, 0)
    # the mapped range always includes 0 so the zero point fits in int8
    mn = min(float(x.min()), 0.0)
    mx = max(float(x.max()), 0.0)
    if mx == mn:
        return 1.0, 0
    scale = (mx - mn) / 255.0
    zp = int(np.clip(np.round(-128.0 - mn / scale), -128, 127))
    return scale, zp


def _quantize_array(x: np.ndarray, scale, zero_point, mode: str) -> np.ndarray:
    lo = -127 if mode == "symmetric" else -128
    q = np.round(x / np.asarray(scale, dtype=np.float32)) + np.asarray(
        zero_point, dtype=np.float32
    )
    return np.clip(q, lo, 127).astype(np.int8)


def quantize_tensor_wise(t: Tensor, mode: str = "symmetric") -> QuantizedTensor:
    """One scale (and zero point) for the whole tensor."""
    x = _require_float32(t, "quantize_tensor_wise")
    if mode not in ("symmetric", "asymmetric"):
        raise ValidationError(f"unknown mode '{mode}'")
    scale, zp = _tensor_wise_params(x, mode)
    q = _quantize_array(x, scale, zp, mode)
    return QuantizedTensor(t.name, t.shape, q, TensorWise(scale, zp, mode))


def quantize_channel_wise(
    t: Tensor, axis: str = "row", mode: str = "symmetric"
) -> QuantizedTensor:
    """Independent scale per row or per column of a rank-2 tensor."""
    x = _require_float32(t, "quantize_channel_wise")
    if x.ndim != 2:
        raise ValidationError("channel-wise quantization needs a rank-2 tensor")
    if axis not in ("row", "column"):
        raise ValidationError("axis must be 'row' or 'column'")
    if mode not in ("symmetric", "asymmetric"):
        raise ValidationError(f"unknown mode '{mode}'")
    reduce_axis = 1 if axis == "row" else 0
    n = x.shape[0] if axis == "row" else x.shape[1]
    scales = np.empty(n, dtype=np.float32)
    zps = np.zeros(n, dtype=np.int16)
    if mode == "symmetric":
        amax = np.abs(x).max(axis=reduce_axis)
        scales[:] = np.where(amax > 0, amax / 127.0, 1.0)
    else:
        mn = np.minimum(x.min(axis=reduce_axis).astype(np.float64), 0.0)
        mx = np.maximum(x.max(axis=reduce_axis).astype(np.float64), 0.0)
        flat = mx == mn
        scales[:] = np.where(flat, 1.0, (mx - mn) / 255.0)
        zps[:] = np.where(
            flat, 0, np.clip(np.round(-128.0 - mn / scales), -128, 127)
        ).astype(np.int16)
    shape = (n, 1) if axis == "row" else (1, n)
    q = _quantize_array(x, scales.reshape(shape), zps.reshape(shape), mode)
    return QuantizedTensor(t.name, t.shape, q, ChannelWise(axis, scales, zps, mode))


def compute_smoothing_factors(
    act: ChannelStats, w: Tensor, alpha: float = 0.5
) -> SmoothingVector:
    """Per-channel factors s_j = act_j^alpha / wmax_j^(1-alpha).

    wmax_j is the absolute maximum of weight row j (rows are the
    contraction dimension, matching apply_smoothing). Zero entries on
    either side are substituted with SMOOTH_EPS before the power, with a
    warning naming each affected channel.
    """
    wd = _require_float32(w, "compute_smoothing_factors")
    if wd.ndim != 2:
        raise ValidationError("weight tensor must be rank-2")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must be in [0, 1]")
    if len(act) != wd.shape[0]:
        raise ValidationError(
            f"activation stats length {len(act)} != weight input channels {wd.shape[0]}"
        )
    a = act.values.astype(np.float64)
    wmax = np.abs(wd).max(axis=1).astype(np.float64)
    for j in np.flatnonzero(a == 0):
        warnings.warn(f"activation channel {j} has zero max; using epsilon")
    for j in np.flatnonzero(wmax == 0):
        warnings.warn(f"weight channel {j} has zero max; using epsilon")
    a = np.maximum(a, SMOOTH_EPS)
    wmax = np.maximum(wmax, SMOOTH_EPS)
    s = np.power(a, alpha) / np.power(wmax, 1.0 - alpha)
    return SmoothingVector(s.astype(np.float32), alpha)


def apply_smoothing(
    x: Tensor, w: Tensor, s: SmoothingVector
) -> tuple[Tensor, Tensor]:
    """Equivalence transform: divide x's columns by s, multiply w's rows by s.

    The product x_hat @ w_hat equals x @ w up to float rounding.
    """
    xd = _require_float32(x, "apply_smoothing")
    wd = _require_float32(w, "apply_smoothing")
    if xd.ndim != 2 or wd.ndim != 2:
        raise ValidationError("smoothing operates on rank-2 tensors")
    k = len(s)
    if xd.shape[1] != k or wd.shape[0] != k:
        raise ValidationError(
            f"smoothing length {k} must match x columns ({xd.shape[1]}) "
            f"and w rows ({wd.shape[0]})"
        )
    v = s.values
    x_hat = (xd / v[np.newaxis, :]).astype(np.float32)
    w_hat = (wd * v[:, np.newaxis]).astype(np.float32)
    return Tensor(x.name, x_hat), Tensor(w.name, w_hat)


def quantize_smoothed(
    t: Tensor, s: SmoothingVector, side: str, mode: str = "symmetric"
) -> QuantizedTensor:
    """Smooth one side of the transform, then quantize it tensor-wise."""
    x = _require_float32(t, "quantize_smoothed")
    if x.ndim != 2:
        raise ValidationError("smoothed quantization needs a rank-2 tensor")
    v = s.values
    if side == "activation":
        if x.shape[1] != len(s):
            raise ValidationError("smoothing length must match activation columns")
        smoothed = (x / v[np.newaxis, :]).astype(np.float32)
    elif side == "weight":
        if x.shape[0] != len(s):
            raise ValidationError("smoothing length must match weight rows")
        smoothed = (x * v[:, np.newaxis]).astype(np.float32)
    else:
        raise ValidationError("side must be 'activation' or 'weight'")
    inner = quantize_tensor_wise(Tensor(t.name, smoothed), mode)
    scheme = Smoothed(s, side, inner.scheme)
    return QuantizedTensor(t.name, t.shape, inner.data, scheme)


def dequantize(q: QuantizedTensor) -> Tensor:
    """Map int8 values back to float32 via the scheme's per-element scale.

    Smoothed tensors are returned in the original (unsmoothed) domain.
    """
    sch = q.scheme
    data = q.data.astype(np.float32)
    if isinstance(sch, TensorWise):
        out = (data - np.float32(sch.zero_point)) * np.float32(sch.scale)
    elif isinstance(sch, ChannelWise):
        n = sch.scales.size
        shape = (n, 1) if sch.axis == "row" else (1, n)
        if len(q.shape) != 2 or q.shape[0 if sch.axis == "row" else 1] != n:
            raise ValidationError("channel scales do not match tensor shape")
        zp = sch.zero_points.astype(np.float32).reshape(shape)
        out = (data - zp) * sch.scales.reshape(shape)
    elif isinstance(sch, Smoothed):
        inner = (data - np.float32(sch.inner.zero_point)) * np.float32(sch.inner.scale)
        v = sch.s.values
        if sch.side == "activation":
            out = inner * v[np.newaxis, :]
        else:
            out = inner / v[:, np.newaxis]
    else:
        raise ValidationError(f"unknown scheme {type(sch).__name__}")
    return Tensor(q.name, out.astype(np.float32))


def quant_error(orig: Tensor, q: QuantizedTensor) -> ErrorReport:
    """MSE, max absolute, and relative Frobenius error of dequantize(q)."""
    if orig.shape != q.shape:
        raise ValidationError(
            f"shape mismatch: original {orig.shape} vs quantized {q.shape}"
        )
    o = _require_float32(orig, "quant_error").astype(np.float64)
    d = dequantize(q).data.astype(np.float64)
    diff = d - o
    mse = float(np.mean(diff * diff))
    max_abs = float(np.abs(diff).max())
    denom = float(np.linalg.norm(o))
    num = float(np.linalg.norm(diff))
    if denom > 0:
        rel = num / denom
    else:
        rel = 0.0 if num == 0 else float("inf")
    return ErrorReport(mse, max_abs, rel)


# --- manifest (de)serialization -------------------------------------------


def scheme_to_dict(sch: QuantScheme) -> dict:
    if isinstance(sch, TensorWise):
        return {
            "kind": "tensor_wise",
            "mode": sch.mode,
            "scale": float(sch.scale),
            "zero_point": int(sch.zero_point),
        }
    if isinstance(sch, ChannelWise):
        return {
            "kind": "channel_wise",
            "axis": sch.axis,
            "mode": sch.mode,
            "scales": [float(v) for v in sch.scales],
            "zero_points": [int(v) for v in sch.zero_points],
        }
    if isinstance(sch, Smoothed):
        return {
            "kind": "smoothed",
            "side": sch.side,
            "alpha": float(sch.s.alpha),
            "smoothing": [float(v) for v in sch.s.values],
            "inner": scheme_to_dict(sch.inner),
        }
    raise ValidationError(f"unknown scheme {type(sch).__name__}")


def scheme_from_dict(d: dict) -> QuantScheme:
    try:
        kind = d["kind"]
        if kind == "tensor_wise":
            return TensorWise(float(d["scale"]), int(d["zero_point"]), str(d["mode"]))
        if kind == "channel_wise":
            return ChannelWise(
                str(d["axis"]),
                np.asarray(d["scales"], dtype=np.float32),
                np.asarray(d["zero_points"], dtype=np.int16),
                str(d["mode"]),
            )
        if kind == "smoothed":
            inner = scheme_from_dict(d["inner"])
            if not isinstance(inner, TensorWise):
                raise ValidationError("smoothed scheme must wrap tensor_wise")
            sv = SmoothingVector(
                np.asarray(d["smoothing"], dtype=np.float32), float(d["alpha"])
            )
            return Smoothed(sv, str(d["side"]), inner)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"malformed scheme descriptor: {e}") from e
    raise ValidationError(f"unknown scheme kind '{d.get('kind')}'")
