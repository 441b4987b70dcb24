"""Packed sub-byte tensors and the golden scalar reference for QNN layers.

Elements are packed least-significant-first: element ``i`` of a tensor with
``bits``-wide elements occupies bits ``[i*bits % 8, ...]`` of byte
``i*bits // 8``.  Tensors are stored in HWC order (channels innermost); weight
tensors use (Cout, Kh, Kw, Cin).

The reference functions here are the oracle every simulated kernel is checked
against.  They work on plain numpy arrays and never touch the simulator.
"""
from __future__ import annotations

import base64
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class TensorError(ValueError):
    """Raised for malformed tensors, out-of-range values or shape mismatches."""


@dataclass(frozen=True)
class Precision:
    bits: int
    signed: bool = False

    def __post_init__(self):
        if self.bits not in (2, 4, 8):
            raise TensorError(f"unsupported precision: {self.bits} bits")

    @property
    def lo(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    @property
    def hi(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else (1 << self.bits) - 1

    @property
    def per_word(self) -> int:
        return 32 // self.bits

    def __str__(self) -> str:
        return f"{'i' if self.signed else 'u'}{self.bits}"

    @classmethod
    def parse(cls, text: str) -> "Precision":
        """Parse ``u8``, ``i4``, ``s2`` style names."""
        text = text.strip().lower()
        if len(text) < 2 or text[0] not in "uis" or not text[1:].isdigit():
            raise TensorError(f"bad precision name {text!r}")
        return cls(int(text[1:]), text[0] != "u")


U8, U4, U2 = Precision(8), Precision(4), Precision(2)
I8, I4, I2 = Precision(8, True), Precision(4, True), Precision(2, True)


def packed_size(n: int, bits: int) -> int:
    return (n * bits + 7) // 8


@dataclass(frozen=True)
class PackedTensor:
    shape: tuple
    precision: Precision
    data: bytes = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "data", bytes(self.data))
        if len(self.data) != packed_size(self.size, self.precision.bits):
            raise TensorError(
                f"data length {len(self.data)} does not match shape {self.shape} "
                f"at {self.precision.bits} bits")
        if len(self.shape) > 1 and (self.shape[-1] * self.precision.bits) % 8:
            raise TensorError(
                f"innermost dimension {self.shape[-1]} x {self.precision.bits} bits "
                "is not byte-aligned")

    @property
    def size(self) -> int:
        return math.prod(self.shape) if self.shape else 0

    @property
    def nbytes(self) -> int:
        return len(self.data)

    def values(self) -> np.ndarray:
        """Unpacked values reshaped to ``shape``."""
        return unpack(self).reshape(self.shape)


def _codes(values: np.ndarray, precision: Precision) -> np.ndarray:
    if values.size and (values.min() < precision.lo or values.max() > precision.hi):
        bad = values[(values < precision.lo) | (values > precision.hi)][0]
        raise TensorError(f"value {int(bad)} out of range for {precision}")
    return (values & ((1 << precision.bits) - 1)).astype(np.uint8)


def pack(values: Iterable[int] | np.ndarray, precision: Precision,
         shape: Sequence[int] | None = None) -> PackedTensor:
    """Pack integers LSB-first into bytes.

    >>> pack([1, 2, 3, 0], U4).data.hex()
    '2103'
    """
    arr = np.asarray(values if isinstance(values, np.ndarray) else list(values),
                     dtype=np.int64).reshape(-1)
    if shape is None:
        shape = (arr.size,)
    elif math.prod(shape) != arr.size:
        raise TensorError(f"{arr.size} values do not fill shape {tuple(shape)}")
    codes = _codes(arr, precision)
    per_byte = 8 // precision.bits
    pad = (-codes.size) % per_byte
    if pad:
        codes = np.concatenate([codes, np.zeros(pad, np.uint8)])
    groups = codes.reshape(-1, per_byte).astype(np.uint16)
    shifts = np.arange(per_byte, dtype=np.uint16) * precision.bits
    data = (groups << shifts).sum(axis=1).astype(np.uint8).tobytes()
    return PackedTensor(tuple(shape), precision, data)


def unpack_bytes(data: bytes, precision: Precision, count: int) -> np.ndarray:
    """Unpack ``count`` elements from raw bytes, sign-extending when signed."""
    per_byte = 8 // precision.bits
    raw = np.frombuffer(bytes(data), dtype=np.uint8)
    if raw.size * per_byte < count:
        raise TensorError("not enough bytes for requested element count")
    shifts = np.arange(per_byte, dtype=np.uint8) * precision.bits
    codes = ((raw[:, None] >> shifts) & ((1 << precision.bits) - 1)).reshape(-1)[:count]
    out = codes.astype(np.int64)
    if precision.signed:
        out = np.where(out > precision.hi, out - (1 << precision.bits), out)
    return out


def unpack(t: PackedTensor) -> np.ndarray:
    return unpack_bytes(t.data, t.precision, t.size)


@dataclass(frozen=True)
class QuantParams:
    """Requantization ``clip((m * acc + b) >> d)`` into ``out``."""
    m: int
    b: int
    d: int
    out: Precision = U8

    def __post_init__(self):
        for name in ("m", "b"):
            v = getattr(self, name)
            if not -(1 << 31) <= v < (1 << 31):
                raise TensorError(f"quant parameter {name}={v} is not a 32-bit integer")
        if not 0 <= self.d < 32:
            raise TensorError(f"shift {self.d} outside [0, 32)")


def reference_quantize(acc: int, q: QuantParams) -> int:
    """Scalar requantization with a wide intermediate and saturating clip."""
    v = (q.m * int(acc) + q.b) >> q.d
    return min(max(v, q.out.lo), q.out.hi)


def quantize_array(acc: np.ndarray, q: QuantParams) -> np.ndarray:
    v = (np.asarray(acc, dtype=np.int64) * q.m + q.b) >> q.d
    return np.clip(v, q.out.lo, q.out.hi)


@dataclass(frozen=True)
class LayerSpec:
    """A standard 2-D convolution followed by requantization."""
    in_h: int
    in_w: int
    cin: int
    cout: int
    kh: int = 3
    kw: int = 3
    stride: int = 1
    padding: int = 1
    act: Precision = U8
    weight: Precision = I8
    quant: QuantParams = QuantParams(1, 0, 0)

    def __post_init__(self):
        if min(self.in_h, self.in_w, self.cin, self.cout, self.kh, self.kw, self.stride) < 1:
            raise TensorError("layer dimensions must be positive")
        if self.padding < 0:
            raise TensorError("padding must be non-negative")
        if self.out_h < 1 or self.out_w < 1:
            raise TensorError("kernel larger than padded input")

    @property
    def out_h(self) -> int:
        return (self.in_h + 2 * self.padding - self.kh) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.in_w + 2 * self.padding - self.kw) // self.stride + 1

    @property
    def k(self) -> int:
        return self.kh * self.kw * self.cin

    @property
    def macs(self) -> int:
        return self.out_h * self.out_w * self.cout * self.k

    @property
    def input_shape(self) -> tuple:
        return (self.in_h, self.in_w, self.cin)

    @property
    def weight_shape(self) -> tuple:
        return (self.cout, self.kh, self.kw, self.cin)

    @property
    def output_shape(self) -> tuple:
        return (self.out_h, self.out_w, self.cout)


def wrap32(x):
    """Two's-complement wraparound to signed 32 bits (scalar or array)."""
    if isinstance(x, np.ndarray):
        return ((x.astype(np.int64) + (1 << 31)) & 0xFFFFFFFF) - (1 << 31)
    return ((int(x) + (1 << 31)) & 0xFFFFFFFF) - (1 << 31)


def _check_operands(layer: LayerSpec, input: PackedTensor, weights: PackedTensor):
    if input.shape != layer.input_shape:
        raise TensorError(f"input shape {input.shape} != {layer.input_shape}")
    if weights.shape != layer.weight_shape:
        raise TensorError(f"weight shape {weights.shape} != {layer.weight_shape}")


def reference_conv2d(layer: LayerSpec, input: PackedTensor,
                     weights: PackedTensor) -> np.ndarray:
    """Exact convolution, returning an (Hout, Wout, Cout) int64 array of 32-bit values."""
    _check_operands(layer, input, weights)
    x = input.values()
    w = weights.values()
    p, s = layer.padding, layer.stride
    xp = np.zeros((layer.in_h + 2 * p, layer.in_w + 2 * p, layer.cin), np.int64)
    xp[p:p + layer.in_h, p:p + layer.in_w] = x
    oh, ow = layer.out_h, layer.out_w
    out = np.zeros((oh, ow, layer.cout), np.int64)
    for i in range(layer.kh):
        for j in range(layer.kw):
            patch = xp[i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s]
            out += patch @ w[:, i, j, :].T
    return wrap32(out)


def reference_layer(layer: LayerSpec, input: PackedTensor,
                    weights: PackedTensor) -> PackedTensor:
    """Convolution plus requantization, packed in the layer's output precision."""
    acc = reference_conv2d(layer, input, weights)
    return pack(quantize_array(acc, layer.quant), layer.quant.out, layer.output_shape)


def reference_im2col(layer: LayerSpec, input: PackedTensor, out_pixel) -> PackedTensor:
    """The (kh, kw, ci)-ordered patch feeding output pixel ``(y, x)``."""
    y, x = out_pixel
    if not (0 <= y < layer.out_h and 0 <= x < layer.out_w):
        raise TensorError(f"output pixel {out_pixel} outside {layer.out_h}x{layer.out_w}")
    if input.shape != layer.input_shape:
        raise TensorError(f"input shape {input.shape} != {layer.input_shape}")
    vals = input.values()
    buf = np.zeros((layer.kh, layer.kw, layer.cin), np.int64)
    for i in range(layer.kh):
        iy = y * layer.stride + i - layer.padding
        if not 0 <= iy < layer.in_h:
            continue
        for j in range(layer.kw):
            ix = x * layer.stride + j - layer.padding
            if 0 <= ix < layer.in_w:
                buf[i, j] = vals[iy, ix]
    return pack(buf.reshape(-1), layer.act)


def random_tensor(rng: np.random.Generator, shape, precision: Precision) -> PackedTensor:
    vals = rng.integers(precision.lo, precision.hi + 1, size=math.prod(shape))
    return pack(vals, precision, shape)


# ---------------------------------------------------------------------------
# Tensor files: binary FXVT container and a JSON sidecar with base64 payload.

MAGIC = b"FXVT"
FILE_VERSION = 1


def to_bytes(t: PackedTensor) -> bytes:
    head = MAGIC + struct.pack("<BB", FILE_VERSION, len(t.shape))
    head += struct.pack(f"<{len(t.shape)}I", *t.shape)
    head += struct.pack("<BBI", t.precision.bits, int(t.precision.signed), len(t.data))
    return head + t.data


def from_bytes(blob: bytes) -> PackedTensor:
    if blob[:4] != MAGIC:
        raise TensorError("not an FXVT tensor file")
    version, ndim = struct.unpack_from("<BB", blob, 4)
    if version != FILE_VERSION:
        raise TensorError(f"unsupported FXVT version {version}")
    off = 6
    shape = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    bits, signed, n = struct.unpack_from("<BBI", blob, off)
    off += 6
    data = blob[off:off + n]
    if len(data) != n:
        raise TensorError("truncated FXVT payload")
    return PackedTensor(shape, Precision(bits, bool(signed)), data)


def to_json(t: PackedTensor) -> dict:
    return {
        "format": "fxvt-json",
        "version": FILE_VERSION,
        "shape": list(t.shape),
        "precision": {"bits": t.precision.bits, "signed": t.precision.signed},
        "data": base64.b64encode(t.data).decode("ascii"),
    }


def from_json(doc: dict) -> PackedTensor:
    if doc.get("format") != "fxvt-json":
        raise TensorError("not an fxvt-json document")
    p = doc["precision"]
    return PackedTensor(tuple(doc["shape"]), Precision(p["bits"], p["signed"]),
                        base64.b64decode(doc["data"]))


def save_tensor(t: PackedTensor, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(to_json(t), indent=1))
    else:
        path.write_bytes(to_bytes(t))


def load_tensor(path) -> PackedTensor:
    path = Path(path)
    if path.suffix == ".json":
        return from_json(json.loads(path.read_text()))
    return from_bytes(path.read_bytes())
