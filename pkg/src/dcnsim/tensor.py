"""Channel-major 3-D tensor container with optional 8-bit fixed-point mode.

The simulator runs every functional computation in float64. "Quantized" mode
means values are snapped to a symmetric 8-bit grid with a shared power-of-two
step, matching processing elements that rescale with shifts only.  Snapped
values are dyadic rationals, so float64 arithmetic on them stays exact and
bit-exact comparisons between pipelines are meaningful.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

QUANT_LEVELS = 127  # symmetric int8 range [-127, 127]

_MAGIC = b"DCNT"


@dataclass(frozen=True)
class Tensor3D:
    """Feature/weight container, shape (C, H, W), channel-major storage.

    ``scale`` is None in float mode.  When set, it is the power-of-two
    quantization step and every element is an exact multiple of it.
    """

    data: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ConfigError(f"Tensor3D needs 3 axes (C, H, W), got {arr.ndim}")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def is_quantized(self) -> bool:
        return self.scale is not None

    def __getitem__(self, idx):
        return self.data[idx]


def pow2_scale(max_abs: float) -> float:
    """Smallest power-of-two step that maps ``max_abs`` inside the code range."""
    if max_abs == 0.0:
        return 1.0
    return 2.0 ** math.ceil(math.log2(max_abs / QUANT_LEVELS))


def quantize_values(values: np.ndarray, scale: float) -> np.ndarray:
    """Snap values to the grid ``scale * [-127, 127]`` (round half to even)."""
    codes = np.clip(np.rint(np.asarray(values, dtype=np.float64) / scale),
                    -QUANT_LEVELS, QUANT_LEVELS)
    return codes * scale


def quantize_tensor(t: Tensor3D) -> Tensor3D:
    """Return the 8-bit fixed-point view of ``t`` (no-op scale if already exact)."""
    scale = pow2_scale(float(np.max(np.abs(t.data))) if t.data.size else 0.0)
    return Tensor3D(quantize_values(t.data, scale), scale=scale)


def write_dcnt(path, t: Tensor3D) -> None:
    """Raw export: 16-byte header (magic "DCNT", u32 C/H/W, little-endian) + f32 data."""
    header = _MAGIC + struct.pack("<III", t.channels, t.height, t.width)
    with open(path, "wb") as f:
        f.write(header)
        f.write(t.data.astype("<f4").tobytes())


def read_dcnt(path) -> Tensor3D:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != _MAGIC:
            raise ConfigError(f"{path}: not a DCNT tensor file")
        c, h, w = struct.unpack("<III", header[4:])
        payload = f.read()
    expected = c * h * w * 4
    if len(payload) != expected:
        raise ConfigError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(c, h, w)
    return Tensor3D(data)
