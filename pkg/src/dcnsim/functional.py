"""Functional reference for deformable convolution.

The pipeline has three stages: a standard convolution that produces raw
offsets, bilinear interpolation that gathers deformed features at the
resulting fractional coordinates, and a second standard convolution over the
gathered features.  Two offset-sharing variants are supported:

* ``per-position`` - one (row, col) offset pair per output location, shared
  by every tap of that location's window.
* ``per-tap`` - one pair per (output location, kernel tap).

Offsets are relative displacements from the standard sliding-window tap
positions; they are converted to absolute fractional coordinates and clamped
into the feature bounds before any sampling happens, so the four bilinear
neighbors always exist.

Both stages of standard convolution share one gather-then-contract code path
(windows of shape (C, positions, taps) reduced with a single einsum), so a
zero offset field reproduces the plain convolution exactly, not just to
rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import Tensor3D, quantize_tensor, quantize_values, pow2_scale

VARIANT_PER_POSITION = "per-position"
VARIANT_PER_TAP = "per-tap"
VARIANTS = (VARIANT_PER_POSITION, VARIANT_PER_TAP)


@dataclass(frozen=True)
class ConvLayerSpec:
    """Static description of one convolution: dims plus weight/bias payload."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    weights: np.ndarray = None
    bias: np.ndarray = None

    def __post_init__(self):
        if self.kernel < 1:
            raise ConfigError(f"kernel must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ConfigError(f"padding must be >= 0, got {self.padding}")
        w = np.asarray(self.weights, dtype=np.float64)
        want = (self.out_channels, self.in_channels, self.kernel, self.kernel)
        if w.shape != want:
            raise ConfigError(f"weights shape {w.shape} != {want}")
        b = np.asarray(self.bias, dtype=np.float64)
        if b.shape != (self.out_channels,):
            raise ConfigError(
                f"bias length {b.shape} != out_channels {self.out_channels}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


def quantize_layer(layer: ConvLayerSpec) -> ConvLayerSpec:
    """Snap weights to the 8-bit grid.  Bias stays wide (accumulator precision)."""
    scale = pow2_scale(float(np.max(np.abs(layer.weights))) if layer.weights.size else 0.0)
    return ConvLayerSpec(
        layer.in_channels, layer.out_channels, layer.kernel, layer.stride,
        layer.padding, quantize_values(layer.weights, scale), layer.bias,
    )


def conv_output_dims(h: int, w: int, layer: ConvLayerSpec) -> tuple[int, int]:
    """Output height/width of a conv; raises if the geometry does not divide."""
    out = []
    for name, dim in (("height", h), ("width", w)):
        span = dim + 2 * layer.padding - layer.kernel
        if span < 0 or span % layer.stride != 0:
            raise ConfigError(
                f"{name} {dim} with kernel {layer.kernel}, stride {layer.stride}, "
                f"padding {layer.padding} gives no integral output size"
            )
        out.append(span // layer.stride + 1)
    if out[0] <= 0 or out[1] <= 0:
        raise ConfigError(f"non-positive output dims {tuple(out)}")
    return out[0], out[1]


def _gather_windows(x: Tensor3D, layer: ConvLayerSpec) -> tuple[np.ndarray, int, int]:
    """im2col: padded sliding windows as (C, out_h*out_w, K*K)."""
    out_h, out_w = conv_output_dims(x.height, x.width, layer)
    p = layer.padding
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p))) if p else x.data
    k, s = layer.kernel, layer.stride
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, ::s, ::s]  # (C, out_h, out_w, K, K)
    n_pos = out_h * out_w
    return win.reshape(x.channels, n_pos, k * k), out_h, out_w


def window_conv(windows: np.ndarray, layer: ConvLayerSpec,
                out_h: int, out_w: int) -> np.ndarray:
    """Contract (C, positions, taps) windows with the layer weights.

    This is the single reduction both conv stages go through; the summation
    order is therefore identical for plain and deformable execution.
    """
    c = layer.in_channels
    if windows.shape[0] != c:
        raise ConfigError(
            f"window channels {windows.shape[0]} != layer in_channels {c}"
        )
    kk = layer.kernel * layer.kernel
    w = layer.weights.reshape(layer.out_channels, c, kk)
    y = np.einsum("lck,cpk->lp", w, windows) + layer.bias[:, None]
    return y.reshape(layer.out_channels, out_h, out_w)


def standard_conv(x: Tensor3D, layer: ConvLayerSpec) -> Tensor3D:
    """Plain convolution.  Quantized inputs produce a requantized output."""
    if x.channels != layer.in_channels:
        raise ConfigError(
            f"input has {x.channels} channels, layer expects {layer.in_channels}"
        )
    windows, out_h, out_w = _gather_windows(x, layer)
    y = Tensor3D(window_conv(windows, layer, out_h, out_w))
    return quantize_tensor(y) if x.is_quantized else y


# ---------------------------------------------------------------------------
# Offset handling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OffsetField:
    """Absolute, clamped fractional sampling coordinates for one layer.

    ``coords`` holds (row, col) pairs: one per output position for the
    per-position variant (the window's first tap; the remaining taps are the
    pair shifted by the tap index and re-clamped), one per (position, tap)
    for the per-tap variant, position-major with taps innermost.
    """

    variant: str
    out_h: int
    out_w: int
    kernel: int
    input_h: int
    input_w: int
    coords: np.ndarray

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        coords = np.asarray(self.coords, dtype=np.float64)
        n_pos = self.out_h * self.out_w
        want = n_pos if self.variant == VARIANT_PER_POSITION else n_pos * self.kernel ** 2
        if coords.shape != (want, 2):
            raise ConfigError(f"coords shape {coords.shape} != ({want}, 2)")
        object.__setattr__(self, "coords", coords)

    @property
    def n_samples(self) -> int:
        """Deformed samples per channel: one per (output position, tap)."""
        return self.out_h * self.out_w * self.kernel ** 2

    def sample_coords(self) -> np.ndarray:
        """Expanded per-(position, tap) coordinates, shape (n_samples, 2)."""
        if self.variant == VARIANT_PER_TAP:
            return self.coords
        k = self.kernel
        taps = np.stack(np.meshgrid(np.arange(k), np.arange(k), indexing="ij"),
                        axis=-1).reshape(k * k, 2)
        expanded = self.coords[:, None, :] + taps[None, :, :]
        expanded = expanded.reshape(-1, 2)
        expanded[:, 0] = np.clip(expanded[:, 0], 0.0, self.input_h - 1)
        expanded[:, 1] = np.clip(expanded[:, 1], 0.0, self.input_w - 1)
        return expanded


def offset_channels(variant: str, kernel: int) -> int:
    """Offset-branch output channels: (row, col) per tap, or one shared pair."""
    return 2 * kernel * kernel if variant == VARIANT_PER_TAP else 2


def compute_offsets(x: Tensor3D, offset_layer: ConvLayerSpec,
                    variant: str) -> OffsetField:
    """Run the offset convolution and convert raw offsets to clamped coordinates.

    The raw conv output is kept at accumulator precision even in quantized
    mode: indices live in their own buffer and never pass through the 8-bit
    feature path.  Channel 2t is the row offset of tap t, channel 2t+1 the
    column offset (t = 0 for the per-position variant).
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    want = offset_channels(variant, offset_layer.kernel)
    if offset_layer.out_channels != want:
        raise ConfigError(
            f"offset branch has {offset_layer.out_channels} channels, "
            f"variant {variant} with kernel {offset_layer.kernel} needs {want}"
        )
    windows, out_h, out_w = _gather_windows(x, offset_layer)
    raw = window_conv(windows, offset_layer, out_h, out_w)  # (2 or 2K^2, oh, ow)

    k, s, p = offset_layer.kernel, offset_layer.stride, offset_layer.padding
    rows = np.arange(out_h) * s - p
    cols = np.arange(out_w) * s - p
    base_r, base_c = np.meshgrid(rows, cols, indexing="ij")  # (oh, ow)

    if variant == VARIANT_PER_POSITION:
        alpha = base_r + raw[0]
        beta = base_c + raw[1]
        coords = np.stack([alpha.ravel(), beta.ravel()], axis=-1)
    else:
        taps = np.stack(np.meshgrid(np.arange(k), np.arange(k), indexing="ij"),
                        axis=-1).reshape(k * k, 2)
        d_r = raw[0::2].reshape(k * k, -1)  # (KK, n_pos)
        d_c = raw[1::2].reshape(k * k, -1)
        alpha = base_r.ravel()[None, :] + taps[:, 0][:, None] + d_r
        beta = base_c.ravel()[None, :] + taps[:, 1][:, None] + d_c
        # position-major, tap-minor
        coords = np.stack([alpha.T.ravel(), beta.T.ravel()], axis=-1)

    coords[:, 0] = np.clip(coords[:, 0], 0.0, x.height - 1)
    coords[:, 1] = np.clip(coords[:, 1], 0.0, x.width - 1)
    return OffsetField(variant, out_h, out_w, k, x.height, x.width, coords)


# ---------------------------------------------------------------------------
# Bilinear interpolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BliWeights:
    """The four interpolation coefficients plus the fractional parts."""

    eta: float    # floor row, floor col
    mu: float     # floor row, ceil col
    theta: float  # ceil row, floor col
    gamma: float  # ceil row, ceil col
    d_row: float
    d_col: float


def bli_weights(d_row: float, d_col: float) -> BliWeights:
    """Coefficients from the fractional parts.

    The corner product is formed first and the opposite coefficients are
    derived from it with subtractions, mirroring the shared-multiplier
    coefficient pipeline.
    """
    if not (0.0 <= d_row < 1.0 and 0.0 <= d_col < 1.0):
        raise ValueError(f"fractional parts must lie in [0, 1): ({d_row}, {d_col})")
    gamma = d_row * d_col
    eta = (1.0 - d_row) * (1.0 - d_col)
    mu = d_col - gamma
    theta = d_row - gamma
    return BliWeights(eta, mu, theta, gamma, d_row, d_col)


def bli_sample(x: Tensor3D, channel: int, alpha: float, beta: float) -> float:
    """Interpolate one channel of ``x`` at the clamped coordinate (alpha, beta)."""
    if not (0.0 <= alpha <= x.height - 1 and 0.0 <= beta <= x.width - 1):
        raise ValueError(f"coordinate ({alpha}, {beta}) outside clamped bounds")
    r0, c0 = int(np.floor(alpha)), int(np.floor(beta))
    r1, c1 = int(np.ceil(alpha)), int(np.ceil(beta))
    w = bli_weights(alpha - r0, beta - c0)
    d = x.data
    return (w.eta * d[channel, r0, c0] + w.mu * d[channel, r0, c1]
            + w.theta * d[channel, r1, c0] + w.gamma * d[channel, r1, c1])


def deform_features(x: Tensor3D, offs: OffsetField) -> Tensor3D:
    """Gather deformed features; output is (C, positions, taps), channel-major.

    Quantized inputs yield an output snapped back to an 8-bit grid, since the
    deformed features land in a feature buffer again.
    """
    if offs.input_h != x.height or offs.input_w != x.width:
        raise ConfigError(
            f"offset field built for {offs.input_h}x{offs.input_w} input, "
            f"tensor is {x.height}x{x.width}"
        )
    coords = offs.sample_coords()
    alpha, beta = coords[:, 0], coords[:, 1]
    r0 = np.floor(alpha).astype(np.intp)
    c0 = np.floor(beta).astype(np.intp)
    r1 = np.ceil(alpha).astype(np.intp)
    c1 = np.ceil(beta).astype(np.intp)
    d_row = alpha - r0
    d_col = beta - c0
    gamma = d_row * d_col
    eta = (1.0 - d_row) * (1.0 - d_col)
    mu = d_col - gamma
    theta = d_row - gamma
    d = x.data
    vals = (eta * d[:, r0, c0] + mu * d[:, r0, c1]
            + theta * d[:, r1, c0] + gamma * d[:, r1, c1])  # (C, n)
    kk = offs.kernel ** 2
    out = Tensor3D(vals.reshape(x.channels, offs.out_h * offs.out_w, kk))
    return quantize_tensor(out) if x.is_quantized else out


def deformable_conv(x: Tensor3D, offset_layer: ConvLayerSpec,
                    main_layer: ConvLayerSpec, variant: str) -> Tensor3D:
    """Full three-stage pipeline: offsets, gather, convolution."""
    for name, layer in (("offset", offset_layer), ("main", main_layer)):
        if layer.in_channels != x.channels:
            raise ConfigError(
                f"{name} layer expects {layer.in_channels} channels, "
                f"input has {x.channels}"
            )
    if (offset_layer.kernel, offset_layer.stride, offset_layer.padding) != (
            main_layer.kernel, main_layer.stride, main_layer.padding):
        raise ConfigError("offset and main layers must share kernel/stride/padding")
    offs = compute_offsets(x, offset_layer, variant)
    deformed = deform_features(x, offs)
    y = Tensor3D(window_conv(deformed.data, main_layer, offs.out_h, offs.out_w))
    return quantize_tensor(y) if x.is_quantized else y
