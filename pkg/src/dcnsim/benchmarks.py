"""Benchmark network definitions and synthetic offset generation.

Two families ship in two scales each:

* ``VGG19-3 / VGG19-8 / VGG19-F`` - the 16 VGG19 convolutions (3x3, stride 1,
  pad 1, pooling after each block); the ``-F`` configuration also counts the
  three classifier layers expressed as convolutions, matching the published
  19-layer figure.  Deformable layers replace standard ones starting from the
  output end.
* ``SegNet-3 / SegNet-8 / SegNet-F`` - the 13 VGG16 encoder convolutions plus
  a truncated 3-layer decoder (upsample x2 before each decoder conv), for the
  published 16-layer count.  Pooling follows the standard VGG16 schedule.

``tiny-*`` variants keep the layer-count ratios at one eighth of the channel
width on a constant 32x32 map (pooling dropped so a single tile-grid setting
is valid for every layer); they run the full pipeline in well under a second.

No trained models exist for these benchmarks, so offset fields are generated
pseudo-randomly: displacement magnitudes follow a two-component heavy-tailed
mixture - a bulk of sub-pixel jitter plus a skew-controlled fraction of
long-range jumps onto a few integer-pixel hot spots - which reproduces the
strongly non-uniform input-tile utilization seen in trained deformable
networks.  ``skew = 0`` degenerates to exact zero offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .functional import (VARIANT_PER_POSITION, VARIANT_PER_TAP, VARIANTS,
                         OffsetField)


@dataclass(frozen=True)
class LayerDef:
    """One network layer: dimensions only, weights are never materialized."""

    name: str
    kind: str  # "conv" | "deformable"
    in_channels: int
    out_channels: int
    in_h: int
    in_w: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    variant: str | None = None  # deformable layers only

    def out_dims(self) -> tuple[int, int]:
        oh = (self.in_h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (self.in_w + 2 * self.padding - self.kernel) // self.stride + 1
        return oh, ow


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    in_channels: int
    in_h: int
    in_w: int
    layers: tuple[LayerDef, ...] = field(default_factory=tuple)

    def __post_init__(self):
        prev_c = self.in_channels
        for layer in self.layers:
            if layer.in_channels != prev_c:
                raise ConfigError(
                    f"layer {layer.name}: in_channels {layer.in_channels} "
                    f"does not chain from previous out_channels {prev_c}"
                )
            prev_c = layer.out_channels

    @property
    def n_deformable(self) -> int:
        return sum(1 for l in self.layers if l.kind == "deformable")

    @property
    def n_conv(self) -> int:
        return sum(1 for l in self.layers if l.kind == "conv")

    def deformable_layers(self) -> list[LayerDef]:
        return [l for l in self.layers if l.kind == "deformable"]

    def summary(self) -> dict:
        return {
            "name": self.name,
            "input": [self.in_channels, self.in_h, self.in_w],
            "n_deformable": self.n_deformable,
            "n_conv": self.n_conv,
            "layers": [
                {"name": l.name, "kind": l.kind, "channels": l.out_channels,
                 "map": [l.in_h, l.in_w], "kernel": l.kernel}
                for l in self.layers
            ],
        }


_VGG19_WIDTHS = [64, 64, 128, 128, 256, 256, 256, 256,
                 512, 512, 512, 512, 512, 512, 512, 512]
_VGG19_POOL_AFTER = {2, 4, 8, 12, 16}  # 1-based conv positions
_VGG19_CLASSIFIER = [4096, 4096, 1000]

_SEGNET_ENC_WIDTHS = [64, 64, 128, 128, 256, 256, 256,
                      512, 512, 512, 512, 512, 512]
_SEGNET_POOL_AFTER = {2, 4, 7, 10, 13}
_SEGNET_DEC_WIDTHS = [256, 128, 64]


def _make_layers(widths, pool_after, upsample_before, in_c, h, w,
                 n_deformable, variant, tiny, prefix):
    """Assemble a chain; the last ``n_deformable`` layers are deformable."""
    layers = []
    c = in_c
    n = len(widths)
    for pos, out_c in enumerate(widths, start=1):
        if not tiny and pos in upsample_before:
            h, w = h * 2, w * 2
        kind = "deformable" if pos > n - n_deformable else "conv"
        layers.append(LayerDef(
            name=f"{prefix}{pos}", kind=kind, in_channels=c, out_channels=out_c,
            in_h=h, in_w=w,
            variant=variant if kind == "deformable" else None,
        ))
        c = out_c
        if not tiny and pos in pool_after:
            h, w = h // 2, w // 2
    return layers, h, w


def _vgg19(tag: str, n_deformable_total: int, variant: str,
           tiny: bool) -> NetworkSpec:
    div = 8 if tiny else 1
    h = w = 32 if tiny else 224
    widths = [max(1, v // div) for v in _VGG19_WIDTHS]
    classifier = [max(1, v // div) for v in _VGG19_CLASSIFIER]
    full_chain = tag.endswith("-F")
    if full_chain:
        widths = widths + classifier
    n_layers = len(widths)
    layers, _, _ = _make_layers(
        widths, _VGG19_POOL_AFTER, set(), 3, h, w,
        min(n_deformable_total, n_layers), variant, tiny, "conv")
    if full_chain and not tiny:
        # classifier trio runs on the 7x7 block-5 output: 7x7 conv then 1x1s
        tail = []
        c = widths[15]
        th, tw = 7, 7
        for i, out_c in enumerate(classifier):
            k = 7 if i == 0 else 1
            tail.append(LayerDef(
                name=f"fcconv{i + 1}", kind="deformable", in_channels=c,
                out_channels=out_c, in_h=th, in_w=tw, kernel=k, padding=0,
                variant=variant,
            ))
            th = tw = 1
            c = out_c
        layers = layers[:16] + tail
    name = ("tiny-" if tiny else "") + tag
    return NetworkSpec(name, 3, h, w, tuple(layers))


def _segnet(tag: str, n_deformable_total: int, variant: str,
            tiny: bool) -> NetworkSpec:
    div = 8 if tiny else 1
    h = w = 32 if tiny else 224
    widths = ([max(1, v // div) for v in _SEGNET_ENC_WIDTHS]
              + [max(1, v // div) for v in _SEGNET_DEC_WIDTHS])
    upsample_before = {14, 15, 16}  # decoder convs, 1-based positions
    layers, _, _ = _make_layers(
        widths, _SEGNET_POOL_AFTER, upsample_before, 3, h, w,
        n_deformable_total, variant, tiny, "conv")
    name = ("tiny-" if tiny else "") + tag
    return NetworkSpec(name, 3, h, w, tuple(layers))


_BENCHMARKS = {
    "vgg19-3": ("vgg", "VGG19-3", 3),
    "vgg19-8": ("vgg", "VGG19-8", 8),
    "vgg19-f": ("vgg", "VGG19-F", 19),
    "segnet-3": ("segnet", "SegNet-3", 3),
    "segnet-8": ("segnet", "SegNet-8", 8),
    "segnet-f": ("segnet", "SegNet-F", 16),
}


def benchmark_names() -> list[str]:
    names = []
    for key in _BENCHMARKS:
        _, tag, _ = _BENCHMARKS[key]
        names.append(tag)
    return names + ["tiny-" + n for n in names]


def load_benchmark(name: str, variant: str = VARIANT_PER_TAP) -> NetworkSpec:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r} (use one of {VARIANTS})")
    key = name.strip().lower()
    tiny = key.startswith("tiny-")
    if tiny:
        key = key[len("tiny-"):]
    if key.startswith("vgg-"):  # accept the short tiny-VGG-3 style spelling
        key = "vgg19-" + key[len("vgg-"):]
    if key not in _BENCHMARKS:
        raise ConfigError(f"unknown benchmark {name!r}; see list-benchmarks")
    family, tag, n_def = _BENCHMARKS[key]
    if family == "vgg":
        return _vgg19(tag, n_def, variant, tiny)
    return _segnet(tag, n_def, variant, tiny)


# ---------------------------------------------------------------------------
# Synthetic offsets
# ---------------------------------------------------------------------------

_HOT_SPOTS = 2
_HOT_FRACTION_PER_SKEW = 0.08
_JITTER_PER_SKEW = 0.15
_JITTER_MAX = 0.45


def _tap_bases(layer: LayerDef, variant: str) -> np.ndarray:
    oh, ow = layer.out_dims()
    rows = np.arange(oh) * layer.stride - layer.padding
    cols = np.arange(ow) * layer.stride - layer.padding
    base_r, base_c = np.meshgrid(rows, cols, indexing="ij")
    anchors = np.stack([base_r.ravel(), base_c.ravel()], axis=-1).astype(np.float64)
    if variant == VARIANT_PER_POSITION:
        return anchors
    k = layer.kernel
    taps = np.stack(np.meshgrid(np.arange(k), np.arange(k), indexing="ij"),
                    axis=-1).reshape(k * k, 2)
    expanded = anchors[:, None, :] + taps[None, :, :]
    return expanded.reshape(-1, 2)


def synth_offset_field(layer: LayerDef, rng: np.random.Generator,
                       skew: float) -> OffsetField:
    """One layer's offset field under the hot-spot mixture model."""
    if skew < 0:
        raise ConfigError(f"skew must be >= 0, got {skew}")
    variant = layer.variant or VARIANT_PER_TAP
    oh, ow = layer.out_dims()
    h, w = layer.in_h, layer.in_w
    bases = _tap_bases(layer, variant)
    coords = bases.copy()
    if skew > 0:
        n = len(bases)
        spots = np.stack([rng.integers(0, h, _HOT_SPOTS),
                          rng.integers(0, w, _HOT_SPOTS)],
                         axis=-1).astype(np.float64)
        u = rng.random(n)
        spot_idx = rng.integers(0, _HOT_SPOTS, n)
        jitter_amp = min(_JITTER_MAX, _JITTER_PER_SKEW * skew)
        jitter = rng.uniform(-1.0, 1.0, (n, 2)) * jitter_amp
        hot = u < min(0.5, _HOT_FRACTION_PER_SKEW * skew)
        coords = bases + jitter
        coords[hot] = spots[spot_idx[hot]]
    coords[:, 0] = np.clip(coords[:, 0], 0.0, h - 1)
    coords[:, 1] = np.clip(coords[:, 1], 0.0, w - 1)
    return OffsetField(variant, oh, ow, layer.kernel, h, w, coords)


def gen_offsets(net: NetworkSpec, seed: int, skew: float) -> list[OffsetField]:
    """Deterministic per-layer fields; one entry per deformable layer."""
    fields = []
    for idx, layer in enumerate(net.layers):
        if layer.kind != "deformable":
            continue
        rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, idx])
        fields.append(synth_offset_field(layer, rng, skew))
    return fields
