"""Tile grids, runtime coordinate-to-tile decoding, and dependency tracking.

A grid splits a feature map into ``rows x cols`` rectangular tiles with
uniform spans; the trailing tile on each axis absorbs the remainder (it may
shrink, or be empty when the span over-covers).  Coordinates are mapped to
tiles the way the hardware does it: the value is compared against every
interior boundary and the comparison bit vector is decoded by counting ones.
A coordinate sitting exactly on a boundary belongs to the higher tile.

The dependency table records, per output tile, which input tiles hold any of
the four bilinear neighbors of any of its samples.  Every sample contributes
four neighbor reads even at integer coordinates (the fetch path always issues
all four bank addresses), which is also the counting rule of the access
histogram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .functional import OffsetField


@dataclass(frozen=True)
class TileGrid:
    rows: int
    cols: int
    height: int
    width: int
    row_boundaries: np.ndarray  # ascending, length rows + 1, first 0, last height
    col_boundaries: np.ndarray

    @property
    def n_tiles(self) -> int:
        return self.rows * self.cols

    def tile_bounds(self, tile_id: int) -> tuple[int, int, int, int]:
        """Half-open (r0, r1, c0, c1) pixel bounds of a tile."""
        r, c = divmod(tile_id, self.cols)
        rb, cb = self.row_boundaries, self.col_boundaries
        return int(rb[r]), int(rb[r + 1]), int(cb[c]), int(cb[c + 1])

    def tile_area(self, tile_id: int) -> int:
        r0, r1, c0, c1 = self.tile_bounds(tile_id)
        return max(0, r1 - r0) * max(0, c1 - c0)

    def nominal_tile_px(self) -> tuple[int, int]:
        """Uniform (row span, col span) before remainder absorption."""
        return (math.ceil(self.height / self.rows),
                math.ceil(self.width / self.cols))


def build_tile_grid(height: int, width: int, tile_rows: int, tile_cols: int) -> TileGrid:
    if height < 1 or width < 1:
        raise ConfigError(f"feature map {height}x{width} has a zero dimension")
    if not (1 <= tile_rows <= height and 1 <= tile_cols <= width):
        raise ConfigError(
            f"grid {tile_rows}x{tile_cols} does not fit a {height}x{width} map"
        )
    r_span = math.ceil(height / tile_rows)
    c_span = math.ceil(width / tile_cols)
    rb = np.minimum(np.arange(tile_rows + 1) * r_span, height)
    cb = np.minimum(np.arange(tile_cols + 1) * c_span, width)
    return TileGrid(tile_rows, tile_cols, height, width, rb, cb)


def _decode_axis(value: float, boundaries: np.ndarray) -> int:
    # compare against each interior boundary, then count the ones
    bits = [1 if value >= b else 0 for b in boundaries[1:-1]]
    return sum(bits)


def locate_tile(alpha: float, beta: float, grid: TileGrid) -> int:
    """Row-major tile id of a clamped coordinate via boundary comparisons."""
    row = _decode_axis(alpha, grid.row_boundaries)
    col = _decode_axis(beta, grid.col_boundaries)
    return row * grid.cols + col


def _decode_axis_many(values: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    interior = boundaries[1:-1]
    if interior.size == 0:
        return np.zeros(len(values), dtype=np.intp)
    return (values[:, None] >= interior[None, :]).sum(axis=1)


def locate_tiles(alphas: np.ndarray, betas: np.ndarray, grid: TileGrid) -> np.ndarray:
    rows = _decode_axis_many(np.asarray(alphas, dtype=np.float64), grid.row_boundaries)
    cols = _decode_axis_many(np.asarray(betas, dtype=np.float64), grid.col_boundaries)
    return rows * grid.cols + cols


# ---------------------------------------------------------------------------
# Tile dependency table
# ---------------------------------------------------------------------------

@dataclass
class TileDependencyTable:
    """Bit matrix: row r marks the input tiles output tile r reads.

    ``streams`` optionally keeps, per output tile, the raw input-tile id
    sequence of its neighbor reads in feature order.  The demand-driven
    baseline scheduler replays it; tables built synthetically leave it None.
    """

    n_out: int
    n_in: int
    bits: np.ndarray  # bool, (n_out, n_in)
    streams: list | None = field(default=None, repr=False)

    def row_mask(self, r: int) -> int:
        """Row as a python int bit vector (bit t set = depends on tile t)."""
        return sum(1 << t for t in np.flatnonzero(self.bits[r]))

    def row_masks(self) -> list[int]:
        return [self.row_mask(r) for r in range(self.n_out)]

    def to_text(self) -> str:
        lines = ["".join("1" if b else "0" for b in row) for row in self.bits]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TileDependencyTable":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or any(set(ln) - {"0", "1"} for ln in lines):
            raise ConfigError("dependency bitmap must be lines of 0/1 characters")
        widths = {len(ln) for ln in lines}
        if len(widths) != 1:
            raise ConfigError("dependency bitmap rows differ in length")
        bits = np.array([[ch == "1" for ch in ln] for ln in lines], dtype=bool)
        return cls(bits.shape[0], bits.shape[1], bits)


def _neighbor_tiles(coords: np.ndarray, grid_in: TileGrid):
    """Per sample and floor/ceil combo, the input tile of each neighbor read.

    Returns (n, 4) tile ids, combo order: (floor,floor), (floor,ceil),
    (ceil,floor), (ceil,ceil).
    """
    alpha, beta = coords[:, 0], coords[:, 1]
    r0 = np.floor(alpha)
    r1 = np.ceil(alpha)
    c0 = np.floor(beta)
    c1 = np.ceil(beta)
    tr0 = _decode_axis_many(r0, grid_in.row_boundaries)
    tr1 = _decode_axis_many(r1, grid_in.row_boundaries)
    tc0 = _decode_axis_many(c0, grid_in.col_boundaries)
    tc1 = _decode_axis_many(c1, grid_in.col_boundaries)
    cols = grid_in.cols
    return np.stack([tr0 * cols + tc0, tr0 * cols + tc1,
                     tr1 * cols + tc0, tr1 * cols + tc1], axis=1)


def _neighbor_pixels(coords: np.ndarray):
    alpha, beta = coords[:, 0], coords[:, 1]
    r0 = np.floor(alpha).astype(np.intp)
    r1 = np.ceil(alpha).astype(np.intp)
    c0 = np.floor(beta).astype(np.intp)
    c1 = np.ceil(beta).astype(np.intp)
    rows = np.stack([r0, r0, r1, r1], axis=1)
    cols = np.stack([c0, c1, c0, c1], axis=1)
    return rows, cols


def _sample_out_tiles(offs: OffsetField, grid_out: TileGrid) -> np.ndarray:
    kk = offs.kernel ** 2
    pos = np.arange(offs.out_h * offs.out_w, dtype=np.intp)
    out_r = (pos // offs.out_w).astype(np.float64)
    out_c = (pos % offs.out_w).astype(np.float64)
    per_pos = locate_tiles(out_r, out_c, grid_out)
    return np.repeat(per_pos, kk)


def build_tdt(offs: OffsetField, grid_in: TileGrid,
              grid_out: TileGrid) -> TileDependencyTable:
    """OR-accumulate the neighbor-read tiles of every sample into row bits."""
    if (grid_in.height, grid_in.width) != (offs.input_h, offs.input_w):
        raise ConfigError("input grid does not cover the offset field's input map")
    if (grid_out.height, grid_out.width) != (offs.out_h, offs.out_w):
        raise ConfigError("output grid does not cover the offset field's output map")
    coords = offs.sample_coords()
    in_tiles = _neighbor_tiles(coords, grid_in)          # (n, 4)
    out_tiles = _sample_out_tiles(offs, grid_out)        # (n,)

    bits = np.zeros((grid_out.n_tiles, grid_in.n_tiles), dtype=bool)
    bits[np.repeat(out_tiles, 4), in_tiles.ravel()] = True

    # group the flat read sequence by output tile, keeping feature order
    flat_out = np.repeat(out_tiles, 4)
    flat_in = in_tiles.ravel()
    order = np.argsort(flat_out, kind="stable")
    sorted_out = flat_out[order]
    sorted_in = flat_in[order]
    cuts = np.searchsorted(sorted_out, np.arange(grid_out.n_tiles + 1))
    streams = [sorted_in[cuts[t]:cuts[t + 1]].tolist()
               for t in range(grid_out.n_tiles)]
    return TileDependencyTable(grid_out.n_tiles, grid_in.n_tiles, bits, streams)


# ---------------------------------------------------------------------------
# Access distribution
# ---------------------------------------------------------------------------

@dataclass
class AccessHistogram:
    per_feature: np.ndarray  # (H, W) neighbor-read counts
    per_tile: np.ndarray     # (n_tiles,) counts aggregated over the grid

    @property
    def total(self) -> int:
        return int(self.per_feature.sum())

    def tile_cv(self) -> float:
        """Coefficient of variation of the per-tile counts (spread measure)."""
        mean = self.per_tile.mean()
        if mean == 0:
            return 0.0
        return float(self.per_tile.std() / mean)


def access_histogram(offs: OffsetField, height: int, width: int,
                     grid: TileGrid) -> AccessHistogram:
    if (height, width) != (offs.input_h, offs.input_w):
        raise ConfigError("histogram dims do not match the offset field's input")
    if (grid.height, grid.width) != (height, width):
        raise ConfigError("grid does not cover the feature map")
    coords = offs.sample_coords()
    rows, cols = _neighbor_pixels(coords)
    per_feature = np.zeros((height, width), dtype=np.int64)
    np.add.at(per_feature, (rows.ravel(), cols.ravel()), 1)
    tiles = _neighbor_tiles(coords, grid)
    per_tile = np.zeros(grid.n_tiles, dtype=np.int64)
    np.add.at(per_tile, tiles.ravel(), 1)
    return AccessHistogram(per_feature, per_tile)
