"""Analytical model of the accelerator datapath.

Structure modeled here:

* a 2-D PE array (default 16x32).  For convolutions it behaves as a plain
  MAC array; for the gather stage the PEs are grouped into clusters of four,
  each cluster producing one interpolated value per cycle as a 4-element dot
  product, after a short address/coefficient pipeline fill.
* the input feature buffer split into four banks by (row, col) parity, so
  the four interpolation neighbors of any sample live in distinct banks and
  can be fetched together.  Bank words are channel-packed: one word holds one
  spatial position for up to ``pe_count / 4`` channels, and maps with more
  channels use ``ceil(C / (pe_count / 4))`` consecutive words per position.
* DRAM transfers at a flat configurable bandwidth, overlapped with compute
  tile by tile (the slower of the two sides sets the pace).

Cycle numbers are first-order throughput bounds, not a cycle-accurate
simulation; the interesting dynamics live in the tile dependency table and
the scheduler, which this module drives per deformable layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dram import (DramPowerModel, EnergyReport, LayerIo, TrafficLedger,
                   estimate_energy, tally_traffic)
from .errors import ConfigError
from .functional import OffsetField, offset_channels
from .scheduler import ScheduleResult, run_schedule
from .tensor import Tensor3D
from .tiling import TileDependencyTable, TileGrid, build_tdt, build_tile_grid


@dataclass(frozen=True)
class AcceleratorConfig:
    pe_rows: int = 16
    pe_cols: int = 32
    clock_hz: float = 8.0e8
    in_buf_bytes: int = 128 * 1024
    out_buf_bytes: int = 256 * 1024
    weight_buf_bytes: int = 256 * 1024
    index_buf_bytes: int = 32 * 1024
    inst_buf_bytes: int = 64 * 1024
    bytes_per_element: int = 1
    index_bytes_per_coord: int = 2
    dram_bandwidth: float = 4e9  # bytes per second
    bli_pipeline_fill: int = 4   # address converter + coefficient block depth

    def __post_init__(self):
        if self.pe_count % 4:
            raise ConfigError("PE count must be divisible by the cluster size 4")
        for name in ("in_buf_bytes", "out_buf_bytes", "weight_buf_bytes",
                     "index_buf_bytes", "inst_buf_bytes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def pe_count(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def clusters(self) -> int:
        return self.pe_count // 4

    @property
    def lanes(self) -> int:
        """Channels carried by one bank word (one per PE of a cluster row)."""
        return self.pe_count // 4

    @property
    def conv_fill_drain(self) -> int:
        return self.pe_rows + self.pe_cols

    def transfer_cycles(self, n_bytes: int) -> int:
        if n_bytes <= 0:
            return 0
        per_cycle = self.dram_bandwidth / self.clock_hz
        return math.ceil(n_bytes / per_cycle)

    def as_dict(self) -> dict:
        return {
            "pe_rows": self.pe_rows, "pe_cols": self.pe_cols,
            "clock_hz": self.clock_hz,
            "in_buf_bytes": self.in_buf_bytes,
            "out_buf_bytes": self.out_buf_bytes,
            "weight_buf_bytes": self.weight_buf_bytes,
            "index_buf_bytes": self.index_buf_bytes,
            "inst_buf_bytes": self.inst_buf_bytes,
            "bytes_per_element": self.bytes_per_element,
            "index_bytes_per_coord": self.index_bytes_per_coord,
            "dram_bandwidth": self.dram_bandwidth,
            "bli_pipeline_fill": self.bli_pipeline_fill,
        }


DEFAULT_CONFIG = AcceleratorConfig()


# ---------------------------------------------------------------------------
# Parity-banked input buffer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BankAddress:
    """One neighbor's buffer slot: bank selected by coordinate parity,
    word offset relative to the resident base ``t0``."""

    bank: tuple[int, int]  # (row parity, col parity)
    offset: int
    t0: int
    role: str  # which floor/ceil combination this address serves


def padded_height(height: int) -> int:
    """Banked maps need an even row count; odd maps get one zero row."""
    return height + (height & 1)


def address_convert(alpha: float, beta: float, height: int, channels: int,
                    pe_count: int, t0: int = 0) -> dict[str, BankAddress]:
    """Buffer addresses of the four interpolation neighbors.

    Parity packing halves each coordinate inside its bank; the halved column
    index is scaled by half the map height, and the whole spatial offset by
    the number of channel groups per position.
    """
    if height % 2:
        raise ConfigError("banked addressing needs an even height; pad the map")
    lanes = pe_count // 4
    groups = math.ceil(channels / lanes)
    j = height // 2
    fa, ca = math.floor(alpha), math.ceil(alpha)
    fb, cb = math.floor(beta), math.ceil(beta)

    def make(role, a, b):
        off = ((b // 2) * j + (a // 2)) * groups - t0
        return BankAddress((a % 2, b % 2), off, t0, role)

    return {
        "lb": make("lb", fa, fb),
        "rb": make("rb", ca, fb),
        "lt": make("lt", fa, cb),
        "rt": make("rt", ca, cb),
    }


class BankedTensor:
    """Four parity banks of channel-packed words, plus the inverse map."""

    def __init__(self, x: Tensor3D, pe_count: int = DEFAULT_CONFIG.pe_count):
        c, h, w = x.channels, x.height, x.width
        self.channels, self.height, self.width = c, h, w
        self.pe_count = pe_count
        self.height_padded = padded_height(h)
        self.lanes = pe_count // 4
        self.groups = math.ceil(c / self.lanes)
        j = self.height_padded // 2
        slots = math.ceil(w / 2) * j
        words = slots * self.groups
        self.banks = {
            (pr, pc): np.zeros((words, self.lanes)) for pr in (0, 1) for pc in (0, 1)
        }
        for (pr, pc), arr in self.banks.items():
            sub = x.data[:, pr::2, pc::2]  # (C, hb, wb)
            if sub.size == 0:
                continue
            hb, wb = sub.shape[1], sub.shape[2]
            r_half, s_half = np.meshgrid(np.arange(hb), np.arange(wb), indexing="ij")
            spatial = s_half * j + r_half
            for g in range(self.groups):
                chs = sub[g * self.lanes:(g + 1) * self.lanes]
                word = spatial * self.groups + g
                arr[word.ravel(), :chs.shape[0]] = chs.reshape(chs.shape[0], -1).T

    def fetch(self, addr: BankAddress, channel: int) -> float:
        group, lane = divmod(channel, self.lanes)
        word = addr.offset + addr.t0 + group
        return float(self.banks[addr.bank][word, lane])

    def lookup(self, channel: int, row: int, col: int) -> float:
        """Inverse of the placement: read one feature back by coordinates."""
        addr = address_convert(row, col, self.height_padded, self.channels,
                               self.pe_count)["lb"]
        return self.fetch(addr, channel)


def partition_parity_banks(x: Tensor3D,
                           pe_count: int = DEFAULT_CONFIG.pe_count) -> BankedTensor:
    return BankedTensor(x, pe_count)


# ---------------------------------------------------------------------------
# Stage timing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageTiming:
    stage: str
    compute_cycles: int
    buffer_read_cycles: int = 0
    dram_cycles: int = 0

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "compute_cycles": self.compute_cycles,
            "buffer_read_cycles": self.buffer_read_cycles,
            "dram_cycles": self.dram_cycles,
        }


def bli_stage_cycles(n_deformed: int, channels: int,
                     cfg: AcceleratorConfig = DEFAULT_CONFIG) -> StageTiming:
    """Gather throughput: one value per cluster per cycle after the fill."""
    work = n_deformed * channels
    compute = math.ceil(work / cfg.clusters) + cfg.bli_pipeline_fill
    reads = n_deformed * math.ceil(channels / cfg.lanes)
    return StageTiming("bli", compute, buffer_read_cycles=reads)


def conv_stage_cycles(layer, out_h: int, out_w: int,
                      cfg: AcceleratorConfig = DEFAULT_CONFIG) -> StageTiming:
    """MAC-bound conv estimate.  ``layer`` needs channel/kernel attributes only."""
    macs = (layer.out_channels * out_h * out_w
            * layer.in_channels * layer.kernel ** 2)
    compute = math.ceil(macs / cfg.pe_count) + cfg.conv_fill_drain
    return StageTiming("conv", compute,
                       buffer_read_cycles=math.ceil(macs / cfg.pe_count))


# ---------------------------------------------------------------------------
# Whole-network simulation
# ---------------------------------------------------------------------------

@dataclass
class LayerReport:
    name: str
    kind: str
    variant: str | None
    compute_cycles: int
    stall_cycles: int
    total_cycles: int
    stages: dict
    ledger: TrafficLedger
    schedule: dict | None = None

    def as_dict(self) -> dict:
        d = {
            "name": self.name, "kind": self.kind, "variant": self.variant,
            "compute_cycles": self.compute_cycles,
            "stall_cycles": self.stall_cycles,
            "total_cycles": self.total_cycles,
            "stages": self.stages,
            "dram": self.ledger.as_dict(),
        }
        if self.schedule is not None:
            d["schedule"] = self.schedule
        return d


@dataclass
class SimReport:
    accel: dict
    layers: list[LayerReport]
    total_compute_cycles: int
    total_stall_cycles: int
    total_cycles: int
    runtime_s: float
    ledger: TrafficLedger
    energy: EnergyReport
    total_tile_loads: int
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "meta": self.meta,
            "accelerator": self.accel,
            "layers": [layer.as_dict() for layer in self.layers],
            "totals": {
                "compute_cycles": self.total_compute_cycles,
                "stall_cycles": self.total_stall_cycles,
                "cycles": self.total_cycles,
                "runtime_s": self.runtime_s,
                "tile_loads": self.total_tile_loads,
                "dram": self.ledger.as_dict(),
            },
            "energy": self.energy.as_dict(),
        }


@dataclass
class LayerRun:
    """Everything run_network derived for one layer (reports plus artifacts)."""

    report: LayerReport
    tdt: TileDependencyTable | None = None
    schedule: ScheduleResult | None = None
    grid_in: TileGrid | None = None
    grid_out: TileGrid | None = None


def _effective_grid(rows: int, cols: int, h: int, w: int) -> tuple[int, int]:
    # a grid axis can never have more tiles than pixels
    return min(rows, h), min(cols, w)


def _simulate_conv_layer(layer, cfg: AcceleratorConfig) -> LayerRun:
    out_h, out_w = layer.out_dims()
    stage = conv_stage_cycles(layer, out_h, out_w, cfg)
    bpe = cfg.bytes_per_element
    io = LayerIo(
        weights_bytes=layer.out_channels * layer.in_channels * layer.kernel ** 2 * bpe,
        conv_input_bytes=layer.in_channels * layer.in_h * layer.in_w * bpe,
        output_bytes=layer.out_channels * out_h * out_w * bpe,
    )
    ledger = tally_traffic(None, 0, io, fusion=True)
    dram_cycles = cfg.transfer_cycles(ledger.total_bytes)
    total = max(stage.compute_cycles, dram_cycles)
    report = LayerReport(
        name=layer.name, kind="conv", variant=None,
        compute_cycles=stage.compute_cycles,
        stall_cycles=total - stage.compute_cycles,
        total_cycles=total,
        stages={"conv": replace(stage, dram_cycles=dram_cycles).as_dict()},
        ledger=ledger,
    )
    return LayerRun(report)


def _simulate_deformable_layer(layer, offs: OffsetField, cfg: AcceleratorConfig,
                               fusion: bool, policy: str,
                               grid_rows: int, grid_cols: int,
                               capacity_tiles: int | None) -> LayerRun:
    out_h, out_w = layer.out_dims()
    if (offs.out_h, offs.out_w) != (out_h, out_w) or \
            (offs.input_h, offs.input_w) != (layer.in_h, layer.in_w):
        raise ConfigError(f"offset field does not match layer {layer.name} dims")
    k = layer.kernel
    c = layer.in_channels
    bpe = cfg.bytes_per_element

    gr, gc = _effective_grid(grid_rows, grid_cols, layer.in_h, layer.in_w)
    grid_in = build_tile_grid(layer.in_h, layer.in_w, gr, gc)
    gr_o, gc_o = _effective_grid(grid_rows, grid_cols, out_h, out_w)
    grid_out = build_tile_grid(out_h, out_w, gr_o, gc_o)
    tdt = build_tdt(offs, grid_in, grid_out)

    tr_px, tc_px = grid_in.nominal_tile_px()
    tile_bytes = tr_px * tc_px * c * bpe
    capacity = capacity_tiles if capacity_tiles is not None \
        else max(1, cfg.in_buf_bytes // tile_bytes)
    schedule = run_schedule(tdt, capacity, policy)

    # static sizes
    l_off = offset_channels(layer.variant, k)
    weights_bytes = (l_off + layer.out_channels) * c * k ** 2 * bpe
    conv1_input_bytes = c * layer.in_h * layer.in_w * bpe
    output_bytes = layer.out_channels * out_h * out_w * bpe
    deformed_bytes = c * out_h * out_w * k ** 2 * bpe
    index_bytes = offs.coords.size * cfg.index_bytes_per_coord
    index_spill = max(0, index_bytes - cfg.index_buf_bytes)

    io = LayerIo(weights_bytes, conv1_input_bytes, output_bytes,
                 deformed_bytes, index_spill)
    ledger = tally_traffic(schedule, tile_bytes, io, fusion)

    # stage 1: offset conv, overlapped with the up-front transfers
    offset_branch = replace(layer, out_channels=l_off)
    conv1 = conv_stage_cycles(offset_branch, out_h, out_w, cfg)
    d1_bytes = weights_bytes + conv1_input_bytes + 2 * index_spill
    d1_cycles = cfg.transfer_cycles(d1_bytes)
    t1 = max(conv1.compute_cycles, d1_cycles)

    # stages 2+3, tile by tile following the schedule
    bli_cycles = 0
    conv2_cycles = 0
    steps_time = 0
    unfused_reads_time = 0
    for step in schedule.trace:
        f_t = grid_out.tile_area(step.out_tile)
        samples_t = f_t * k ** 2
        bli_t = math.ceil(samples_t * c / cfg.clusters)
        conv2_t = math.ceil(samples_t * c * layer.out_channels / cfg.pe_count)
        bli_cycles += bli_t
        conv2_cycles += conv2_t
        load_bytes = len(step.loads) * tile_bytes
        out_t = f_t * layer.out_channels * bpe
        gathered_t = samples_t * c * bpe
        if fusion:
            steps_time += max(bli_t + conv2_t,
                              cfg.transfer_cycles(load_bytes + out_t))
        else:
            steps_time += max(bli_t, cfg.transfer_cycles(load_bytes + gathered_t))
            unfused_reads_time += max(conv2_t,
                                      cfg.transfer_cycles(gathered_t + out_t))

    fills = cfg.bli_pipeline_fill + cfg.conv_fill_drain
    compute = conv1.compute_cycles + bli_cycles + conv2_cycles + fills
    total = t1 + steps_time + unfused_reads_time + fills

    n_deformed = out_h * out_w * k ** 2
    stages = {
        "conv_offsets": replace(conv1, dram_cycles=d1_cycles).as_dict(),
        "gather": StageTiming(
            "bli", bli_cycles + cfg.bli_pipeline_fill,
            buffer_read_cycles=n_deformed * math.ceil(c / cfg.lanes),
        ).as_dict(),
        "conv_main": StageTiming(
            "conv", conv2_cycles + cfg.conv_fill_drain,
            buffer_read_cycles=conv2_cycles,
        ).as_dict(),
    }
    report = LayerReport(
        name=layer.name, kind="deformable", variant=layer.variant,
        compute_cycles=compute, stall_cycles=total - compute, total_cycles=total,
        stages=stages, ledger=ledger,
        schedule={
            "policy": policy, "capacity_tiles": capacity,
            "tile_bytes": tile_bytes,
            "n_out_tiles": tdt.n_out, "n_in_tiles": tdt.n_in,
            "loads": schedule.loads, "reuses": schedule.reuses,
        },
    )
    return LayerRun(report, tdt, schedule, grid_in, grid_out)


def run_network(net, cfg: AcceleratorConfig = DEFAULT_CONFIG, *,
                fusion: bool = True, policy: str = "tdt_sched",
                grid_rows: int = 5, grid_cols: int = 5,
                capacity_tiles: int | None = None,
                offsets: list[OffsetField] | None = None,
                power: DramPowerModel | None = None,
                tile_px: int | None = None,
                keep_runs: bool = False) -> SimReport | tuple:
    """Simulate every layer of ``net`` and aggregate cycles, traffic, energy.

    ``offsets`` supplies one field per deformable layer, in network order.
    ``tile_px`` switches the grid from fixed tile counts to a fixed tile
    pixel size per layer (0 = one tile covering the map).  With
    ``keep_runs`` the per-layer artifacts (dependency tables, schedules) are
    returned alongside the report.
    """
    offsets = list(offsets or [])
    n_deformable = sum(1 for layer in net.layers if layer.kind == "deformable")
    if len(offsets) != n_deformable:
        raise ConfigError(
            f"network has {n_deformable} deformable layers, got "
            f"{len(offsets)} offset fields"
        )
    runs: list[LayerRun] = []
    it = iter(offsets)
    for layer in net.layers:
        if layer.kind == "deformable":
            if tile_px is None:
                gr, gc = grid_rows, grid_cols
            elif tile_px <= 0:
                gr = gc = 1
            else:
                gr = math.ceil(layer.in_h / tile_px)
                gc = math.ceil(layer.in_w / tile_px)
            runs.append(_simulate_deformable_layer(
                layer, next(it), cfg, fusion, policy, gr, gc, capacity_tiles))
        else:
            runs.append(_simulate_conv_layer(layer, cfg))

    total_ledger = TrafficLedger()
    compute = stall = total = loads = 0
    for run in runs:
        rep = run.report
        compute += rep.compute_cycles
        stall += rep.stall_cycles
        total += rep.total_cycles
        total_ledger.add(rep.ledger)
        if run.schedule is not None:
            loads += run.schedule.loads
    runtime_s = total / cfg.clock_hz
    total_ledger.set_active_times(cfg.dram_bandwidth, runtime_s)
    for run in runs:
        run.report.ledger.set_active_times(cfg.dram_bandwidth,
                                           run.report.total_cycles / cfg.clock_hz)
    energy = estimate_energy(total_ledger, power or DramPowerModel(), runtime_s)
    report = SimReport(
        accel=cfg.as_dict(), layers=[r.report for r in runs],
        total_compute_cycles=compute, total_stall_cycles=stall,
        total_cycles=total, runtime_s=runtime_s, ledger=total_ledger,
        energy=energy, total_tile_loads=loads,
    )
    return (report, runs) if keep_runs else report
