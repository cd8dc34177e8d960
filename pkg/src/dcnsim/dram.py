"""DRAM traffic accounting and energy estimation.

Energy follows the memory-operation power table of the accelerator study
(activate / read / write / read-IO / write-ODT / background, in mW) in the
style of Micron's DDR power calculators: each component's power times the
time it is active, background power for the whole runtime.  Row-activation
granularity (2 KB rows) and the per-activation time are not part of the
published table; they are configurable with documented defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CATEGORIES = ("weights", "features_in", "features_out", "intermediate", "index")


@dataclass(frozen=True)
class DramPowerModel:
    act_mw: float = 63.7
    rd_mw: float = 52.1
    wr_mw: float = 52.1
    read_io_mw: float = 32.7
    write_odt_mw: float = 136.1
    bg_mw: float = 67.7
    row_bytes: int = 2048
    act_time_s: float = 50e-9  # one row activation (tRC-class latency)

    def __post_init__(self):
        for name in ("act_mw", "rd_mw", "wr_mw", "read_io_mw",
                     "write_odt_mw", "bg_mw"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _zero_categories() -> dict[str, int]:
    return {c: 0 for c in CATEGORIES}


@dataclass
class TrafficLedger:
    """Byte counts per traffic category plus the active transfer times."""

    read_bytes: dict[str, int] = field(default_factory=_zero_categories)
    write_bytes: dict[str, int] = field(default_factory=_zero_categories)
    active_read_s: float = 0.0
    active_write_s: float = 0.0
    total_s: float = 0.0

    @property
    def total_read(self) -> int:
        return sum(self.read_bytes.values())

    @property
    def total_write(self) -> int:
        return sum(self.write_bytes.values())

    @property
    def total_bytes(self) -> int:
        return self.total_read + self.total_write

    def add(self, other: "TrafficLedger") -> None:
        for c in CATEGORIES:
            self.read_bytes[c] += other.read_bytes.get(c, 0)
            self.write_bytes[c] += other.write_bytes.get(c, 0)
        self.active_read_s += other.active_read_s
        self.active_write_s += other.active_write_s
        self.total_s += other.total_s

    def set_active_times(self, bandwidth_bytes_per_s: float,
                         total_s: float) -> None:
        self.active_read_s = self.total_read / bandwidth_bytes_per_s
        self.active_write_s = self.total_write / bandwidth_bytes_per_s
        self.total_s = total_s

    def as_dict(self) -> dict:
        return {
            "read_bytes": dict(self.read_bytes),
            "write_bytes": dict(self.write_bytes),
            "total_read_bytes": self.total_read,
            "total_write_bytes": self.total_write,
            "active_read_s": self.active_read_s,
            "active_write_s": self.active_write_s,
            "total_s": self.total_s,
        }


@dataclass(frozen=True)
class LayerIo:
    """Static per-layer transfer sizes feeding the ledger (bytes)."""

    weights_bytes: int = 0
    conv_input_bytes: int = 0
    output_bytes: int = 0
    deformed_bytes: int = 0     # size of the gathered feature tensor
    index_spill_bytes: int = 0  # index traffic beyond the on-chip index buffer


def tally_traffic(schedule, tile_bytes: int, io: LayerIo,
                  fusion: bool) -> TrafficLedger:
    """Per-layer ledger: tile loads drive feature reads, the rest is static.

    ``schedule`` may be None for a layer with no gather stage.  Fusion keeps
    the gathered features on chip, so the intermediate category vanishes;
    otherwise the full deformed tensor is written out and read back once.
    """
    ledger = TrafficLedger()
    loads = 0 if schedule is None else schedule.loads
    ledger.read_bytes["features_in"] = loads * tile_bytes + io.conv_input_bytes
    ledger.read_bytes["weights"] = io.weights_bytes
    ledger.write_bytes["features_out"] = io.output_bytes
    if not fusion and io.deformed_bytes:
        ledger.write_bytes["intermediate"] = io.deformed_bytes
        ledger.read_bytes["intermediate"] = io.deformed_bytes
    if io.index_spill_bytes:
        ledger.write_bytes["index"] = io.index_spill_bytes
        ledger.read_bytes["index"] = io.index_spill_bytes
    return ledger


@dataclass(frozen=True)
class EnergyReport:
    read_mj: float
    write_mj: float
    activate_mj: float
    background_mj: float

    @property
    def total_mj(self) -> float:
        return self.read_mj + self.write_mj + self.activate_mj + self.background_mj

    def as_dict(self) -> dict:
        return {
            "read_mj": self.read_mj,
            "write_mj": self.write_mj,
            "activate_mj": self.activate_mj,
            "background_mj": self.background_mj,
            "total_mj": self.total_mj,
        }


def estimate_energy(ledger: TrafficLedger, power: DramPowerModel,
                    runtime_s: float) -> EnergyReport:
    """mW x s = mJ per component; background covers the whole runtime."""
    if runtime_s < 0 or ledger.active_read_s < 0 or ledger.active_write_s < 0:
        raise ValueError("times must be non-negative")
    if runtime_s + 1e-12 < max(ledger.active_read_s, ledger.active_write_s):
        raise ValueError("runtime shorter than active transfer time")
    activation_s = (ledger.total_bytes / power.row_bytes) * power.act_time_s
    return EnergyReport(
        read_mj=(power.rd_mw + power.read_io_mw) * ledger.active_read_s,
        write_mj=(power.wr_mw + power.write_odt_mw) * ledger.active_write_s,
        activate_mj=power.act_mw * activation_s,
        background_mj=power.bg_mw * runtime_s,
    )
