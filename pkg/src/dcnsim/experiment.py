"""Experiment configs, drivers for the ablation studies, and report output.

An experiment is fully described by a small flat config (benchmark, variant,
tile grid, buffer capacity, policy, fusion, seed, skew).  Identical configs
produce byte-identical reports except for the ``generated_at`` stamp; the
``DCNSIM_SEED`` environment variable overrides the configured seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .accel import DEFAULT_CONFIG, AcceleratorConfig, SimReport, run_network
from .benchmarks import gen_offsets, load_benchmark
from .dram import DramPowerModel, TrafficLedger, estimate_energy
from .errors import ConfigError
from .functional import VARIANT_PER_TAP, VARIANTS
from .scheduler import POLICIES, POLICY_TDT_ONLY, POLICY_TDT_SCHED

SEED_ENV_VAR = "DCNSIM_SEED"

# tile traffic reduction measured on the original hardware's all-deformable
# workloads; synthetic offsets reproduce the direction, not the exact figure
REFERENCE_SCHED_REDUCTION_PCT = 40.7

DEFAULT_SWEEP_TILE_PX = (2, 4, 8, 16, 0)  # 0 = one tile covering the map


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: str = "tiny-VGG19-3"
    variant: str = VARIANT_PER_TAP
    tile_rows: int = 5
    tile_cols: int = 5
    capacity_tiles: int | None = None  # None: derive from the input buffer
    policy: str = POLICY_TDT_SCHED
    fusion: bool = True
    seed: int = 0
    skew: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.tile_rows < 1 or self.tile_cols < 1:
            raise ConfigError("tile grid dims must be >= 1")
        if self.capacity_tiles is not None and self.capacity_tiles < 1:
            raise ConfigError("capacity_tiles must be >= 1 when given")
        if self.skew < 0:
            raise ConfigError("skew must be >= 0")


_CONFIG_FIELDS = ("benchmark", "variant", "tile_rows", "tile_cols",
                  "capacity_tiles", "policy", "fusion", "seed", "skew")


def config_to_toml(cfg: ExperimentConfig) -> str:
    lines = []
    for name in _CONFIG_FIELDS:
        value = getattr(cfg, name)
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = json.dumps(value)
        else:
            text = repr(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


def config_from_toml(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config file: {exc}") from exc
    unknown = set(raw) - set(_CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "skew" in raw:
        raw["skew"] = float(raw["skew"])
    return ExperimentConfig(**raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return config_from_toml(f.read())


def effective_seed(cfg: ExperimentConfig) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    return cfg.seed


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _report_meta(cfg: ExperimentConfig, seed: int, benchmark_name: str) -> dict:
    meta = asdict(cfg)
    meta["benchmark"] = benchmark_name
    meta["seed"] = seed
    meta["generated_at"] = _timestamp()
    return meta


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: SimReport
    artifacts: dict[str, dict[str, str]] = field(default_factory=dict)

    def report_json(self) -> str:
        return json.dumps(self.report.as_dict(), indent=2, sort_keys=True)


def run_experiment(cfg: ExperimentConfig,
                   accel: AcceleratorConfig = DEFAULT_CONFIG,
                   power: DramPowerModel | None = None,
                   tile_px: int | None = None,
                   include_artifacts: bool = True) -> ExperimentResult:
    """Run one config end to end: benchmark, offsets, simulation, report."""
    seed = effective_seed(cfg)
    net = load_benchmark(cfg.benchmark, cfg.variant)
    fields = gen_offsets(net, seed, cfg.skew)
    report, runs = run_network(
        net, accel, fusion=cfg.fusion, policy=cfg.policy,
        grid_rows=cfg.tile_rows, grid_cols=cfg.tile_cols,
        capacity_tiles=cfg.capacity_tiles, offsets=fields, power=power,
        tile_px=tile_px, keep_runs=True,
    )
    report.meta = _report_meta(cfg, seed, net.name)
    artifacts: dict[str, dict[str, str]] = {}
    if include_artifacts:
        for layer, run in zip(net.layers, runs):
            if run.schedule is not None:
                artifacts[layer.name] = {
                    "trace": run.schedule.trace_text(),
                    "tdt": run.tdt.to_text(),
                }
    return ExperimentResult(cfg, report, artifacts)


def _tile_read_bytes(report: SimReport) -> int:
    total = 0
    for layer in report.layers:
        if layer.schedule is not None:
            total += layer.schedule["loads"] * layer.schedule["tile_bytes"]
    return total


def ablate_scheduler(cfg: ExperimentConfig,
                     accel: AcceleratorConfig = DEFAULT_CONFIG,
                     power: DramPowerModel | None = None) -> dict:
    """All three policies on one offset realization, plus a load summary."""
    results = {}
    for policy in POLICIES:
        results[policy] = run_experiment(
            replace(cfg, policy=policy), accel, power, include_artifacts=False)
    loads = {p: results[p].report.total_tile_loads for p in POLICIES}
    base = loads[POLICY_TDT_ONLY]
    sched = loads[POLICY_TDT_SCHED]
    reduction = 100.0 * (base - sched) / base if base else 0.0
    return {
        "results": results,
        "summary": {
            "tile_loads": loads,
            "tile_read_bytes": {
                p: _tile_read_bytes(results[p].report) for p in POLICIES
            },
            "sched_vs_tdt_only_reduction_pct": reduction,
            "reference_reduction_pct": REFERENCE_SCHED_REDUCTION_PCT,
        },
    }


def ablate_fusion(cfg: ExperimentConfig,
                  accel: AcceleratorConfig = DEFAULT_CONFIG,
                  power: DramPowerModel | None = None) -> dict:
    """Fusion on/off on one offset realization."""
    results = {}
    for fused in (True, False):
        key = "fused" if fused else "unfused"
        results[key] = run_experiment(
            replace(cfg, fusion=fused), accel, power, include_artifacts=False)
    on = results["fused"].report
    off = results["unfused"].report

    def _intermediate(report: SimReport) -> int:
        return (report.ledger.read_bytes["intermediate"]
                + report.ledger.write_bytes["intermediate"])

    return {
        "results": results,
        "summary": {
            "intermediate_bytes": {"fused": _intermediate(on),
                                   "unfused": _intermediate(off)},
            "intermediate_bytes_saved": _intermediate(off) - _intermediate(on),
            "compute_cycles": {"fused": on.total_compute_cycles,
                               "unfused": off.total_compute_cycles},
            "total_cycles": {"fused": on.total_cycles,
                             "unfused": off.total_cycles},
            "energy_mj": {"fused": on.energy.total_mj,
                          "unfused": off.energy.total_mj},
        },
    }


def sweep_tile_size(cfg: ExperimentConfig,
                    sizes: tuple[int, ...] = DEFAULT_SWEEP_TILE_PX,
                    accel: AcceleratorConfig = DEFAULT_CONFIG,
                    power: DramPowerModel | None = None) -> dict:
    """Vary the tile pixel size; buffer capacity follows from the input buffer.

    Size 0 means a single tile spanning the whole map.
    """
    entries = []
    base_cfg = replace(cfg, capacity_tiles=None)
    for size in sizes:
        result = run_experiment(base_cfg, accel, power,
                                tile_px=size, include_artifacts=False)
        report = result.report
        entries.append({
            "tile_px": size,
            "tile_loads": report.total_tile_loads,
            "tile_read_bytes": _tile_read_bytes(report),
            "feature_read_bytes": report.ledger.read_bytes["features_in"],
            "dram_energy_mj": report.energy.total_mj,
            "total_cycles": report.total_cycles,
        })
    return {"entries": entries}


def energy_from_ledger(read_bytes: dict, write_bytes: dict, runtime_s: float,
                       bandwidth: float = DEFAULT_CONFIG.dram_bandwidth,
                       power: DramPowerModel | None = None) -> dict:
    """Standalone energy estimate for an externally supplied traffic ledger."""
    ledger = TrafficLedger()
    for cat, n in read_bytes.items():
        if cat not in ledger.read_bytes:
            raise ConfigError(f"unknown traffic category {cat!r}")
        ledger.read_bytes[cat] = int(n)
    for cat, n in write_bytes.items():
        if cat not in ledger.write_bytes:
            raise ConfigError(f"unknown traffic category {cat!r}")
        ledger.write_bytes[cat] = int(n)
    ledger.set_active_times(bandwidth, runtime_s)
    report = estimate_energy(ledger, power or DramPowerModel(), runtime_s)
    return {"ledger": ledger.as_dict(), "energy": report.as_dict()}
