"""Desk-scale simulator for a deformable-convolution accelerator.

Functional reference (conv -> bilinear gather -> conv, float and 8-bit
fixed-point), tile dependency tracking, bit-vector tile scheduling,
parity-banked buffer addressing, and a DRAM traffic/energy model, driven
by benchmark experiment configs.
"""

from .accel import (AcceleratorConfig, BankAddress, SimReport, StageTiming,
                    address_convert, bli_stage_cycles, conv_stage_cycles,
                    partition_parity_banks, run_network)
from .benchmarks import (LayerDef, NetworkSpec, benchmark_names, gen_offsets,
                         load_benchmark)
from .dram import (DramPowerModel, EnergyReport, LayerIo, TrafficLedger,
                   estimate_energy, tally_traffic)
from .errors import ConfigError, InfeasibleScheduleError
from .experiment import (ExperimentConfig, ExperimentResult, ablate_fusion,
                         ablate_scheduler, config_from_toml, config_to_toml,
                         run_experiment, sweep_tile_size)
from .functional import (BliWeights, ConvLayerSpec, OffsetField, bli_sample,
                         bli_weights, compute_offsets, deform_features,
                         deformable_conv, quantize_layer, standard_conv)
from .scheduler import (POLICIES, ScheduleResult, SchedulerState,
                        next_output_tile, order_input_tiles, run_schedule)
from .tensor import Tensor3D, quantize_tensor, read_dcnt, write_dcnt
from .tiling import (AccessHistogram, TileDependencyTable, TileGrid,
                     access_histogram, build_tdt, build_tile_grid, locate_tile)

__version__ = "0.1.0"
