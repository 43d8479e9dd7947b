"""Online power and rate allocation for a wireless-powered multiple-access fading channel."""

__version__ = "0.1.0"

from ehmac.model import (
    BatteryState,
    ChannelSample,
    Mode,
    Multipliers,
    RatePoint,
    SlotDecision,
    SystemParams,
    Weights,
    battery_step,
    clip_transmit_power,
    harvested_power,
    slot_rates,
    weighted_sum_rate,
)
from ehmac.fading import Distribution, FadingConfig, sample_slot
from ehmac.allocation import ActivitySet, bs_power, ehu_powers, fdt_decide, tdt_schedule
from ehmac.dual import CalibrationReport, calibrate, constraint_residuals
from ehmac.simulator import EnsembleResult, TrajectoryResult, run_ensemble, run_trajectory
from ehmac.oracle import (
    BaselineRegion,
    GridSpec,
    baseline_mac_region,
    exhaustive_region_tiny,
    grid_lagrangian_max,
    max_grid_gap,
)
from ehmac.sweep import RegionResult, SweepSpec, compare_to_baseline, run_sweep

__all__ = [
    "BatteryState",
    "ChannelSample",
    "Mode",
    "Multipliers",
    "RatePoint",
    "SlotDecision",
    "SystemParams",
    "Weights",
    "battery_step",
    "clip_transmit_power",
    "harvested_power",
    "slot_rates",
    "weighted_sum_rate",
    "Distribution",
    "FadingConfig",
    "sample_slot",
    "ActivitySet",
    "bs_power",
    "ehu_powers",
    "fdt_decide",
    "tdt_schedule",
    "CalibrationReport",
    "calibrate",
    "constraint_residuals",
    "EnsembleResult",
    "TrajectoryResult",
    "run_ensemble",
    "run_trajectory",
    "BaselineRegion",
    "GridSpec",
    "baseline_mac_region",
    "exhaustive_region_tiny",
    "grid_lagrangian_max",
    "max_grid_gap",
    "RegionResult",
    "SweepSpec",
    "compare_to_baseline",
    "run_sweep",
]
