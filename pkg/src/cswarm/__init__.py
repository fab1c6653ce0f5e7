"""Density control for agent swarms on periodic domains.

A continuum feedback law shapes the swarm's density toward a target
profile; agents follow the sampled velocity command plus pairwise
interactions.  Differential-drive robots can stand in for some agents,
either in process or over a line-based TCP link, and a spectral
continuum integrator provides the convergence oracle.
"""

from .config import (
    ConfigError,
    PRESETS,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    preset_config,
    save_config,
)
from .control import ControlFields, ControlGains, control_step, velocity_field
from .density import (
    KDEParams,
    TargetProgram,
    VonMisesMode,
    estimate_density,
    target_density,
)
from .domain import Grid, ScalarField, VectorField, integrate, wrap_point
from .harness import TrialResult, export_field, import_field, run_oracle, run_scenario
from .kernels import KernelSpec, kernel_field
from .metrics import TrialTrace, kl_divergence, l2_error, percent_error
from .swarm import SwarmState, closed_loop_frame, square_lattice

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ControlFields",
    "ControlGains",
    "Grid",
    "KDEParams",
    "KernelSpec",
    "PRESETS",
    "ScalarField",
    "ScenarioConfig",
    "SwarmState",
    "TargetProgram",
    "TrialResult",
    "TrialTrace",
    "VectorField",
    "VonMisesMode",
    "closed_loop_frame",
    "config_from_dict",
    "config_to_dict",
    "control_step",
    "estimate_density",
    "export_field",
    "import_field",
    "integrate",
    "kernel_field",
    "kl_divergence",
    "l2_error",
    "load_config",
    "percent_error",
    "preset_config",
    "run_oracle",
    "run_scenario",
    "save_config",
    "square_lattice",
    "target_density",
    "velocity_field",
    "wrap_point",
    "__version__",
]
