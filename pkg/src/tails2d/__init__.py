"""Late-time tails of waves on stationary 2+1 backgrounds, on hyperboloidal slices."""

from .background import make_background, mink_fields
from .diagnostics import EnergySpec, derive_slice, energies, energy_series
from .evolution import EvolutionConfig, InitialData, SourceSpec, data_presets, evolve
from .foliation import make_foliation
from .grid import make_grid
from .identities import check_identities
from .renorm import build_time_integral, compute_L_frak, verify_time_integral

__version__ = "0.1.0"

__all__ = [
    "EnergySpec",
    "EvolutionConfig",
    "InitialData",
    "SourceSpec",
    "build_time_integral",
    "check_identities",
    "compute_L_frak",
    "data_presets",
    "derive_slice",
    "energies",
    "energy_series",
    "evolve",
    "make_background",
    "make_foliation",
    "make_grid",
    "mink_fields",
    "verify_time_integral",
]
