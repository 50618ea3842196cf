"""Lattice laboratory for GRW matter-density dynamics.

N particles on a periodic 1-D box evolve under split-step Schrodinger
dynamics interleaved with GRW localization hits.  The package extracts the
matter-density field, measures tails, branch weights, distortion and
symmetry violation, compares with Bohmian guidance, and exhibits the
GRW-to-CSL continuum limit through ensemble decoherence.
"""

__version__ = "0.1.0"

from .config_space import (  # noqa: E402
    GridSpec,
    WaveFunction,
    gaussian_packet,
    marginal_density,
    superpose,
    swap_labels,
    symmetrize,
)
from .grw import CollapseEvent, GrwParams, apply_collapse, collapse_center_density, run_grw  # noqa: E402
from .matter import MatterDensityField, RegionPartition, matter_density, region_mass  # noqa: E402
from .unitary import HamiltonianSpec, evolve, step_unitary  # noqa: E402

__all__ = [
    "GridSpec",
    "WaveFunction",
    "gaussian_packet",
    "marginal_density",
    "superpose",
    "swap_labels",
    "symmetrize",
    "HamiltonianSpec",
    "evolve",
    "step_unitary",
    "GrwParams",
    "CollapseEvent",
    "apply_collapse",
    "collapse_center_density",
    "run_grw",
    "MatterDensityField",
    "RegionPartition",
    "matter_density",
    "region_mass",
]
