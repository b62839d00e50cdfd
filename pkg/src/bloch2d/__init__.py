"""Directed transport from two-dimensional Bloch oscillations.

Single-band tight-binding models on the integer lattice, hoppings extracted
from the triangular optical-lattice band, closed-form semiclassical drift and
exact wave-packet evolution on finite grids.
"""

from bloch2d.lattice import (
    ForceSpec,
    HoppingSet,
    HoppingReport,
    TRIANGULAR_SHELLS,
    canonicalize_k,
    dispersion_energy,
    group_velocity,
    read_hopping_table,
    triangular_hoppings,
    validate_hopping_set,
    write_hopping_table,
)
from bloch2d.semiclassics import (
    DriftResult,
    IncommensurateForceError,
    SemiclassicalTrajectory,
    bloch_period,
    closed_form_displacement,
    drift_vector,
    rationalize_force,
    semiclassical_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "DriftResult",
    "ForceSpec",
    "HoppingReport",
    "HoppingSet",
    "IncommensurateForceError",
    "SemiclassicalTrajectory",
    "TRIANGULAR_SHELLS",
    "bloch_period",
    "canonicalize_k",
    "closed_form_displacement",
    "dispersion_energy",
    "drift_vector",
    "group_velocity",
    "rationalize_force",
    "read_hopping_table",
    "semiclassical_trajectory",
    "triangular_hoppings",
    "validate_hopping_set",
    "write_hopping_table",
]
