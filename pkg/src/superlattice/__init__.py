"""Matter waves in a period-4 optical superlattice under a constant force.

Band structure, band-population dynamics, transition analysis and
parameter-switch control. Energies in E_R, lengths in d, quasimomentum
in k_r = pi/(4d), time in hbar/E_R.
"""

__version__ = "0.1.0"

from .units import ForceSpec, LatticeParams, bloch_period, potential_value, to_si, from_si
from .bands import (BandSolverError, DegenerateBandsError, band_energies, band_scan, crossing,
                    eigensystem, gap_profile)
from .dynamics import (InitialDistribution, PropagationError, init_state, propagate, reproject,
                       wavepacket_density, center_of_mass)
from .analysis import (measure_transition, lz_probability, diabatic_slopes, transition_width,
                       widths_overlap, transition_sweep, flatness)
from .control import Schedule, Step, run_schedule, PRESETS

__all__ = [
    "ForceSpec", "LatticeParams", "bloch_period", "potential_value", "to_si", "from_si",
    "BandSolverError", "DegenerateBandsError", "band_energies", "band_scan", "crossing",
    "eigensystem", "gap_profile",
    "InitialDistribution", "PropagationError", "init_state", "propagate", "reproject",
    "wavepacket_density", "center_of_mass",
    "measure_transition", "lz_probability", "diabatic_slopes", "transition_width",
    "widths_overlap", "transition_sweep", "flatness",
    "Schedule", "Step", "run_schedule", "PRESETS",
]
