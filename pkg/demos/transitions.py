"""Interband transitions at one avoided crossing, simulated and from Landau-Zener.

Run: python3 demos/transitions.py
"""

import math
import warnings

from superlattice import ForceSpec, LatticeParams
from superlattice.analysis import diabatic_slopes, lz_probability, measure_transition, \
    transition_width
from superlattice.bands import crossing

force = ForceSpec(0.05)
for A2 in (0.5, 1.0, 2.0):
    p = LatticeParams(2, A2, math.pi / 8)
    info = crossing(p, (1, 2))
    res = measure_transition(p, force, (1, 2), crossing_info=info)
    w = transition_width(p, force, (1, 2), crossing_info=info)
    line = f"A2={A2}: T12={res.T:.3f} at t={res.t_max:.1f}, gap {info.delta_min:.4f}"
    if w.defined:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            s = diabatic_slopes(p, info, epsilon=w.epsilon)
        line += (f", half-width {w.epsilon:.3f} k_r, "
                 f"LZ {lz_probability(info.delta_min, s.slope_diff, force):.3f}")
    print(line)
