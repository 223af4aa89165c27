"""Unit conventions, lattice parameters and the Fourier table of the potential.

Everything in the package is dimensionless:

* energies in the single-lattice recoil energy ``E_R = hbar^2 pi^2 / (2 m d^2)``
* lengths in ``d = lambda / 2``; the superlattice period is ``4 d``
* quasimomentum ``kappa`` in ``k_r = pi / (4 d)``, so the Brillouin zone is
  ``[-1, 1)`` and the reciprocal vector is ``2``
* time in ``hbar / E_R``
* the force magnitude ``f`` is the quasimomentum sweep rate,
  ``d kappa / dt = f``. Equivalently ``F = f * E_R * k_r``.

The last convention fixes the Bloch period at ``2 / f``. It is the scale on
which the published transition probabilities and scenario populations are
reproduced (see README, "Force units").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.constants as const

#: quasimomentum sweep rate per unit of dimensionless force
SWEEP_PER_FORCE = 1.0

#: mass of a 87Rb atom in kg
RB87_MASS = 86.909180527 * const.atomic_mass


@dataclass(frozen=True)
class UnitSystem:
    """Marker for the dimensionless convention used throughout the package."""

    energy: str = "E_R"
    length: str = "d"
    time: str = "hbar/E_R"
    quasimomentum: str = "k_r = pi/(4d)"
    force: str = "E_R*k_r (sweep rate d kappa/dt)"
    zone: tuple[float, float] = (-1.0, 1.0)
    reciprocal_vector: float = 2.0


UNITS = UnitSystem()


@dataclass(frozen=True)
class LatticeParams:
    """Superlattice depths ``A1``, ``A2`` (E_R) and relative phase ``phi`` (rad).

    The potential is ``-A1 cos^2(pi x) - A2 cos^2(5 pi x / 4 + phi)``.
    """

    A1: float
    A2: float
    phi: float = 0.0

    def __post_init__(self):
        for name in ("A1", "A2", "phi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.A1 < 0 or self.A2 < 0:
            raise ValueError(f"depths must be non-negative, got A1={self.A1}, A2={self.A2}")

    def canonical(self) -> LatticeParams:
        """Equivalent parameters with ``phi`` folded into ``[0, pi/8]``.

        The spectrum is invariant under ``phi -> phi + pi/4`` (a translation
        by ``d``) and ``phi -> -phi`` (a reflection). Never applied implicitly.
        """
        quarter = math.pi / 4
        phi = math.fmod(self.phi, quarter)
        if phi < 0:
            phi += quarter
        if phi > quarter / 2:
            phi = quarter - phi
        return replace(self, phi=phi)

    def replace(self, **changes) -> LatticeParams:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {"A1": self.A1, "A2": self.A2, "phi": self.phi}


@dataclass(frozen=True)
class ForceSpec:
    """Constant force: magnitude ``f`` and sweep direction (+1 or -1)."""

    f: float
    direction: int = 1

    def __post_init__(self):
        if not math.isfinite(self.f) or self.f < 0:
            raise ValueError(f"force magnitude must be finite and >= 0, got {self.f!r}")
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction!r}")

    @property
    def rate(self) -> float:
        """Signed sweep rate ``d kappa / dt``."""
        return self.direction * SWEEP_PER_FORCE * self.f

    def require_dynamic(self) -> None:
        if self.f <= 0:
            raise ValueError("dynamics needs a strictly positive force")


@dataclass(frozen=True)
class PotentialFourier:
    """``V(x) = offset + sum_n components[n] * exp(i n pi x / 2)``."""

    offset: float
    components: dict = field(default_factory=dict)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.offset, dtype=complex)
        for n, amp in self.components.items():
            out += amp * np.exp(0.5j * math.pi * n * x)
        return out.real


def fourier_components(params: LatticeParams) -> PotentialFourier:
    """Harmonic table of the superlattice potential in units of ``G = 2 k_r``."""
    comps = {}
    if params.A1 != 0:
        comps[4] = comps[-4] = complex(-params.A1 / 4)
    if params.A2 != 0:
        amp = -params.A2 / 4 * np.exp(2j * params.phi)
        comps[5] = complex(amp)
        comps[-5] = complex(np.conj(amp))
    return PotentialFourier(offset=-(params.A1 + params.A2) / 2, components=comps)


def potential_value(params: LatticeParams, x):
    """Real-space potential (E_R) at positions ``x`` (units of d)."""
    x = np.asarray(x, dtype=float)
    return (-params.A1 * np.cos(math.pi * x) ** 2
            - params.A2 * np.cos(1.25 * math.pi * x + params.phi) ** 2)


def bloch_period(force: ForceSpec | float) -> float:
    """Time (hbar/E_R) for the quasimomentum to cross one zone."""
    f = force.f if isinstance(force, ForceSpec) else float(force)
    if not f > 0:
        raise ValueError(f"Bloch period needs a positive force, got {f!r}")
    return 2.0 / (SWEEP_PER_FORCE * f)


def wrap_k(k):
    """Fold quasimomentum into the first zone ``[-1, 1)``."""
    return (np.asarray(k, dtype=float) + 1.0) % 2.0 - 1.0


# --- SI conversion (reporting only) -----------------------------------------

_KINDS = ("energy", "time", "force", "length", "quasimomentum")


def _scales(wavelength: float, mass: float) -> dict:
    if not (wavelength > 0 and mass > 0):
        raise ValueError("wavelength and mass must be positive")
    d = wavelength / 2
    e_r = const.hbar ** 2 * math.pi ** 2 / (2 * mass * d ** 2)
    k_r = math.pi / (4 * d)
    return {
        "energy": e_r,                       # J
        "time": const.hbar / e_r,            # s
        "force": e_r * k_r / SWEEP_PER_FORCE,  # N
        "length": d,                         # m
        "quasimomentum": k_r,                # 1/m
    }


def to_si(value, kind: str, wavelength: float, mass: float = RB87_MASS):
    """Convert a dimensionless quantity of the given kind to SI."""
    if kind not in _KINDS:
        raise ValueError(f"unknown quantity kind {kind!r}; expected one of {_KINDS}")
    return np.asarray(value) * _scales(wavelength, mass)[kind]


def from_si(value, kind: str, wavelength: float, mass: float = RB87_MASS):
    """Inverse of :func:`to_si`."""
    if kind not in _KINDS:
        raise ValueError(f"unknown quantity kind {kind!r}; expected one of {_KINDS}")
    return np.asarray(value) / _scales(wavelength, mass)[kind]


def gravity_force(wavelength: float, mass: float = RB87_MASS, g: float = const.g) -> float:
    """Dimensionless force equivalent to ``m g``."""
    return float(from_si(mass * g, "force", wavelength, mass))
