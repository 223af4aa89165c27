import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superlattice.units import (RB87_MASS, ForceSpec, LatticeParams, bloch_period,
                                fourier_components, from_si, gravity_force, potential_value,
                                to_si, wrap_k)

depth = st.floats(0, 10, allow_nan=False)
phase = st.floats(-math.pi, math.pi, allow_nan=False)


def test_fourier_table_zero_potential():
    t = fourier_components(LatticeParams(0, 0, 0))
    assert t.offset == 0 and t.components == {}


def test_fourier_table_values():
    t = fourier_components(LatticeParams(3, 2, 0))
    assert t.offset == -2.5
    assert t.components[4] == t.components[-4] == -0.75
    assert t.components[5] == t.components[-5] == -0.5


def test_fourier_table_phase():
    t = fourier_components(LatticeParams(0, 1, math.pi / 8))
    assert t.components[5] == pytest.approx(-0.25 * np.exp(1j * math.pi / 4), abs=1e-15)
    assert t.components[-5] == pytest.approx(-0.25 * np.exp(-1j * math.pi / 4), abs=1e-15)
    assert set(t.components) == {5, -5}


def test_potential_values():
    p = LatticeParams(3, 2, 0)
    assert potential_value(p, 0.0) == pytest.approx(-5, abs=1e-14)
    assert potential_value(p, 2.0) == pytest.approx(-3, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(depth, depth, phase)
def test_potential_period_and_fourier_reconstruction(a1, a2, phi):
    p = LatticeParams(a1, a2, phi)
    x = np.linspace(-6, 6, 2001)
    assert np.max(np.abs(potential_value(p, x + 4) - potential_value(p, x))) < 1e-12
    t = fourier_components(p)
    assert np.max(np.abs(t.evaluate(x) - potential_value(p, x))) < 1e-12
    for n, amp in t.components.items():
        assert t.components[-n] == pytest.approx(np.conj(amp), abs=1e-15)


def test_negative_depth_rejected():
    with pytest.raises(ValueError):
        LatticeParams(-1, 0, 0)


def test_canonical_phase_is_opt_in():
    p = LatticeParams(1, 1, 3 * math.pi / 8)
    assert p.phi == 3 * math.pi / 8
    assert 0 <= p.canonical().phi <= math.pi / 8 + 1e-15


def test_bloch_period_sweeps_one_zone():
    # the quasimomentum crosses the zone (width 2 k_r) in one period
    for f in (0.05, 0.1, 1.42):
        tau = bloch_period(ForceSpec(f))
        assert tau == pytest.approx(2 / f, rel=1e-15)
        assert ForceSpec(f).rate * tau == pytest.approx(2.0)


def test_bloch_period_rejects_zero_force():
    with pytest.raises(ValueError):
        bloch_period(ForceSpec(0.0))
    with pytest.raises(ValueError):
        ForceSpec(-0.1)
    with pytest.raises(ValueError):
        ForceSpec(0.0).require_dynamic()


def test_force_direction():
    assert ForceSpec(0.2, -1).rate == -0.2
    with pytest.raises(ValueError):
        ForceSpec(0.2, 0)


def test_wrap_k():
    assert wrap_k(1.0) == -1.0
    assert wrap_k(3.2) == pytest.approx(-0.8)
    assert wrap_k(-1.0) == -1.0


def test_si_length_of_superlattice_period():
    assert to_si(4.0, "length", 850e-9) == pytest.approx(1.7e-6, rel=1e-12)


def test_si_round_trip():
    for kind in ("energy", "time", "force", "length", "quasimomentum"):
        v = from_si(to_si(1.2345, kind, 850e-9), kind, 850e-9)
        assert v == pytest.approx(1.2345, rel=1e-12)


def test_si_bloch_period_order_of_magnitude():
    wl = 850e-9
    f = gravity_force(wl)
    tau_s = float(to_si(bloch_period(ForceSpec(f)), "time", wl))
    assert 1e-5 < tau_s < 1e-3


def test_si_rejects_bad_inputs():
    with pytest.raises(ValueError):
        to_si(1.0, "energy", -1.0)
    with pytest.raises(ValueError):
        to_si(1.0, "energy", 850e-9, mass=0.0)
    with pytest.raises(ValueError):
        to_si(1.0, "colour", 850e-9)


def test_recoil_energy_formula():
    wl = 850e-9
    d = wl / 2
    e_r = 1.054571817e-34 ** 2 * math.pi ** 2 / (2 * RB87_MASS * d ** 2)
    assert float(to_si(1.0, "energy", wl)) == pytest.approx(e_r, rel=1e-8)
