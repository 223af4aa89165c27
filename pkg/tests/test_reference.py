"""The slow oracles are only worth something if they are right on their own."""

import math

import numpy as np
import pytest

from superlattice.reference import SplitStep, fd_bands, fd_hamiltonian, split_step_populations
from superlattice.units import ForceSpec, LatticeParams

FREE = LatticeParams(0, 0, 0)


def test_fd_hamiltonian_hermitian():
    h = fd_hamiltonian(LatticeParams(3, 2, 0.4), 0.37, 256).toarray()
    assert np.abs(h - h.conj().T).max() < 1e-12


@pytest.mark.parametrize("k", [0.0, 0.4, 1.0])
def test_fd_free_parabolas(k):
    exact = np.sort([(k / 4 + n / 2) ** 2 for n in range(-4, 5)])[:5]
    assert np.allclose(fd_bands(FREE, k, 5, 2048), exact, rtol=0, atol=1e-9)


def test_fd_rejects_tiny_grid():
    with pytest.raises(ValueError):
        fd_hamiltonian(FREE, 0.0, 8)


def test_split_step_free_bands_exact():
    e, _ = SplitStep(FREE, 64).bands(0.6, 5)
    exact = np.sort([(0.6 / 4 + n / 2) ** 2 for n in range(-4, 5)])[:5]
    assert np.allclose(e, exact, atol=1e-12)


def test_split_step_hamiltonian_matches_fourier_table():
    # the FFT of the sampled potential must reproduce the harmonic amplitudes
    p = LatticeParams(1.2, 0.7, 0.3)
    h = SplitStep(p, 64).hamiltonian(0.0)
    assert h[0, 0] == pytest.approx(-(1.2 + 0.7) / 2)
    assert h[4, 0] == pytest.approx(-1.2 / 4)
    assert h[5, 0] == pytest.approx(-(0.7 / 4) * np.exp(2j * 0.3))


def test_split_step_conserves_norm():
    s = SplitStep(LatticeParams(2, 1, 0.2), 128)
    _, v = s.bands(0.0, 3)
    out = s.run(v[:, 1], 0.0, 0.1, 5.0, dt=0.01)
    assert np.linalg.norm(out[-1][2]) == pytest.approx(1.0, abs=1e-12)


def test_split_step_free_particle_keeps_band():
    # free bands far from a folding point do not mix
    _, pops = split_step_populations(FREE, ForceSpec(0.1), 2.0, (0, 1, 0), k0=0.2)
    assert pops[-1][1] == pytest.approx(1.0, abs=1e-8)


def test_split_step_sample_times():
    t, pops = split_step_populations(LatticeParams(1, 1, 0), ForceSpec(0.1), 1.0, (1,),
                                     sample_times=[0.0, 0.5, 1.0], dt=0.01)
    assert np.allclose(t, [0, 0.5, 1.0])
    assert np.allclose(pops.sum(axis=1), 1, atol=1e-3)
