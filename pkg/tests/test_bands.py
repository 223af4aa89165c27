import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superlattice.bands import (BandSolverError, DegenerateBandsError, band_energies, band_scan,
                                bloch_hamiltonian, coupling_matrix, crossing, default_grid,
                                derivative_coupling, eigensystem, find_crossings, gap_profile,
                                harmonics, shift_zone, simple_lattice_energies, solve_bands)
from superlattice.reference import fd_bands
from superlattice.units import LatticeParams

depth = st.floats(0, 10, allow_nan=False)
phase = st.floats(-math.pi, math.pi, allow_nan=False)
kval = st.floats(-1, 1, allow_nan=False)


def test_free_particle_hamiltonian_at_center():
    h = bloch_hamiltonian(LatticeParams(0, 0, 0), 0.0)
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
    e = np.linalg.eigvalsh(h)[:7]
    assert np.allclose(e, [0, 0.25, 0.25, 1, 1, 2.25, 2.25], atol=1e-14)


def test_free_particle_hamiltonian_at_edge():
    e = np.linalg.eigvalsh(bloch_hamiltonian(LatticeParams(0, 0, 0), 1.0))[:4]
    assert np.allclose(e, [0.0625, 0.0625, 0.5625, 0.5625], atol=1e-14)


def test_matrix_structure():
    p = LatticeParams(3, 2, 0.3)
    h = bloch_hamiltonian(p, 0.4)
    n = harmonics()
    assert np.allclose(h, h.conj().T, atol=0)
    assert np.allclose(np.diag(h).real, (0.1 + n / 2) ** 2 - 2.5)
    diff = n[:, None] - n[None, :]
    off = (diff != 0) & (np.abs(diff) != 4) & (np.abs(diff) != 5)
    assert np.all(h[off] == 0)
    assert np.allclose(h[diff == 4], -0.75)
    assert np.allclose(h[diff == 5], -0.5 * np.exp(0.6j))


def test_cutoff_and_zone_checks():
    p = LatticeParams(1, 1, 0)
    with pytest.raises(ValueError):
        bloch_hamiltonian(p, 0.0, cutoff=9)
    with pytest.raises(ValueError):
        bloch_hamiltonian(p, 1.5)
    with pytest.raises(ValueError):
        solve_bands(p, 0.0, n_bands=200)


def test_free_vectors_are_plane_waves():
    _, v = solve_bands(LatticeParams(0, 0, 0), 0.3, 5)
    assert np.allclose(np.sort(np.abs(v), axis=0)[-1], 1.0)
    assert np.allclose(np.sum(np.abs(v) > 1e-12, axis=0), 1)


def test_finite_difference_oracle():
    p = LatticeParams(3, 2, 0)
    for k in (0.5, -0.3, 1.0):
        e_pw = solve_bands(p, k, 5)[0]
        e_fd = fd_bands(p, k, 5, n_points=4096)
        assert np.max(np.abs(e_pw - e_fd) / np.abs(e_pw)) < 1e-6


def test_cutoff_convergence():
    k = np.linspace(-1, 1, 21)
    # total depth A1 + A2 up to 10 E_R
    for p in (LatticeParams(5, 5, 0.2), LatticeParams(10, 0, 0), LatticeParams(8, 2, 0.4),
              LatticeParams(3, 2, 0)):
        e25 = band_energies(p, k, 5, 25)
        e50 = band_energies(p, k, 5, 50)
        assert np.max(np.abs(e25 - e50)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(depth, depth, phase, kval)
def test_parity_and_phase_period(a1, a2, phi, k):
    p = LatticeParams(a1, a2, phi)
    e = band_energies(p, [k, -k], 5)
    assert np.max(np.abs(e[0] - e[1])) < 1e-9
    e_shift = band_energies(LatticeParams(a1, a2, phi + math.pi / 4), [k], 5)
    assert np.max(np.abs(e[0] - e_shift[0])) < 1e-9
    e_neg = band_energies(LatticeParams(a1, a2, -phi), [k], 5)
    assert np.max(np.abs(e[0] - e_neg[0])) < 1e-9


def test_band_scan_invariants():
    p = LatticeParams(3, 2, 0)
    bs = band_scan(p, default_grid(1025), 5)
    assert np.all(np.diff(bs.energies, axis=1) >= 0)
    assert np.max(np.abs(bs.energies - bs.energies[::-1])) < 1e-9
    assert np.max(np.abs(bs.energies[0] - bs.energies[-1])) < 1e-12
    ov = np.abs(np.einsum("kib,kib->kb", bs.vectors[:-1].conj(), bs.vectors[1:]))
    assert ov.min() > 0.9
    # gauge smoothing: successive overlaps real and positive
    raw = np.einsum("kib,kib->kb", bs.vectors[:-1].conj(), bs.vectors[1:])
    assert np.all(raw.real > 0) and np.max(np.abs(raw.imag)) < 1e-12


def test_band_scan_grid_checks():
    p = LatticeParams(1, 1, 0)
    with pytest.raises(ValueError):
        band_scan(p, np.linspace(-1, 1, 100))
    with pytest.raises(ValueError):
        band_scan(p, np.linspace(-0.5, 1, 1000))


def test_fourth_fifth_gap_dominates():
    e = band_energies(LatticeParams(3, 2, 0), default_grid(257), 5)
    gaps = np.diff(e, axis=1)
    assert gaps[:, 3].min() > 3 * gaps[:, :3].max()


def test_low_depth_gap_orders():
    p = LatticeParams(0.5, 0.25, math.pi / 8)
    d = [crossing(p, pr).delta_min for pr in ((1, 2), (2, 3), (3, 4))]
    assert 1e-3 <= d[0] < 1e-1
    assert 1e-5 <= d[1] < 1e-3
    assert 1e-4 <= d[2] < 1e-2


def test_deep_lattice_near_degeneracy():
    e = band_energies(LatticeParams(8, 5, 0), default_grid(257), 5)
    g23 = e[:, 2] - e[:, 1]
    assert g23.max() < 0.05 * (e[:, 1] - e[:, 0]).min()


def test_crossing_locations():
    for p in (LatticeParams(2, 2, 0), LatticeParams(0.5, 0.25, math.pi / 8),
              LatticeParams(2, 0.92, math.pi / 8)):
        assert crossing(p, (1, 2)).k_c == 1.0
        assert crossing(p, (2, 3)).k_c == 0.0
        assert crossing(p, (3, 4)).k_c == 1.0


def test_crossing_closes_without_second_lattice():
    gaps = [crossing(LatticeParams(2, a2, 0.3), (1, 2)).delta_min for a2 in (0.4, 0.1, 0.01, 0.0)]
    assert all(x > y for x, y in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-10


def test_find_crossings_needs_full_zone():
    bs = band_scan(LatticeParams(1, 1, 0), default_grid(513), 5)
    with pytest.raises(ValueError):
        find_crossings(bs, (1, 3))


def test_free_pairs_touch():
    assert gap_profile(LatticeParams(0, 0, 0), (1, 2)).min < 1e-12


def test_gap_profile_flat_deep_lattice():
    p = LatticeParams(8, 5, math.pi / 8)
    for pr in ((1, 2), (2, 3), (3, 4)):
        assert gap_profile(p, pr).rel_variation <= 0.005


def test_gap_trends_with_phase():
    phis = np.linspace(0, math.pi / 8, 9)
    g23 = [gap_profile(LatticeParams(8, 5, f), (2, 3), 257).mean for f in phis]
    g12 = [gap_profile(LatticeParams(8, 5, f), (1, 2), 257).mean for f in phis]
    g34 = [gap_profile(LatticeParams(8, 5, f), (3, 4), 257).mean for f in phis]
    assert np.all(np.diff(g23) > 0)
    assert np.argmin(g12) == len(phis) - 1
    assert np.argmin(g34) == len(phis) - 1


def test_coupling_anti_hermitian():
    p = LatticeParams(2, 1, 0.2)
    for k in (-0.7, 0.1, 0.9):
        e, v = solve_bands(p, k, 5)
        x = coupling_matrix(e, v, k, range(5))
        assert np.max(np.abs(x + x.conj().T)) < 1e-10
        assert np.all(np.diag(x) == 0)


def test_free_couplings_vanish():
    p = LatticeParams(0, 0, 0)
    for k in (0.3, -0.6):
        for a, b in ((1, 2), (2, 3), (3, 4), (1, 4)):
            assert abs(derivative_coupling(p, k, a, b)) < 1e-14


def test_diagonal_coupling_is_zero():
    assert derivative_coupling(LatticeParams(1, 1, 0), 0.2, 3, 3) == 0


def _fd_coupling(p, k, a, b, h):
    """<u_a | d u_b / dk> from central differences of phase-aligned vectors."""
    _, v0 = solve_bands(p, k, 5)
    _, vp = solve_bands(p, k + h, 5)
    _, vm = solve_bands(p, k - h, 5)
    def align(v):
        ov = np.einsum("ij,ij->j", v0.conj(), v)
        return v * (ov.conj() / np.abs(ov))
    d = (align(vp) - align(vm)) / (2 * h)
    return complex(v0[:, a - 1].conj() @ d[:, b - 1]), v0


def test_coupling_matches_finite_difference():
    p = LatticeParams(2, 1, 0.3)
    for k in (-0.8, -0.2, 0.35, 0.9):
        for a, b in ((1, 2), (2, 3), (3, 4), (1, 3)):
            e = solve_bands(p, k, 5)[0]
            if e[b - 1] - e[a - 1] < 1e-6:
                continue
            ref, v0 = _fd_coupling(p, k, a, b, 1e-5)
            e_, v_ = solve_bands(p, k, 5)
            hf = coupling_matrix(e_, v0, k, [a - 1, b - 1])[0, 1]
            assert abs(hf - ref) <= 1e-4 * abs(ref) + 1e-9


def test_coupling_peak_at_edge_crossing():
    p = LatticeParams(2, 2, 0)
    info = crossing(p, (1, 2))
    k = np.linspace(0.9, 1.0, 2001)
    mag = np.array([abs(derivative_coupling(p, kk, 1, 2)) for kk in k])
    k_peak = k[int(np.argmax(mag))]
    assert abs(k_peak - info.k_c) < 1e-3
    ref, v0 = _fd_coupling(p, 1.0 - 1e-4, 1, 2, 1e-6)
    e, _ = solve_bands(p, 1.0 - 1e-4, 5)
    hf = coupling_matrix(e, v0, 1.0 - 1e-4, [0, 1])[0, 1]
    assert abs(hf - ref) <= 1e-4 * abs(ref)


def test_degenerate_coupling_rejected():
    e = np.array([0.0, 0.0, 1.0])
    v = np.eye(21, 3, dtype=complex)
    with pytest.raises(DegenerateBandsError):
        coupling_matrix(e, v, 0.0, [0, 1], cutoff=10)
    assert issubclass(DegenerateBandsError, BandSolverError)


def test_extended_zone_eigensystem_matches_wrapped():
    p = LatticeParams(1, 0.5, 0.1)
    a = eigensystem(p, 2.3)
    b = eigensystem(p, 0.3)
    assert a.zone == 1 and b.zone == 0
    assert np.allclose(a.energies, b.energies)
    assert a.k_wrapped == pytest.approx(0.3)


def test_shift_zone_moves_harmonics():
    v = np.zeros((11, 1))
    v[5, 0] = 1
    assert shift_zone(v, 0, 2)[7, 0] == 1
    assert shift_zone(v, 0, -1)[4, 0] == 1
    assert shift_zone(v, 3, 3) is v


def test_simple_lattice_free_limit():
    k = np.array([0.0, 1.0])
    e = simple_lattice_energies(0, k, 3)
    assert np.allclose(e[0], [0, 4, 4]) and np.allclose(e[1], [1, 1, 9])
