"""Slow, independent reference solvers used to cross-check the main engine.

Neither route touches the plane-wave Bloch matrix or the coupled band
equations: the bands come from a real-space finite-difference grid over one
period-4 cell, and the dynamics from split-operator propagation of the
periodic part of the wave in the velocity gauge.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .units import ForceSpec, LatticeParams, potential_value

CELL = 4.0   # superlattice period in units of d


def fd_hamiltonian(params: LatticeParams, k: float, n_points: int = 4096) -> sparse.csr_matrix:
    """Fourth-order finite-difference Hamiltonian on one cell with Bloch phase.

    The kinetic operator is ``-(1/pi^2) d^2/dx^2`` (x in d, energy in E_R);
    the wave picks up ``exp(i k pi/4 * 4) = exp(i pi k)`` across the cell.
    """
    if n_points < 16:
        raise ValueError("need at least 16 grid points")
    h = CELL / n_points
    x = np.arange(n_points) * h
    twist = np.exp(1j * math.pi * k)
    stencil = {0: -5 / 2, 1: 4 / 3, 2: -1 / 12}
    rows, cols, vals = [], [], []
    idx = np.arange(n_points)
    scale = -1.0 / (math.pi ** 2 * h ** 2)
    for off, w in stencil.items():
        for sgn in ((1, -1) if off else (1,)):
            j = idx + sgn * off
            phase = np.ones(n_points, complex)
            phase[j >= n_points] = twist
            phase[j < 0] = np.conj(twist)
            rows.append(idx)
            cols.append(j % n_points)
            vals.append(scale * w * phase)
    lap = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(n_points, n_points))
    return lap + sparse.diags(potential_value(params, x).astype(complex))


def fd_bands(params: LatticeParams, k: float, n_bands: int = 5, n_points: int = 4096) -> np.ndarray:
    """Lowest ``n_bands`` energies at quasimomentum ``k`` from the real-space grid."""
    H = fd_hamiltonian(params, k, n_points)
    shift = -(abs(params.A1) + abs(params.A2)) - 1.0
    vals = eigsh(H, k=n_bands, sigma=shift, which="LM", return_eigenvectors=False)
    return np.sort(vals.real)


class SplitStep:
    """Split-operator propagation of the cell-periodic wave.

    The periodic part ``u(x)`` lives on ``n_grid`` points across one cell. In
    the velocity gauge the kinetic energy of harmonic ``n`` is
    ``(n/2 + kappa(t)/4)^2`` and the potential is static, so a Strang step is
    ``V/2, T(kappa at mid-step), V/2``.
    """

    def __init__(self, params: LatticeParams, n_grid: int = 256):
        self.params = params
        self.n_grid = n_grid
        self.x = np.arange(n_grid) * CELL / n_grid
        self.v = potential_value(params, self.x)
        self.n = np.fft.fftfreq(n_grid, d=1.0 / n_grid)     # integer harmonics

    def kinetic(self, kappa: float) -> np.ndarray:
        return (self.n / 2 + kappa / 4) ** 2

    def hamiltonian(self, kappa: float) -> np.ndarray:
        """Dense Hamiltonian in the FFT harmonic basis, built from sampled V(x)."""
        vk = np.fft.fft(self.v) / self.n_grid
        diff = (self.n[:, None] - self.n[None, :]).astype(int) % self.n_grid
        return vk[diff] + np.diag(self.kinetic(kappa))

    def bands(self, kappa: float, n_bands: int):
        """Lowest eigenpairs; each vector's largest component is made real positive."""
        e, v = np.linalg.eigh(self.hamiltonian(kappa))
        v = v[:, :n_bands]
        lead = v[np.argmax(np.abs(v), axis=0), np.arange(n_bands)]
        return e[:n_bands], v * (np.abs(lead) / lead)

    def run(self, psi_k: np.ndarray, kappa0: float, rate: float, duration: float,
            dt: float = 2e-3, sample_times=None):
        """Propagate harmonic amplitudes; yields ``(t, kappa, psi_k)`` at samples."""
        n_steps = max(1, int(math.ceil(duration / dt)))
        dt = duration / n_steps
        half_v = np.exp(-0.5j * dt * self.v)
        samples = set()
        if sample_times is not None:
            samples = {int(round(t / dt)) for t in sample_times}
        u = np.fft.ifft(psi_k) * self.n_grid
        out = []
        if 0 in samples:
            out.append((0.0, kappa0, psi_k.copy()))
        for s in range(n_steps):
            kap_mid = kappa0 + rate * (s + 0.5) * dt
            u = half_v * u
            u = np.fft.ifft(np.exp(-1j * dt * self.kinetic(kap_mid)) * np.fft.fft(u))
            u = half_v * u
            if s + 1 in samples:
                t = (s + 1) * dt
                out.append((t, kappa0 + rate * t, np.fft.fft(u) / self.n_grid))
        if not out or out[-1][0] != n_steps * dt:
            t = n_steps * dt
            out.append((t, kappa0 + rate * t, np.fft.fft(u) / self.n_grid))
        return out


def split_step_populations(params: LatticeParams, force: ForceSpec, duration: float,
                           weights, k0: float = 0.0, n_bands: int = 5, n_grid: int = 256,
                           dt: float = 2e-3, sample_times=None):
    """Band populations after split-operator evolution from a band superposition.

    Returns ``(times, populations)`` with populations of shape ``(len(times), n_bands)``.
    """
    force.require_dynamic()
    w = np.asarray(weights, dtype=complex)
    w = w / np.linalg.norm(w)
    solver = SplitStep(params, n_grid)
    _, v0 = solver.bands(k0, len(w))
    psi = v0 @ w
    rows = solver.run(psi, k0, force.rate, duration, dt, sample_times)
    times, pops = [], []
    for t, kappa, pk in rows:
        _, v = solver.bands(kappa, n_bands)
        times.append(t)
        pops.append(np.abs(v.conj().T @ pk) ** 2)
    return np.array(times), np.array(pops)
