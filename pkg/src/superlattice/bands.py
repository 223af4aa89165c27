"""Plane-wave band structure of the period-4 superlattice.

Bloch periodic parts are expanded as ``u_k(x) = sum_n v_n exp(i n pi x / 2)``
with ``n`` in ``[-N, N]``. The Bloch matrix at quasimomentum ``k`` has diagonal
``(k/4 + n/2)^2 + offset`` and the potential harmonics off the diagonal.

Band labels in the public API are 1-based (band 1 is the lowest), arrays are
0-based.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .units import LatticeParams, fourier_components, wrap_k

DEFAULT_CUTOFF = 25
MIN_CUTOFF = 10
DEFAULT_BANDS = 5
HARD_DEGENERACY = 1e-12


class BandSolverError(RuntimeError):
    """Raised when the eigensolver fails or its output cannot be used."""


class DegenerateBandsError(BandSolverError):
    """Raised when a Hellmann-Feynman division hits a (near) zero gap."""


def harmonics(cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    return np.arange(-cutoff, cutoff + 1)


def _check_cutoff(cutoff: int) -> None:
    if int(cutoff) != cutoff or cutoff < MIN_CUTOFF:
        raise ValueError(f"plane-wave cutoff must be an integer >= {MIN_CUTOFF}, got {cutoff!r}")


@lru_cache(maxsize=64)
def _potential_matrix(A1: float, A2: float, phi: float, cutoff: int) -> np.ndarray:
    table = fourier_components(LatticeParams(A1, A2, phi))
    n = harmonics(cutoff)
    diff = n[:, None] - n[None, :]
    mat = np.zeros(diff.shape, dtype=complex)
    mat[diff == 0] = table.offset
    for harmonic, amp in table.components.items():
        mat[diff == harmonic] = amp
    mat.flags.writeable = False
    return mat


def potential_matrix(params: LatticeParams, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Potential part of the Bloch matrix (independent of k)."""
    return _potential_matrix(float(params.A1), float(params.A2), float(params.phi), int(cutoff))


def kinetic_diagonal(k, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """``(k/4 + n/2)^2`` for every harmonic; broadcasts over an array of k."""
    q = np.asarray(k, dtype=float)[..., None] / 4 + harmonics(cutoff) / 2
    return q ** 2


def dh_dk(k, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Diagonal of dH/dk (the potential does not depend on k)."""
    return (np.asarray(k, dtype=float)[..., None] / 4 + harmonics(cutoff) / 2) / 2


def bloch_hamiltonian(params: LatticeParams, k: float, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Hermitian ``(2N+1) x (2N+1)`` Bloch matrix at quasimomentum ``k``."""
    _check_cutoff(cutoff)
    if abs(k) > 1 + 1e-12:
        raise ValueError(f"k must lie in the first zone [-1, 1], got {k!r}")
    h = np.array(potential_matrix(params, cutoff))
    h[np.diag_indices_from(h)] += kinetic_diagonal(k, cutoff)
    return h


def _eigh(h):
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise BandSolverError(f"Hermitian eigensolver failed: {exc}") from exc


def solve_bands(params: LatticeParams, k: float, n_bands: int = DEFAULT_BANDS,
                cutoff: int = DEFAULT_CUTOFF):
    """Lowest ``n_bands`` energies (ascending) and eigenvectors (columns)."""
    dim = 2 * cutoff + 1
    if not 1 <= n_bands <= dim:
        raise ValueError(f"n_bands must be in [1, {dim}], got {n_bands}")
    energies, vectors = _eigh(bloch_hamiltonian(params, k, cutoff))
    return energies[:n_bands], vectors[:, :n_bands]


# --- extended-zone eigensystems ---------------------------------------------

@dataclass(frozen=True)
class Eigensystem:
    """Full eigensystem at an arbitrary (unwrapped) quasimomentum.

    ``vectors`` are expressed at the wrapped point ``kappa - 2*zone``; the
    periodic part at ``kappa`` has coefficients shifted by ``zone``.
    """

    kappa: float
    zone: int
    energies: np.ndarray
    vectors: np.ndarray

    @property
    def k_wrapped(self) -> float:
        return self.kappa - 2 * self.zone


def zone_index(kappa: float) -> int:
    return int(math.floor((kappa + 1.0) / 2.0))


def eigensystem(params: LatticeParams, kappa: float, cutoff: int = DEFAULT_CUTOFF) -> Eigensystem:
    zone = zone_index(kappa)
    kw = kappa - 2 * zone
    h = np.array(potential_matrix(params, cutoff))
    h[np.diag_indices_from(h)] += kinetic_diagonal(kw, cutoff)
    energies, vectors = _eigh(h)
    return Eigensystem(float(kappa), zone, energies, vectors)


def shift_zone(vectors: np.ndarray, from_zone: int, to_zone: int) -> np.ndarray:
    """Re-express coefficient vectors given at ``from_zone`` in ``to_zone``.

    Components pushed past the cutoff are dropped (they are negligible for
    the low bands).
    """
    s = to_zone - from_zone
    if s == 0:
        return vectors
    out = np.zeros_like(vectors)
    if s > 0:
        out[s:] = vectors[:-s]
    else:
        out[:s] = vectors[-s:]
    return out


def canonical_gauge(vectors: np.ndarray) -> np.ndarray:
    """Phase each column so that its largest component is real positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    lead = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (np.abs(lead) / lead)


def align_phases(vectors: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Phase each column so its overlap with ``reference`` is real positive."""
    ov = np.einsum("ij,ij->j", reference.conj(), vectors)
    mag = np.abs(ov)
    phase = np.where(mag > 0, ov.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    return vectors * phase


def coupling_matrix(energies: np.ndarray, vectors: np.ndarray, kappa: float,
                    bands, cutoff: int | None = None) -> np.ndarray:
    """Hellmann-Feynman couplings ``X[a, b] = <v_a|dH/dk|v_b> / (E_b - E_a)``.

    ``energies``/``vectors`` may be the full eigensystem or any subset that
    contains ``bands`` (0-based column indices). The diagonal is zero.
    """
    bands = np.asarray(bands)
    if cutoff is None:
        cutoff = (vectors.shape[0] - 1) // 2
    dh = dh_dk(kappa, cutoff)
    sub = vectors[:, bands]
    m = sub.conj().T @ (dh[:, None] * sub)
    gaps = energies[bands][None, :] - energies[bands][:, None]
    off = ~np.eye(len(bands), dtype=bool)
    if np.any(np.abs(gaps[off]) < HARD_DEGENERACY):
        raise DegenerateBandsError(f"degenerate bands at k={kappa:.12g}; coupling undefined")
    x = np.zeros_like(m)
    x[off] = m[off] / gaps[off]
    return x


def derivative_coupling(params: LatticeParams, k: float, alpha: int, beta: int,
                        cutoff: int = DEFAULT_CUTOFF) -> complex:
    """``X_ab(k) = <u_a | d u_b / dk>`` for bands ``alpha != beta`` (1-based).

    Computed from the Hellmann-Feynman identity with eigenvectors in the
    canonical gauge; units of 1/k_r.
    """
    if alpha == beta:
        return 0j
    hi = max(alpha, beta)
    energies, vectors = solve_bands(params, k, hi, cutoff)
    vectors = canonical_gauge(vectors)
    x = coupling_matrix(energies, vectors, k, [alpha - 1, beta - 1], cutoff)
    return complex(x[0, 1])


# --- scans --------------------------------------------------------------------

@dataclass
class BandStructure:
    """Energies and gauge-smoothed eigenvectors on a quasimomentum grid."""

    k: np.ndarray
    energies: np.ndarray          # (n_k, n_bands)
    vectors: np.ndarray           # (n_k, dim, n_bands)
    params: LatticeParams
    cutoff: int = DEFAULT_CUTOFF
    degeneracies: list = field(default_factory=list)   # (k index, lower band 1-based)

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def gap(self, pair) -> np.ndarray:
        a, b = sorted(pair)
        return self.energies[:, b - 1] - self.energies[:, a - 1]

    def to_csv(self, path) -> None:
        from .io import write_bands_csv
        write_bands_csv(path, self.k, self.energies)


def default_grid(n_points: int = 1025) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n_points)


def _check_grid(k_grid: np.ndarray, min_points: int) -> None:
    if k_grid.ndim != 1 or len(k_grid) < min_points:
        raise ValueError(f"k grid needs at least {min_points} points, got {len(k_grid)}")
    if np.any(np.diff(k_grid) <= 0):
        raise ValueError("k grid must be strictly increasing")
    if k_grid[0] > -1 + 1e-12 or k_grid[-1] < 1 - 1e-12:
        raise ValueError("k grid must cover the whole zone [-1, 1]")


def band_energies(params: LatticeParams, k_grid, n_bands: int = DEFAULT_BANDS,
                  cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Energies only, shape ``(len(k_grid), n_bands)``; k may lie outside the zone."""
    _check_cutoff(cutoff)
    kw = wrap_k(np.atleast_1d(k_grid))
    h = np.broadcast_to(potential_matrix(params, cutoff), (len(kw),) + (2 * cutoff + 1,) * 2).copy()
    idx = np.arange(2 * cutoff + 1)
    h[:, idx, idx] += kinetic_diagonal(kw, cutoff)
    try:
        return np.linalg.eigvalsh(h)[:, :n_bands]
    except np.linalg.LinAlgError as exc:
        raise BandSolverError(f"Hermitian eigensolver failed: {exc}") from exc


def band_scan(params: LatticeParams, k_grid=None, n_bands: int = DEFAULT_BANDS,
              cutoff: int = DEFAULT_CUTOFF, min_points: int = 512,
              degeneracy_tol: float = 1e-9) -> BandStructure:
    """Diagonalize on a zone-covering grid and smooth the eigenvector gauge.

    Each vector's phase is chosen so that its overlap with the previous grid
    point's vector is real positive (discrete parallel transport). Inside a
    degenerate group the basis is rotated to follow the previous vectors.
    """
    _check_cutoff(cutoff)
    k_grid = default_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    _check_grid(k_grid, min_points)
    dim = 2 * cutoff + 1
    extra = min(dim, n_bands + 2)

    h = np.broadcast_to(potential_matrix(params, cutoff), (len(k_grid), dim, dim)).copy()
    idx = np.arange(dim)
    h[:, idx, idx] += kinetic_diagonal(k_grid, cutoff)
    energies, vectors = _eigh(h)
    energies = energies[:, :extra]
    vectors = vectors[:, :, :extra]

    degeneracies = []
    vectors[0] = canonical_gauge(vectors[0])
    for i in range(len(k_grid)):
        e = energies[i]
        gaps = np.diff(e)
        for a in np.nonzero(gaps[:n_bands] < HARD_DEGENERACY)[0]:
            if a + 1 < n_bands:
                degeneracies.append((i, int(a) + 1))
        if i == 0:
            continue
        cur, prev = vectors[i], vectors[i - 1]
        start = 0
        while start < extra:
            stop = start + 1
            while stop < extra and e[stop] - e[stop - 1] < degeneracy_tol:
                stop += 1
            if stop - start > 1:
                o = cur[:, start:stop].conj().T @ prev[:, start:stop]
                u, _, wh = np.linalg.svd(o)
                cur[:, start:stop] = cur[:, start:stop] @ (u @ wh)
            start = stop
        vectors[i] = align_phases(cur, prev)

    return BandStructure(k=k_grid, energies=energies[:, :n_bands].copy(),
                         vectors=vectors[:, :, :n_bands].copy(), params=params,
                         cutoff=cutoff, degeneracies=degeneracies)


# --- crossings and gaps -------------------------------------------------------

@dataclass
class CrossingInfo:
    """One avoided crossing between adjacent bands ``pair`` (1-based)."""

    pair: tuple
    k_c: float
    delta_min: float
    epsilon: float | None = None
    minima: tuple = ()          # every local minimum found, as (k, gap)


def _pair_gap(params, pair, cutoff):
    a, b = sorted(pair)

    def gap(k):
        e = eigensystem(params, float(k), cutoff).energies
        return e[b - 1] - e[a - 1]
    return gap


def _fold_edge(k: float, snap: float = 1e-6) -> float:
    """Wrap into ``(-1, 1]``; the zone edge is reported as +1.

    Parity makes 0 and the edge stationary points of every gap, and the
    gap is quadratic there, so a minimizer can only locate them to about
    sqrt(machine epsilon). Values that close are snapped.
    """
    w = float(wrap_k(k))
    if abs(w) < snap:
        return 0.0
    if w < -1 + snap or w > 1 - snap:
        return 1.0
    return w


def find_crossings(bs: BandStructure, pair, refine: bool = True) -> CrossingInfo:
    """Locate the minimum gap(s) of an adjacent band pair.

    Local minima of the scanned gap (treated periodically) are refined by a
    bounded Brent search on fresh diagonalizations. The returned object
    describes the global minimum and lists all minima.
    """
    a, b = sorted(pair)
    if b != a + 1:
        raise ValueError(f"pair must be adjacent bands, got {pair}")
    if b > bs.n_bands:
        raise ValueError(f"band structure holds {bs.n_bands} bands, pair {pair} needs {b}")
    if bs.k[0] > -1 + 1e-12 or bs.k[-1] < 1 - 1e-12:
        raise ValueError("band structure must cover the whole zone")

    k = bs.k
    g = bs.gap((a, b))
    periodic = abs(k[-1] - k[0] - 2.0) < 1e-12
    if periodic:
        k, g = k[:-1], g[:-1]
    n = len(g)
    left, right = np.roll(g, 1), np.roll(g, -1)
    cand = np.nonzero((g <= left) & (g <= right) & ((g < left) | (g < right)))[0]
    if len(cand) == 0:
        cand = np.array([int(np.argmin(g))])

    gap_fn = _pair_gap(bs.params, (a, b), bs.cutoff)
    minima = []
    for i in cand:
        kl = k[i - 1] if i > 0 else k[0] - (k[1] - k[0])
        kr = k[i + 1] if i + 1 < n else k[-1] + (k[-1] - k[-2])
        if refine:
            res = minimize_scalar(gap_fn, bounds=(kl, kr), method="bounded",
                                  options={"xatol": 1e-11})
            kc, gmin = float(res.x), float(res.fun)
            if g[i] < gmin:
                kc, gmin = float(k[i]), float(g[i])
        else:
            kc, gmin = float(k[i]), float(g[i])
        kc = _fold_edge(kc)
        if not any(abs(kc - m[0]) < 1e-6 for m in minima):
            minima.append((kc, gmin))
    minima.sort(key=lambda m: m[1])
    kc, gmin = minima[0]
    return CrossingInfo(pair=(a, b), k_c=kc, delta_min=gmin, minima=tuple(minima))


def crossing(params: LatticeParams, pair, cutoff: int = DEFAULT_CUTOFF,
             n_points: int = 1025) -> CrossingInfo:
    """Convenience: scan the zone and return the principal crossing of ``pair``."""
    hi = max(pair)
    bs = band_scan(params, default_grid(n_points), max(hi, 2), cutoff)
    return find_crossings(bs, pair)


@dataclass(frozen=True)
class GapStats:
    mean: float
    min: float
    max: float
    rel_variation: float


def gap_profile(params: LatticeParams, pair, n_points: int = 1025,
                cutoff: int = DEFAULT_CUTOFF) -> GapStats:
    """Statistics of ``E_b(k) - E_a(k)`` over the zone."""
    a, b = sorted(pair)
    e = band_energies(params, default_grid(n_points), b, cutoff)
    g = e[:, b - 1] - e[:, a - 1]
    mean = float(g.mean())
    rel = float((g.max() - g.min()) / mean) if mean != 0 else math.inf
    return GapStats(mean=mean, min=float(g.min()), max=float(g.max()), rel_variation=rel)


def simple_lattice_energies(V0: float, k_grid, n_bands: int = 4,
                            cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Bands of the period-d lattice ``-V0 cos^2(pi x)``; k in units of pi/d."""
    if V0 < 0:
        raise ValueError("V0 must be non-negative")
    n = harmonics(cutoff)
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    h = np.zeros((len(k), len(n), len(n)))
    idx = np.arange(len(n))
    h[:, idx, idx] = (k[:, None] + 2 * n) ** 2 - V0 / 2
    h[:, idx[:-1], idx[1:]] = -V0 / 4
    h[:, idx[1:], idx[:-1]] = -V0 / 4
    return np.linalg.eigvalsh(h)[:, :n_bands]


def warn_if_unconverged(params: LatticeParams, cutoff: int, n_bands: int = DEFAULT_BANDS) -> None:
    """Warn when doubling the cutoff moves the low bands by more than 1e-8 E_R."""
    k = np.array([0.0, 0.5, 1.0])
    e1 = band_energies(params, k, n_bands, cutoff)
    e2 = band_energies(params, k, n_bands, 2 * cutoff)
    if np.max(np.abs(e1 - e2)) > 1e-8:
        warnings.warn(f"cutoff {cutoff} not converged for {params}", RuntimeWarning, stacklevel=2)
