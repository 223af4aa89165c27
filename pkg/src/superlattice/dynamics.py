"""Band-amplitude dynamics under a constant force.

The wavefunction is expanded in instantaneous Bloch states,
``psi = sum_a c_a exp(-i theta_a) |u_a(kappa)>`` with ``d theta_a / dt = E_a``,
and the quasimomentum is the integration variable (``d kappa = rate dt``):

    dc_a/dkappa = -sum_b X_ab(kappa) exp(i (theta_a - theta_b)) c_b
    dtheta_a/dkappa = E_a / rate

``X_ab = <u_a | d u_b / dkappa>``. Off-diagonal entries come from the
Hellmann-Feynman identity. Eigenvectors are diagonalized fresh at every
stage the integrator asks for and phase-aligned to the vectors at the start
of the current step; the diagonal entry then carries the exact connection of
that aligned gauge, so the amplitudes do not depend on eigensolver phases.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .bands import (DEFAULT_BANDS, DEFAULT_CUTOFF, HARD_DEGENERACY, DegenerateBandsError,
                    align_phases, canonical_gauge, dh_dk, eigensystem, harmonics,
                    shift_zone, zone_index)
from .units import ForceSpec, LatticeParams, bloch_period, wrap_k

RTOL = 1e-9
ATOL = 1e-12
MAX_STEP = 0.05


class PropagationError(RuntimeError):
    """The integrator could not continue (e.g. step-size underflow)."""


@dataclass
class BandState:
    """Amplitudes ``c`` and phases ``theta`` at quasimomentum ``kappa``.

    ``kappa`` is kept unwrapped so that the number of zones crossed is known;
    ``k`` is the wrapped value. ``basis`` holds the band eigenvectors (columns)
    in the gauge the amplitudes refer to, expressed in zone ``zone_index(kappa)``.
    """

    c: np.ndarray
    kappa: float
    theta: np.ndarray
    t: float
    params: LatticeParams
    basis: np.ndarray
    cutoff: int = DEFAULT_CUTOFF
    bands: tuple | None = None    # 0-based band indices of c; default 0..n-1

    @property
    def band_index(self) -> np.ndarray:
        return np.arange(len(self.c)) if self.bands is None else np.asarray(self.bands)

    @property
    def k(self) -> float:
        return float(wrap_k(self.kappa))

    @property
    def n_bands(self) -> int:
        return len(self.c)

    @property
    def zone(self) -> int:
        return zone_index(self.kappa)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.c) ** 2

    @property
    def amplitudes(self) -> np.ndarray:
        """Schrodinger-picture amplitudes ``c exp(-i theta)``."""
        return self.c * np.exp(-1j * self.theta)

    def copy(self) -> BandState:
        return replace(self, c=self.c.copy(), theta=self.theta.copy(), basis=self.basis.copy())


@dataclass
class InitialDistribution:
    """Where the wave starts: a single quasimomentum or a Gaussian packet.

    ``weights`` are complex band amplitudes (band 1 first); they are
    normalized on construction. ``sigma`` is the standard deviation of the
    momentum density in k_r units.
    """

    weights: tuple
    k0: float = 0.0
    kind: str = "dirac"
    sigma: float | None = None
    n_nodes: int = 64
    span: float = 4.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex).ravel()
        if w.size == 0:
            raise ValueError("initial band weights are empty")
        norm = np.linalg.norm(w)
        if not norm > 0:
            raise ValueError("initial band weights are all zero")
        self.weights = tuple(w / norm)
        if self.kind not in ("dirac", "gaussian"):
            raise ValueError(f"kind must be 'dirac' or 'gaussian', got {self.kind!r}")
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("a Gaussian distribution needs sigma > 0")
            if self.n_nodes < 2:
                raise ValueError("a Gaussian distribution needs at least 2 nodes")

    @classmethod
    def pure(cls, band: int, n_bands: int = DEFAULT_BANDS, k0: float = 0.0, **kw):
        if not 1 <= band <= n_bands:
            raise ValueError(f"band {band} outside 1..{n_bands}")
        w = np.zeros(n_bands, complex)
        w[band - 1] = 1
        return cls(tuple(w), k0=k0, **kw)

    @classmethod
    def equal(cls, bands, n_bands: int = DEFAULT_BANDS, k0: float = 0.0, **kw):
        w = np.zeros(n_bands, complex)
        for b in bands:
            w[b - 1] = 1
        return cls(tuple(w), k0=k0, **kw)

    @property
    def n_bands(self) -> int:
        return len(self.weights)


@dataclass
class Ensemble:
    """Quadrature of a Gaussian packet: one BandState per node.

    ``probabilities`` sum to one; the packet amplitude of member ``j`` is
    ``sqrt(probabilities[j])``. Member bases share one smooth gauge along k.
    """

    states: list
    nodes: np.ndarray
    probabilities: np.ndarray
    sigma: float


def _transported_basis(params, kappas, bands, cutoff, reference=None):
    """Band vectors at each of ``kappas`` (ordered), phase-aligned along the path."""
    out = []
    prev, prev_zone = reference, None
    for kap in kappas:
        es = eigensystem(params, float(kap), cutoff)
        vec = es.vectors[:, bands]
        if prev is None:
            vec = canonical_gauge(vec)
        else:
            ref = prev if prev_zone is None else shift_zone(prev, prev_zone, es.zone)
            vec = align_phases(vec, ref)
        out.append(vec)
        prev, prev_zone = vec, es.zone
    return out


def init_state(dist: InitialDistribution, params: LatticeParams, cutoff: int = DEFAULT_CUTOFF,
               bands=None):
    """BandState for a Dirac start, or an :class:`Ensemble` for a Gaussian one.

    ``bands`` (1-based) restricts the basis to a subset of bands; the
    distribution's weights then refer to that subset in order.
    """
    nb = dist.n_bands
    if bands is None:
        sel = None
        bands = np.arange(nb)
    else:
        if len(bands) != nb:
            raise ValueError(f"{len(bands)} bands given for {nb} weights")
        sel = tuple(int(b) - 1 for b in bands)
        bands = np.array(sel)
    w = np.array(dist.weights, dtype=complex)
    if dist.kind == "dirac":
        basis = _transported_basis(params, [dist.k0], bands, cutoff)[0]
        return BandState(c=w.copy(), kappa=float(dist.k0), theta=np.zeros(nb), t=0.0,
                         params=params, basis=basis, cutoff=cutoff, bands=sel)

    half = dist.span * dist.sigma
    nodes = dist.k0 + np.linspace(-half, half, dist.n_nodes)
    dens = np.exp(-0.5 * ((nodes - dist.k0) / dist.sigma) ** 2)
    prob = dens / dens.sum()
    # transport outward from the centre so the packet gauge is smooth
    mid = dist.n_nodes // 2
    right = _transported_basis(params, nodes[mid:], bands, cutoff)
    left = _transported_basis(params, nodes[mid::-1], bands, cutoff)[1:]
    bases = left[::-1] + right
    states = [BandState(c=w.copy(), kappa=float(kap), theta=np.zeros(nb), t=0.0,
                        params=params, basis=b, cutoff=cutoff, bands=sel)
              for kap, b in zip(nodes, bases)]
    return Ensemble(states=states, nodes=nodes, probabilities=prob, sigma=dist.sigma)


# --- trajectory ---------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled populations along a run; ``events`` logs parameter switches."""

    t: np.ndarray
    kappa: np.ndarray
    c: np.ndarray
    theta: np.ndarray
    tau_B: float
    events: list = field(default_factory=list)
    final: BandState | None = None
    basis: np.ndarray | None = None

    @property
    def k(self) -> np.ndarray:
        return wrap_k(self.kappa)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.c) ** 2

    @property
    def norm(self) -> np.ndarray:
        return self.populations.sum(axis=1)

    @property
    def t_over_tau(self) -> np.ndarray:
        return self.t / self.tau_B

    def __len__(self):
        return len(self.t)

    def to_csv(self, path) -> None:
        from .io import write_trajectory_csv
        write_trajectory_csv(path, self)

    def extend(self, other: Trajectory) -> Trajectory:
        """Concatenate a later trajectory, dropping a duplicated junction sample."""
        start = 1 if len(self.t) and len(other.t) and other.t[0] <= self.t[-1] else 0
        basis = None
        if self.basis is not None and other.basis is not None:
            basis = np.concatenate([self.basis, other.basis[start:]])
        return Trajectory(
            t=np.concatenate([self.t, other.t[start:]]),
            kappa=np.concatenate([self.kappa, other.kappa[start:]]),
            c=np.concatenate([self.c, other.c[start:]]),
            theta=np.concatenate([self.theta, other.theta[start:]]),
            tau_B=self.tau_B, events=self.events + other.events,
            final=other.final, basis=basis)


# --- integrator ---------------------------------------------------------------

class _Frame:
    """Gauge-tracked eigen-frame of a fixed parameter set."""

    def __init__(self, params, bands, cutoff, reference, ref_zone, phase_noise=None):
        self.params = params
        self.bands = np.asarray(bands)
        self.cutoff = cutoff
        self.ref = reference
        self.ref_zone = ref_zone
        self.noise = phase_noise
        self._cache = OrderedDict()
        self.evaluations = 0

    def eig(self, kappa):
        hit = self._cache.get(kappa)
        if hit is None:
            self.evaluations += 1
            hit = eigensystem(self.params, kappa, self.cutoff)
            self._cache[kappa] = hit
            if len(self._cache) > 16:
                self._cache.popitem(last=False)
        return hit

    def aligned(self, kappa):
        """Energies (all), aligned vectors (all columns) and the zone at ``kappa``."""
        es = self.eig(kappa)
        vec = es.vectors.copy()
        if self.noise is not None:
            vec = vec * np.exp(2j * math.pi * self.noise.random(vec.shape[1]))
        ref = shift_zone(self.ref, self.ref_zone, es.zone)
        vec[:, self.bands] = align_phases(vec[:, self.bands], ref)
        return es.energies, vec, es.zone, ref

    def couplings(self, kappa):
        energies, vec, zone, ref = self.aligned(kappa)
        b = self.bands
        kw = kappa - 2 * zone
        dh = dh_dk(kw, self.cutoff)
        num = vec.conj().T @ (dh[:, None] * vec[:, b])          # <v_all|dH|v_b>
        gap = energies[b][None, :] - energies[:, None]            # E_b - E_all
        small = np.abs(gap) < HARD_DEGENERACY
        for j, col in enumerate(b):
            small[col, j] = False
        if np.any(small):
            if np.any(np.abs(num[small]) > HARD_DEGENERACY):
                raise DegenerateBandsError(f"degenerate bands at k={wrap_k(kappa):.12g}")
            gap = np.where(small, 1.0, gap)
            num = np.where(small, 0.0, num)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = num / gap
        for j, col in enumerate(b):
            d[col, j] = 0
        # connection of the aligned gauge: <ref|v_a> stays real along the step
        ov = np.einsum("ij,ij->j", ref.conj(), vec[:, b]).real
        s = np.einsum("ij,ij->j", ref.conj(), vec @ d)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(ov > 0, -s.imag / ov, 0.0)
        for j, col in enumerate(b):
            d[col, j] = 1j * a[j]
        return energies[b], vec[:, b], zone, d[b, :]

    def rebase(self, kappa):
        _, vec, zone, _ = self.aligned(kappa)
        self.ref = vec[:, self.bands].copy()
        self.ref_zone = zone


def _integrate(state: BandState, rate: float, kappa_end: float, sample_kappas=(),
               stop=None, rtol=RTOL, atol=ATOL, max_step=MAX_STEP, keep_basis=False,
               phase_noise=None):
    """Integrate from ``state`` to ``kappa_end``.

    ``stop(ka, kb, dense)`` is called after each accepted step and may return a
    quasimomentum in ``(ka, kb]`` at which to halt. Returns the sampled rows,
    the final state and whether ``stop`` fired.
    """
    nb = state.n_bands
    frame = _Frame(state.params, state.band_index, state.cutoff, state.basis, state.zone,
                   phase_noise)
    k0, t0 = state.kappa, state.t

    def rhs(kappa, y):
        energies, _, _, x = frame.couplings(kappa)
        th = y[nb:].real
        ph = np.exp(1j * (th[:, None] - th[None, :]))
        return np.concatenate([-(x * ph) @ y[:nb], energies / rate])

    rows, bases = [], []
    samples = np.asarray(sample_kappas, dtype=float)
    direction = 1.0 if kappa_end >= k0 else -1.0
    si = 0

    def record(kappa, y):
        rows.append((t0 + (kappa - k0) / rate, kappa, y[:nb].copy(), y[nb:].real.copy()))
        if keep_basis:
            _, vec, zone, _ = frame.aligned(kappa)
            bases.append(shift_zone(vec[:, frame.bands], zone, zone_index(kappa)))

    def finish(kappa, y, fired):
        _, vec, zone, _ = frame.aligned(kappa)
        basis = shift_zone(vec[:, frame.bands], zone, zone_index(kappa))
        final = BandState(c=y[:nb].copy(), kappa=float(kappa), theta=y[nb:].real.copy(),
                          t=t0 + (kappa - k0) / rate, params=state.params, basis=basis,
                          cutoff=state.cutoff, bands=state.bands)
        return rows, bases, final, fired, frame.evaluations

    y0 = np.concatenate([np.asarray(state.c, complex), np.asarray(state.theta, complex)])
    while si < len(samples) and direction * (samples[si] - k0) <= 1e-15:
        record(samples[si], y0)
        si += 1
    if kappa_end == k0:
        return finish(k0, y0, False)

    sol = DOP853(rhs, k0, y0, kappa_end, rtol=rtol, atol=atol, max_step=max_step)
    while sol.status == "running":
        ka = sol.t
        msg = sol.step()
        if sol.status == "failed":
            raise PropagationError(f"integration failed near k={float(wrap_k(sol.t)):.9g} "
                                   f"(t={t0 + (sol.t - k0) / rate:.9g}): {msg}")
        kb = sol.t
        dense = sol.dense_output()
        halt = stop(ka, kb, dense) if stop is not None else None
        limit = kb if halt is None else halt
        while si < len(samples) and direction * (samples[si] - limit) <= 1e-15:
            record(samples[si], dense(samples[si]))
            si += 1
        if halt is not None:
            return finish(halt, dense(halt), True)
        frame.rebase(kb)
        sol.f = sol.fun(sol.t, sol.y)   # FSAL value was computed in the old gauge
    return finish(sol.t, sol.y, False)


def _trajectory(rows, bases, final, tau, nb):
    if rows:
        t, kap, c, th = (np.array(v) for v in zip(*rows))
    else:
        t, kap, c, th = np.zeros(0), np.zeros(0), np.zeros((0, nb), complex), np.zeros((0, nb))
    return Trajectory(t=t, kappa=kap, c=c, theta=th, tau_B=tau, final=final,
                      basis=np.array(bases) if bases else None)


def sample_times(duration: float, stride: float) -> np.ndarray:
    """``0, stride, 2 stride, ...`` up to ``duration`` (inclusive within 1e-9)."""
    if not stride > 0:
        raise ValueError("sampling stride must be positive")
    n = int(math.floor(duration / stride + 1e-9))
    return np.arange(n + 1) * stride


def propagate(state: BandState, params: LatticeParams, force: ForceSpec, duration: float,
              observer=None, *, times=None, stride=None, rtol=RTOL, atol=ATOL,
              max_step=MAX_STEP, stop=None, keep_basis=False, phase_noise=None) -> Trajectory:
    """Evolve ``state`` for ``duration`` (hbar/E_R) under ``params`` and ``force``.

    Samples are taken at ``times`` (relative to the start) or every ``stride``;
    by default every 0.01 in quasimomentum. ``observer(t, kappa, populations)``
    is called for every sample. ``stop(t, populations)`` may end the run early:
    it is checked on accepted steps and the halt instant is refined by root
    finding on ``stop``'s sign change (it must return a float whose sign
    flips when the run should end).
    """
    force.require_dynamic()
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    if state.params != params:
        raise ValueError("state basis belongs to other parameters; reproject first")
    rate = force.rate
    tau = bloch_period(force)
    if times is None:
        times = sample_times(duration, stride if stride is not None else 0.01 / abs(rate))
    times = np.asarray(times, dtype=float)
    if np.any(times < -1e-12) or np.any(times > duration * (1 + 1e-12)):
        raise ValueError("sample times must lie within [0, duration]")
    k0 = state.kappa
    kap_samples = k0 + rate * times

    halt_fn = None
    if stop is not None:
        nb = state.n_bands

        def g(kappa, dense):
            y = dense(kappa)
            return stop(state.t + (kappa - k0) / rate, np.abs(y[:nb]) ** 2)

        def halt_fn(ka, kb, dense):
            ga, gb = g(ka, dense), g(kb, dense)
            if ga == 0:
                return None if ka == k0 else ka
            if np.sign(ga) == np.sign(gb):
                return None
            return brentq(lambda kk: g(kk, dense), ka, kb, xtol=1e-13)

    rows, bases, final, fired, _ = _integrate(
        state, rate, k0 + rate * duration, kap_samples, halt_fn, rtol, atol, max_step,
        keep_basis, phase_noise)
    traj = _trajectory(rows, bases, final, tau, state.n_bands)
    if observer is not None:
        for t, kap, pops in zip(traj.t, traj.kappa, traj.populations):
            observer(t, kap, pops)
    return traj


# --- sudden switches ----------------------------------------------------------

def reproject(state: BandState, new_params: LatticeParams, mode: str = "reproject",
              return_leakage: bool = False):
    """Switch parameters instantaneously at fixed quasimomentum.

    ``reproject``: the frozen wavefunction is expanded in the new bands,
    ``c'_b = sum_a <v'_b|v_a> c_a exp(-i theta_a)``; weight outside the band
    set is reported as leakage and the result renormalized.
    ``carryover``: amplitudes keep their band index (``c' = c exp(-i theta)``).
    Phases restart from zero in both modes.
    """
    if mode not in ("reproject", "carryover"):
        raise ValueError(f"mode must be 'reproject' or 'carryover', got {mode!r}")
    nb = state.n_bands
    dim = 2 * state.cutoff + 1
    if state.basis.shape != (dim, nb):
        raise ValueError(f"basis shape {state.basis.shape} does not match ({dim}, {nb})")
    es = eigensystem(new_params, state.kappa, state.cutoff)
    old = shift_zone(state.basis, state.zone, es.zone)
    new = align_phases(es.vectors[:, state.band_index], old)
    a = state.amplitudes
    if mode == "reproject":
        c = new.conj().T @ (old @ a)
        weight = float(np.sum(np.abs(c) ** 2))
        leakage = max(0.0, 1.0 - weight / float(np.sum(np.abs(a) ** 2)))
        c = c * (np.linalg.norm(a) / math.sqrt(weight))
    else:
        c, leakage = a.copy(), 0.0
    out = BandState(c=c, kappa=state.kappa, theta=np.zeros(nb), t=state.t,
                    params=new_params, basis=shift_zone(new, es.zone, state.zone),
                    cutoff=state.cutoff, bands=state.bands)
    return (out, leakage) if return_leakage else out


# --- real-space density -------------------------------------------------------

def bloch_functions(vectors: np.ndarray, kappa: float, x: np.ndarray, cutoff: int) -> np.ndarray:
    """Real-space Bloch functions ``exp(i kappa pi x/4) sum_n v_n exp(i n pi x/2)``.

    ``vectors`` are given in the zone of ``kappa``; returns ``(len(x), n_cols)``.
    Normalized to one per superlattice cell.
    """
    zone = zone_index(kappa)
    kw = kappa - 2 * zone
    plane = np.exp(0.5j * math.pi * np.outer(x, harmonics(cutoff)))
    return np.exp(0.25j * math.pi * kw * x)[:, None] * (plane @ vectors) / 2.0


def _adiabatic_members(ensemble: Ensemble, rate, t_grid, h=1e-3):
    """Band vectors and phases of every member along ``kappa_j + rate t``.

    One parallel-transport gauge is built on a fine grid covering all
    members' paths (starting from the packet's own gauge at the lowest
    node), so each member picks up its Berry phase. Members stay in their
    initial band weights: interband transfer is neglected.
    """
    st0 = ensemble.states[0]
    nb, cutoff, params = st0.n_bands, st0.cutoff, st0.params
    nodes = ensemble.nodes
    shifts = rate * np.asarray(t_grid)
    lo = min(nodes.min(), nodes.min() + shifts.min())
    hi = max(nodes.max(), nodes.max() + shifts.max())
    start = int(np.argmin(nodes))
    grid = np.concatenate([[nodes[start]], np.arange(nodes[start] + h, hi + h, h)])
    back = np.arange(nodes[start] - h, lo - h, -h)
    bands = st0.band_index
    ref0 = ensemble.states[start].basis
    fwd = _anchored_path(params, grid, bands, cutoff, ref0)
    bwd = _anchored_path(params, np.concatenate([[nodes[start]], back]), bands, cutoff, ref0)
    kap = np.concatenate([bwd[0][:0:-1], fwd[0]])
    vecs = bwd[1][:0:-1] + fwd[1]
    zones = bwd[2][:0:-1] + fwd[2]
    energies = np.concatenate([bwd[3][:0:-1], fwd[3]])
    # cumulative integral of E over kappa
    cum = np.concatenate([np.zeros((1, energies.shape[1])),
                          np.cumsum(0.5 * (energies[1:] + energies[:-1]) * np.diff(kap)[:, None],
                                    axis=0)])
    return params, cutoff, kap, vecs, zones, cum


def _anchored_path(params, kappas, bands, cutoff, anchor):
    vecs, zones, ens = [], [], []
    prev, prev_zone = anchor, zone_index(kappas[0])
    for kp in kappas:
        es = eigensystem(params, float(kp), cutoff)
        v = align_phases(es.vectors[:, bands], shift_zone(prev, prev_zone, es.zone))
        vecs.append(v)
        zones.append(es.zone)
        ens.append(es.energies[bands])
        prev, prev_zone = v, es.zone
    return np.asarray(kappas, float), vecs, zones, np.array(ens)


def wavepacket_density(ensemble: Ensemble, params: LatticeParams, force: ForceSpec,
                       x_grid, t_grid, method: str = "adiabatic", **ode_kw) -> np.ndarray:
    """``|psi(x, t)|^2`` of the coherent packet, shape ``(len(t_grid), len(x_grid))``.

    ``adiabatic`` follows each member in its bands with dynamical and Berry
    phases only (appropriate for weak forces, where the full equations are
    needlessly stiff). ``ode`` propagates every member with :func:`propagate`.
    Each time slice is normalized to unit integral over ``x_grid``.
    """
    x = np.asarray(x_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if x.max() - x.min() < 4:
        warnings.warn("x grid spans less than one superlattice period", RuntimeWarning,
                      stacklevel=2)
    force.require_dynamic()
    rate = force.rate
    st0 = ensemble.states[0]
    nb, cutoff = st0.n_bands, st0.cutoff
    amp = np.sqrt(ensemble.probabilities)
    plane = np.exp(0.5j * math.pi * np.outer(x, harmonics(cutoff)))
    out = np.empty((len(t_grid), len(x)))

    if method == "adiabatic":
        _, _, kap, vecs, zones, cum = _adiabatic_members(ensemble, rate, t_grid)
        for it, t in enumerate(t_grid):
            coeffs = np.zeros((len(harmonics(cutoff)), len(ensemble.nodes)), complex)
            kws = np.empty(len(ensemble.nodes))
            for j, (st, k0) in enumerate(zip(ensemble.states, ensemble.nodes)):
                kk = k0 + rate * t
                i = int(np.argmin(np.abs(kap - kk)))
                es = eigensystem(params, float(kk), cutoff)
                v = align_phases(es.vectors[:, st.band_index], shift_zone(vecs[i], zones[i], es.zone))
                phase = np.array([np.interp(kk, kap, cum[:, a]) - np.interp(k0, kap, cum[:, a])
                                  for a in range(nb)]) / rate
                coeffs[:, j] = amp[j] * (v @ (st.c * np.exp(-1j * phase)))
                kws[j] = kk - 2 * es.zone
            m = plane @ coeffs
            psi = (m * np.exp(0.25j * math.pi * np.outer(x, kws))).sum(axis=1)
            out[it] = np.abs(psi) ** 2
    elif method == "ode":
        trajs = [propagate(st, params, force, max(t_grid.max(), 1e-12), times=t_grid,
                           keep_basis=True, **ode_kw) for st in ensemble.states]
        for it in range(len(t_grid)):
            coeffs = np.zeros((len(harmonics(cutoff)), len(trajs)), complex)
            kws = np.empty(len(trajs))
            for j, tr in enumerate(trajs):
                a = tr.c[it] * np.exp(-1j * tr.theta[it])
                coeffs[:, j] = amp[j] * (tr.basis[it] @ a)
                kws[j] = tr.kappa[it] - 2 * zone_index(tr.kappa[it])
            m = plane @ coeffs
            psi = (m * np.exp(0.25j * math.pi * np.outer(x, kws))).sum(axis=1)
            out[it] = np.abs(psi) ** 2
    else:
        raise ValueError(f"method must be 'adiabatic' or 'ode', got {method!r}")

    norms = np.trapezoid(out, x, axis=1) if hasattr(np, "trapezoid") else np.trapz(out, x, axis=1)
    return out / norms[:, None]


def center_of_mass(density: np.ndarray, x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float)
    return (density * x).sum(axis=1) / density.sum(axis=1)
