"""Measurement protocols: transition probabilities, widths, LZ estimates, flatness."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bands import (DEFAULT_BANDS, DEFAULT_CUTOFF, CrossingInfo, band_energies, crossing,
                    default_grid, gap_profile, simple_lattice_energies)
from .dynamics import InitialDistribution, Trajectory, init_state, propagate
from .units import SWEEP_PER_FORCE, ForceSpec, LatticeParams, bloch_period

WIDTH_THRESHOLD = 0.005
CONTAMINATION = 0.01
SAMPLE_DK = 1e-3
MAX_EPSILON = 1.0


# --- transition probability ---------------------------------------------------

@dataclass
class TransitionResult:
    """Peak population of band ``pair[1]`` after preparing band ``pair[0]``."""

    pair: tuple
    T: float
    t_max: float
    k_c: float
    params: LatticeParams
    force: ForceSpec
    mode: str = "full"
    contaminated: bool = False
    leaked: float = 0.0           # peak population outside the pair before t_max
    trajectory: Trajectory | None = field(default=None, repr=False)


def _parabolic_peak(y: np.ndarray, i: int) -> float:
    if i == 0 or i == len(y) - 1:
        return float(y[i])
    a, b, c = y[i - 1], y[i], y[i + 1]
    curv = a - 2 * b + c
    if curv >= 0:
        return float(b)
    return float(min(1.0, b - (c - a) ** 2 / (8 * curv)))


def _check_pair(pair):
    a, b = pair
    if abs(a - b) != 1 or min(a, b) < 1:
        raise ValueError(f"pair must be adjacent bands (a, a±1), got {pair}")


def _run_pair(params, force, pair, k_c, bands, cutoff, dk, rtol):
    alpha, beta = pair
    k0 = k_c - force.direction
    if bands is None:
        n = max(pair)
        dist = InitialDistribution.pure(alpha, max(n, DEFAULT_BANDS), k0=k0)
        state = init_state(dist, params, cutoff)
        col = {alpha: alpha - 1, beta: beta - 1}
    else:
        dist = InitialDistribution.pure(bands.index(alpha) + 1, len(bands), k0=k0)
        state = init_state(dist, params, cutoff, bands=bands)
        col = {b: i for i, b in enumerate(bands)}
    tau = bloch_period(force)
    n = int(round(2.0 / dk))
    times = np.linspace(0.0, tau, n + 1)
    traj = propagate(state, params, force, tau, times=times, rtol=rtol)
    return traj, col


def measure_transition(params: LatticeParams, force: ForceSpec, pair, *, mode: str = "auto",
                       n_bands: int = DEFAULT_BANDS, cutoff: int = DEFAULT_CUTOFF,
                       dk: float = SAMPLE_DK, rtol: float = 1e-9,
                       crossing_info: CrossingInfo | None = None) -> TransitionResult:
    """Prepare band ``pair[0]`` one zone-half before the crossing, sweep one
    Bloch period and return the maximum population reached in ``pair[1]``.

    ``mode``: ``full`` evolves ``n_bands`` bands; ``isolated`` only the pair;
    ``auto`` runs ``full`` and falls back to ``isolated`` when more than 1% of
    the population has left the pair before the maximum (a neighbouring
    crossing inside the window).
    """
    _check_pair(pair)
    if mode not in ("auto", "full", "isolated"):
        raise ValueError(f"mode must be auto, full or isolated, got {mode!r}")
    force.require_dynamic()
    alpha, beta = pair
    info = crossing_info or crossing(params, (min(pair), max(pair)), cutoff)
    k_c = info.k_c

    def evaluate(bands):
        traj, col = _run_pair(params, force, pair, k_c, bands, cutoff, dk, rtol)
        pops = traj.populations
        p_beta = pops[:, col[beta]]
        i = int(np.argmax(p_beta))
        inside = pops[:, col[alpha]] + p_beta
        leaked = float(np.max(1.0 - inside[: i + 1]))
        return TransitionResult(pair=tuple(pair), T=_parabolic_peak(p_beta, i), t_max=float(traj.t[i]),
                                k_c=k_c, params=params, force=force, leaked=leaked,
                                contaminated=leaked > CONTAMINATION, trajectory=traj)

    if mode == "isolated":
        res = evaluate([alpha, beta])
        res.mode = "isolated"
        return res
    full = evaluate(list(range(1, max(n_bands, max(pair)) + 1)))
    full.mode = "full"
    if mode == "full" or not full.contaminated:
        return full
    iso = evaluate([alpha, beta])
    iso.mode = "isolated"
    iso.contaminated = True
    iso.leaked = full.leaked
    return iso


# --- Landau-Zener -----------------------------------------------------------

def lz_probability(delta_min: float, slope_diff: float, force) -> float:
    """Two-level sweep estimate ``exp(-pi delta^2 / (2 rate |ds|))``.

    ``slope_diff`` is the difference of diabatic slopes in E_R per k_r and
    ``rate`` the quasimomentum sweep rate, so the exponent is dimensionless.
    """
    f = force.f if isinstance(force, ForceSpec) else float(force)
    if not f > 0:
        raise ValueError("force must be positive")
    if not abs(slope_diff) > 0:
        raise ValueError("slope difference must be nonzero")
    rate = SWEEP_PER_FORCE * f
    return float(math.exp(-math.pi * delta_min ** 2 / (2 * rate * abs(slope_diff))))


@dataclass
class SlopeResult:
    slope_diff: float
    slopes: tuple          # (diabatic branch entering in the lower band, the other)
    residual: float        # RMS deviation of the energies from the two fitted lines
    window: tuple          # (inner, outer) distance from k_c actually used


def diabatic_slopes(params: LatticeParams, info: CrossingInfo, epsilon: float | None = None,
                    n_points: int = 41, cutoff: int = DEFAULT_CUTOFF) -> SlopeResult:
    """Fit straight diabatic lines through a crossing.

    The windows are ``[k_c - 4e, k_c - 2e]`` and ``[k_c + 2e, k_c + 4e]`` with
    ``e`` the transition half-width. Each diabatic branch is the lower band
    on one side joined with the upper band on the other; each is fitted by
    one line across both windows.
    """
    eps = epsilon if epsilon is not None else info.epsilon
    if eps is None or not eps > 0:
        raise ValueError("diabatic_slopes needs a positive half-width")
    inner, outer = 2 * eps, 4 * eps
    if outer > 0.9:
        warnings.warn(f"slope window 4e={outer:.3g} leaves the crossing's zone; shrinking to 0.9",
                      RuntimeWarning, stacklevel=2)
        inner, outer = inner * 0.9 / outer, 0.9
    a, b = info.pair
    left = info.k_c - np.linspace(outer, inner, n_points)
    right = info.k_c + np.linspace(inner, outer, n_points)
    el = band_energies(params, left, b, cutoff)
    er = band_energies(params, right, b, cutoff)
    ks = np.concatenate([left, right])
    br1 = np.concatenate([el[:, a - 1], er[:, b - 1]])
    br2 = np.concatenate([el[:, b - 1], er[:, a - 1]])
    p1, r1 = np.polyfit(ks - info.k_c, br1, 1, full=True)[:2]
    p2, r2 = np.polyfit(ks - info.k_c, br2, 1, full=True)[:2]
    res = math.sqrt((float(np.sum(r1)) + float(np.sum(r2))) / (2 * len(ks)))
    return SlopeResult(slope_diff=float(abs(p1[0] - p2[0])), slopes=(float(p1[0]), float(p2[0])),
                       residual=res, window=(inner, outer))


# --- widths -------------------------------------------------------------------

@dataclass
class WidthResult:
    pair: tuple
    k_c: float
    epsilon: float | None
    threshold: float
    delta_min: float = math.nan
    reason: str = ""

    @property
    def defined(self) -> bool:
        return self.epsilon is not None


def transition_width(params: LatticeParams, force: ForceSpec, pair, threshold: float = WIDTH_THRESHOLD,
                     n_bands: int = DEFAULT_BANDS, cutoff: int = DEFAULT_CUTOFF,
                     crossing_info: CrossingInfo | None = None) -> WidthResult:
    """Half-width of the region in which a crossing moves population.

    Band ``pair[0]`` is prepared one zone-half before the crossing and
    evolved inbound; ``epsilon`` is the distance from ``k_c`` at which the
    population of ``pair[1]`` first reaches ``threshold`` (located by root
    finding on the integrator's dense output). If it never does within one
    Bloch period, or only a full zone-half away or farther (flat bands, where
    transfer is not localized), the width is undefined.
    """
    _check_pair(pair)
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    force.require_dynamic()
    alpha, beta = pair
    info = crossing_info or crossing(params, (min(pair), max(pair)), cutoff)
    k0 = info.k_c - force.direction
    nb = max(n_bands, max(pair))
    state = init_state(InitialDistribution.pure(alpha, nb, k0=k0), params, cutoff)
    tau = bloch_period(force)
    traj = propagate(state, params, force, tau, times=[0.0, tau],
                     stop=lambda t, p: p[beta - 1] - threshold)
    fin = traj.final
    hit = fin.populations[beta - 1] >= threshold * (1 - 1e-9) and fin.t < tau * (1 - 1e-12)
    if not hit:
        return WidthResult(tuple(pair), info.k_c, None, threshold, info.delta_min,
                           reason="threshold never reached")
    eps = abs(fin.kappa - (k0 + force.direction))
    if eps > MAX_EPSILON:
        return WidthResult(tuple(pair), info.k_c, None, threshold, info.delta_min,
                           reason=f"transfer starts {eps:.3g} k_r from the crossing; not localized")
    return WidthResult(tuple(pair), info.k_c, float(eps), threshold, info.delta_min)


def interval_overlap(c1: float, e1: float, c2: float, e2: float, period: float = 2.0) -> float:
    """Overlap length of ``[c1-e1, c1+e1]`` and ``[c2-e2, c2+e2]`` on a circle.

    Negative values are the separation between disjoint intervals.
    """
    d = abs((c1 - c2 + period / 2) % period - period / 2)
    return float(e1 + e2 - d)


@dataclass
class OverlapResult:
    widths: dict
    amount_12_23: float | None
    amount_23_34: float | None

    @property
    def overlap_12_23(self) -> bool | None:
        return None if self.amount_12_23 is None else self.amount_12_23 > 0

    @property
    def overlap_23_34(self) -> bool | None:
        return None if self.amount_23_34 is None else self.amount_23_34 > 0


def widths_overlap(params: LatticeParams, force: ForceSpec, threshold: float = WIDTH_THRESHOLD,
                   cutoff: int = DEFAULT_CUTOFF) -> OverlapResult:
    """Do neighbouring transition regions (1-2 vs 2-3, 2-3 vs 3-4) overlap?

    Flags are ``None`` when either width is undefined.
    """
    widths = {p: transition_width(params, force, p, threshold, cutoff=cutoff)
              for p in ((1, 2), (2, 3), (3, 4))}

    def amount(p, q):
        wp, wq = widths[p], widths[q]
        if not (wp.defined and wq.defined):
            return None
        return interval_overlap(wp.k_c, wp.epsilon, wq.k_c, wq.epsilon)

    return OverlapResult(widths, amount((1, 2), (2, 3)), amount((2, 3), (3, 4)))


# --- sweeps -------------------------------------------------------------------

PAIRS = ((1, 2), (2, 3), (3, 4))


def _sweep_row(args):
    A1, A2, phi, force, mode, with_lz = args
    params = LatticeParams(A1, A2, phi)
    row = {"A2": A2}
    for pair in PAIRS:
        tag = f"{pair[0]}{pair[1]}"
        info = crossing(params, pair)
        res = measure_transition(params, force, pair, mode=mode, crossing_info=info)
        row[f"T{tag}"] = res.T
        row[f"contaminated_{tag}"] = res.contaminated
        p_lz = math.nan
        if with_lz:
            w = transition_width(params, force, pair, crossing_info=info)
            if w.defined:
                info.epsilon = w.epsilon
                with warnings.catch_warnings():
                    # broad widths shrink the window routinely in a sweep
                    warnings.simplefilter("ignore", RuntimeWarning)
                    slopes = diabatic_slopes(params, info)
                p_lz = lz_probability(info.delta_min, slopes.slope_diff, force)
        row[f"P_LZ_{tag}"] = p_lz
    return row


def transition_sweep(A1: float, A2_values, phi: float, force: ForceSpec, *, mode: str = "auto",
                     with_lz: bool = True, workers: int = 1) -> list:
    """T12, T23, T34 (and LZ estimates) for each depth ``A2``; ordered like the input."""
    A2_values = [float(a) for a in A2_values]
    for a in A2_values:
        if not 0 < a <= 3:
            raise ValueError(f"A2 values must lie in (0, 3], got {a}")
    jobs = [(A1, a, phi, force, mode, with_lz) for a in A2_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


# --- flat bands ---------------------------------------------------------------

def flatness(params: LatticeParams, band: int | None = None, pair=None, n_points: int = 1025,
             cutoff: int = DEFAULT_CUTOFF) -> float:
    """``(max - min) / |mean|`` over the zone of a band energy or a pair's gap."""
    if (band is None) == (pair is None):
        raise ValueError("give exactly one of band or pair")
    if pair is not None:
        return gap_profile(params, pair, n_points, cutoff).rel_variation
    e = band_energies(params, default_grid(n_points), band, cutoff)[:, band - 1]
    return float((e.max() - e.min()) / abs(e.mean()))


def simple_lattice_flatness(V0: float, band: int, n_points: int = 1025) -> float:
    """Same measure for a band of the simple period-d lattice of depth ``V0``."""
    e = simple_lattice_energies(V0, default_grid(n_points), band)[:, band - 1]
    return float((e.max() - e.min()) / abs(e.mean()))


@dataclass
class RabiResult:
    t: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    exchange_time: float      # first maximum of the upper band's population
    peak: float
    tau_B: float


def rabi_exchange(params: LatticeParams, force: ForceSpec, pair, duration: float,
                  k0: float = 0.0, stride: float | None = None,
                  cutoff: int = DEFAULT_CUTOFF) -> RabiResult:
    """Population exchange between flat bands starting from the lower one.

    The exchange time is the time of the largest upper-band population within
    the first excursion above one half (or of the global maximum if the upper
    band never reaches one half).
    """
    _check_pair(pair)
    lo, hi = min(pair), max(pair)
    if flatness(params, pair=(lo, hi), cutoff=cutoff) > 0.01:
        warnings.warn("bands are not flat; exchange will not be Rabi-like", RuntimeWarning,
                      stacklevel=2)
    nb = max(DEFAULT_BANDS, hi)
    state = init_state(InitialDistribution.pure(lo, nb, k0=k0), params, cutoff)
    tau = bloch_period(force)
    stride = stride or tau / 200
    traj = propagate(state, params, force, duration, stride=stride)
    up = traj.populations[:, hi - 1]
    above = np.nonzero(up > 0.5)[0]
    if len(above):
        start = above[0]
        below = np.nonzero(up[start:] <= 0.5)[0]
        stop = start + below[0] if len(below) else len(up)
        i = start + int(np.argmax(up[start:stop]))
    else:
        i = int(np.argmax(up))
    return RabiResult(t=traj.t, lower=traj.populations[:, lo - 1], upper=up,
                      exchange_time=float(traj.t[i]), peak=float(up[i]), tau_B=tau)
