"""Step-wise parameter schedules and the packaged state-engineering presets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import brentq

from .bands import DEFAULT_CUTOFF
from .dynamics import (ATOL, MAX_STEP, RTOL, InitialDistribution, Trajectory, _integrate,
                       _trajectory, init_state, reproject)
from .units import ForceSpec, LatticeParams, bloch_period, wrap_k

FREEZE_PHI = math.pi / 20


# --- triggers -----------------------------------------------------------------

@dataclass(frozen=True)
class AtTime:
    """Fire at time ``t`` (in Bloch periods unless ``unit='hbar'``)."""

    t: float
    unit: str = "tau"

    def __post_init__(self):
        if self.unit not in ("tau", "hbar"):
            raise ValueError(f"unit must be 'tau' or 'hbar', got {self.unit!r}")
        if self.t < 0:
            raise ValueError("trigger time must be non-negative")

    def seconds(self, tau):   # absolute time in hbar/E_R
        return self.t * tau if self.unit == "tau" else self.t


@dataclass(frozen=True)
class PopulationThreshold:
    """Fire when the population of ``band`` crosses ``level``.

    With ``relative_to`` the fraction ``pop[band] / sum(pop[relative_to])``
    is compared instead. ``direction`` is ``up``, ``down`` or ``either``.
    """

    band: int
    level: float
    direction: str = "up"
    relative_to: tuple | None = None

    def __post_init__(self):
        if not 0 <= self.level <= 1:
            raise ValueError("population threshold must lie in [0, 1]")
        if self.direction not in ("up", "down", "either"):
            raise ValueError(f"direction must be up, down or either, got {self.direction!r}")

    def value(self, pops):
        p = pops[self.band - 1]
        if self.relative_to:
            tot = sum(pops[b - 1] for b in self.relative_to)
            p = p / tot if tot > 0 else 0.0
        return p - self.level


@dataclass(frozen=True)
class AtQuasimomentum:
    """Fire when the wrapped quasimomentum reaches ``k`` (next occurrence)."""

    k: float

    def __post_init__(self):
        if not -1 <= self.k <= 1:
            raise ValueError("trigger quasimomentum must lie in [-1, 1]")


@dataclass(frozen=True)
class PopulationPeak:
    """Stop at the first maximum of ``band``'s population inside a time window (tau_B)."""

    band: int
    after: float = 0.0
    before: float = math.inf


@dataclass
class Step:
    trigger: object
    params: LatticeParams
    label: str = ""
    expect: tuple | None = None      # target populations just before the switch


@dataclass
class Schedule:
    """Initial parameters, force, start, ordered switches and a stop rule."""

    initial: LatticeParams
    force: ForceSpec
    distribution: InitialDistribution
    duration: float                   # in Bloch periods
    steps: list = field(default_factory=list)
    stop: object = None               # None (= duration), AtTime, PopulationThreshold or PopulationPeak
    target: tuple | None = None
    mode: str = "reproject"
    name: str = "custom"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("schedule duration must be positive")
        self.force.require_dynamic()
        last = -math.inf
        tau = bloch_period(self.force)
        for st in self.steps:
            if isinstance(st.trigger, AtTime):
                t = st.trigger.seconds(tau)
                if t < last - 1e-12:
                    raise ValueError("time triggers must be non-decreasing")
                last = t

    @property
    def n_bands(self) -> int:
        return self.distribution.n_bands


@dataclass
class ScenarioReport:
    name: str
    final_populations: np.ndarray
    stop_time: float                  # hbar/E_R
    tau_B: float
    events: list
    target: tuple | None
    mode: str
    incomplete: bool = False
    max_leakage: float = 0.0

    @property
    def stop_tau(self) -> float:
        return self.stop_time / self.tau_B

    @property
    def fidelity(self) -> float | None:
        if self.target is None:
            return None
        return fidelity(self.final_populations, self.target)

    def as_dict(self) -> dict:
        return {
            "name": self.name, "mode": self.mode,
            "final_populations": [float(p) for p in self.final_populations],
            "stop_time": self.stop_time, "stop_tau": self.stop_tau, "tau_B": self.tau_B,
            "target": None if self.target is None else list(self.target),
            "fidelity": self.fidelity, "incomplete": self.incomplete,
            "max_leakage": self.max_leakage, "events": self.events,
        }


def fidelity(populations, target) -> float:
    """``sum_a min(pop_a, target_a)``."""
    p = np.asarray(populations, dtype=float)
    q = np.asarray(target, dtype=float)
    n = min(len(p), len(q))
    return float(np.minimum(p[:n], q[:n]).sum())


# --- execution ----------------------------------------------------------------

def _trigger_fn(trigger, state, rate, tau):
    """Return g(kappa, y) whose sign change marks the trigger, or a fixed kappa."""
    nb = state.n_bands
    k0, t0 = state.kappa, state.t
    if isinstance(trigger, AtTime):
        return ("kappa", k0 + rate * (trigger.seconds(tau) - t0))
    if isinstance(trigger, AtQuasimomentum):
        d = (trigger.k - wrap_k(k0)) * np.sign(rate)
        d = d % 2.0
        return ("kappa", k0 + np.sign(rate) * d)
    if isinstance(trigger, PopulationThreshold):
        def g(kappa, y):
            return trigger.value(np.abs(y[:nb]) ** 2)
        return ("sign", g, trigger.direction)
    if isinstance(trigger, PopulationPeak):
        lo = k0 + rate * (trigger.after * tau - t0)
        hi = k0 + rate * (trigger.before * tau - t0)
        return ("peak", trigger.band, lo, hi)
    raise TypeError(f"unknown trigger {trigger!r}")


def _first_hit(spec, ka, kb, dense, kappa_start, rate):
    """Earliest kappa in (ka, kb] where ``spec`` fires, or None."""
    kind = spec[0]
    s = np.sign(rate)
    if kind == "kappa":
        target = spec[1]
        if s * (target - ka) <= 0 and ka == kappa_start:
            return ka
        if s * (target - ka) > 0 and s * (target - kb) <= 0:
            return target
        return None
    if kind == "sign":
        g, direction = spec[1], spec[2]
        ga, gb = g(ka, dense(ka)), g(kb, dense(kb))
        up = ga < 0 <= gb
        down = ga > 0 >= gb
        if (direction == "up" and up) or (direction == "down" and down) or \
                (direction == "either" and (up or down)):
            return brentq(lambda kk: g(kk, dense(kk)), ka, kb, xtol=1e-13)
        return None
    if kind == "peak":
        band, lo, hi = spec[1], spec[2], spec[3]
        a, b = (max(ka, lo), min(kb, hi)) if s > 0 else (min(ka, lo), max(kb, hi))
        if s * (b - a) <= 0:
            return None
        h = 1e-6 * s

        def slope(kk):
            return (abs(dense(kk + h)[band - 1]) ** 2 - abs(dense(kk - h)[band - 1]) ** 2) * s
        sa, sb = slope(a), slope(b)
        if sa > 0 >= sb:
            return brentq(slope, a, b, xtol=1e-13)
        if s * (hi - kb) <= 0 and s * (hi - ka) > 0:
            return hi              # window closes inside this step without a peak
        return None
    raise ValueError(kind)


def _satisfied_now(trigger, state, tau):
    """Does ``trigger`` already hold at ``state`` (used to merge simultaneous steps)?"""
    if isinstance(trigger, AtTime):
        return trigger.seconds(tau) <= state.t + 1e-9 * max(1.0, tau)
    if isinstance(trigger, AtQuasimomentum):
        return abs(wrap_k(state.kappa - trigger.k + 1) - 1) < 1e-12 or \
            abs(wrap_k(state.kappa) - trigger.k) < 1e-12
    if isinstance(trigger, PopulationThreshold):
        v = trigger.value(state.populations)
        return v >= 0 if trigger.direction != "down" else v <= 0
    return False


def run_schedule(schedule: Schedule, dist: InitialDistribution | None = None, *, mode: str | None = None,
                 times=None, stride: float | None = None, rtol: float = RTOL, atol: float = ATOL,
                 max_step: float = MAX_STEP, cutoff: int = DEFAULT_CUTOFF):
    """Propagate through the schedule, switching parameters when triggers fire.

    Returns ``(Trajectory, ScenarioReport)``. Switches firing at the same
    instant are applied as one change of parameters but logged one by one.
    ``times`` (hbar/E_R) or ``stride`` set the sampling; by default every
    tau_B / 200.
    """
    dist = dist or schedule.distribution
    mode = mode or schedule.mode
    force = schedule.force
    rate = force.rate
    tau = bloch_period(force)
    t_end = schedule.duration * tau
    if times is None:
        stride = stride or tau / 200
        times = np.arange(int(math.floor(t_end / stride + 1e-9)) + 1) * stride
    times = np.asarray(times, dtype=float)

    state = init_state(dist, schedule.initial, cutoff)
    k_start = state.kappa
    events, pending = [], list(schedule.steps)
    traj: Trajectory | None = None
    max_leak = 0.0
    stopped = False

    while True:
        kap_end = k_start + rate * t_end
        specs = []
        if pending:
            specs.append(("step", _trigger_fn(pending[0].trigger, state, rate, tau)))
        if schedule.stop is not None:
            stop = schedule.stop
            if isinstance(stop, AtTime):
                kap_end = min(kap_end, k_start + rate * stop.seconds(tau)) if rate > 0 else \
                    max(kap_end, k_start + rate * stop.seconds(tau))
            else:
                specs.append(("stop", _trigger_fn(stop, state, rate, tau)))
        fired = {}
        seg_start = state.kappa

        def halt(ka, kb, dense, specs=specs, fired=fired, seg_start=seg_start):
            best = None
            for name, spec in specs:
                hit = _first_hit(spec, ka, kb, dense, seg_start, rate)
                if hit is not None and (best is None or np.sign(rate) * (hit - best) < 0):
                    best = hit
                    fired.clear()
                    fired[name] = hit
                elif hit is not None and hit == best:
                    fired[name] = hit
            return best

        # a trigger may already hold at the segment start
        pre = None
        for name, spec in specs:
            if spec[0] == "kappa" and np.sign(rate) * (spec[1] - seg_start) <= 0:
                pre = name
                fired[name] = seg_start
                break
        seg_samples = k_start + rate * times
        sel = (np.sign(rate) * (seg_samples - seg_start) >= (1e-15 if traj is not None else -1e-15))
        if pre is None and np.sign(rate) * (kap_end - seg_start) > 0:
            rows, bases, final, hit, _ = _integrate(state, rate, kap_end, seg_samples[sel], halt,
                                                    rtol, atol, max_step)
            seg = _trajectory(rows, bases, final, tau, state.n_bands)
        else:
            seg = _trajectory([], [], state, tau, state.n_bands)
        if not len(seg.t) or seg.t[-1] < seg.final.t - 1e-12:
            # make sure the instant the segment ended is sampled
            st = seg.final
            seg = seg.extend(Trajectory(t=np.array([st.t]), kappa=np.array([st.kappa]),
                                        c=st.c[None, :].copy(), theta=st.theta[None, :].copy(),
                                        tau_B=tau, final=st))
        traj = seg if traj is None else traj.extend(seg)
        state = seg.final

        if "stop" in fired:
            stopped = True
            break
        if "step" in fired:
            group = [pending.pop(0)]
            while pending and _satisfied_now(pending[0].trigger, state, tau):
                group.append(pending.pop(0))
            before = state.populations.copy()
            new_state, leak = reproject(state, group[-1].params, mode=mode, return_leakage=True)
            max_leak = max(max_leak, leak)
            for j, st in enumerate(group):
                events.append({
                    "label": st.label or f"switch {len(events) + 1}",
                    "trigger": type(st.trigger).__name__,
                    "t": state.t, "t_tau": state.t / tau,
                    "k": float(wrap_k(state.kappa)), "kappa": state.kappa,
                    "params": st.params.as_dict(),
                    "populations_before": [float(p) for p in before],
                    "populations_after": [float(p) for p in (new_state.populations
                                                             if j == len(group) - 1 else before)],
                    "leakage": leak if j == len(group) - 1 else 0.0,
                    "expect": None if st.expect is None else list(st.expect),
                })
            state = new_state
            continue
        break

    traj.events = events
    traj.final = state
    incomplete = bool(pending) or (isinstance(schedule.stop, (PopulationThreshold, PopulationPeak))
                                   and not stopped)
    report = ScenarioReport(name=schedule.name, final_populations=state.populations.copy(),
                            stop_time=state.t, tau_B=tau, events=events, target=schedule.target,
                            mode=mode, incomplete=incomplete, max_leakage=max_leak)
    return traj, report


# --- presets ------------------------------------------------------------------

def scenario_1to4() -> Schedule:
    """Band 1 to band 4 through three successive crossings."""
    p = LatticeParams(0.5, 0.25, math.pi / 8)
    return Schedule(initial=p, force=ForceSpec(0.05), distribution=InitialDistribution.pure(1),
                    duration=1.7, stop=PopulationPeak(4, after=1.5, before=1.7),
                    target=(0, 0.004, 0, 0.996, 0), name="1to4")


def scenario_5050_23(variant: str = "refined") -> Schedule:
    """Equal split between bands 2 and 3."""
    f = ForceSpec(0.05)
    start = InitialDistribution.pure(1)
    if variant == "refined":
        return Schedule(initial=LatticeParams(0.5, 0.5, math.pi / 8), force=f, distribution=start,
                        duration=1.5,
                        stop=PopulationThreshold(3, 0.5, "up", relative_to=(2, 3)),
                        target=(0.014, 0.491, 0.496, 0, 0), name="5050-refined")
    if variant == "two_step":
        return Schedule(initial=LatticeParams(0.5, 0.25, math.pi / 8), force=f, distribution=start,
                        duration=1.26,
                        steps=[Step(AtTime(0.89), LatticeParams(2.0, 1.95, math.pi / 8),
                                    label="split 2-3", expect=(0.003, 0.996, 0, 0, 0))],
                        target=(0.056, 0.505, 0.435, 0, 0), name="5050-two-step")
    raise ValueError(f"variant must be 'refined' or 'two_step', got {variant!r}")


def scenario_25_75() -> Schedule:
    """A 25/75 superposition of bands 1 and 3."""
    return Schedule(initial=LatticeParams(2.0, 0.584, math.pi / 8), force=ForceSpec(0.05),
                    distribution=InitialDistribution.pure(1), duration=1.2,
                    steps=[Step(AtTime(0.72), LatticeParams(0.5, 0.25, 0.0), label="transfer 2-3",
                                expect=(0.25, 0.75, 0, 0, 0))],
                    target=(0.249, 0.002, 0.749, 0, 0), name="2575")


def load_recollect_preset(path=None) -> dict:
    if path is None:
        text = resources.files("superlattice.presets").joinpath("recollect.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


def recollect_schedule(segments, force: float = 0.1, duration: float = 5.0,
                       depth_times=(2.6, 3.2), phi_times=(2.0, 2.6, 3.2, 4.8)) -> Schedule:
    """Build the recollection schedule from per-interval parameters.

    ``segments`` lists ``(A1, A2, phi)`` for each interval between
    consecutive switch times. Depths may change only at ``depth_times`` and
    the phase only at ``phi_times``; every such change is one logged step.
    """
    times = sorted(set(depth_times) | set(phi_times))
    if len(segments) != len(times) + 1:
        raise ValueError(f"need {len(times) + 1} parameter sets, got {len(segments)}")
    segs = [LatticeParams(*s) for s in segments]
    steps = []
    for i, t in enumerate(times):
        prev, new = segs[i], segs[i + 1]
        cur = prev
        if t in phi_times:
            cur = cur.replace(phi=new.phi)
            steps.append(Step(AtTime(t), cur, label=f"phi -> {new.phi:.6g}"))
        elif new.phi != prev.phi:
            raise ValueError(f"phase change at t={t} is not allowed")
        if t in depth_times:
            cur = cur.replace(A1=new.A1, A2=new.A2)
            steps.append(Step(AtTime(t), cur, label=f"depths -> ({new.A1:.6g}, {new.A2:.6g})"))
        elif (new.A1, new.A2) != (prev.A1, prev.A2):
            raise ValueError(f"depth change at t={t} is not allowed")
    return Schedule(initial=segs[0], force=ForceSpec(force),
                    distribution=InitialDistribution.equal((1, 2, 3, 4)), duration=duration,
                    steps=steps, target=(1, 0, 0, 0, 0), name="recollect")


def scenario_recollect(path=None) -> Schedule:
    """Recollect an equal four-band superposition into band 1 (tuned preset)."""
    data = load_recollect_preset(path)
    return recollect_schedule(data["segments"], force=data["force"], duration=data["duration"],
                              depth_times=tuple(data["depth_times"]),
                              phi_times=tuple(data["phi_times"]))


PRESETS = {
    "1to4": scenario_1to4,
    "5050": lambda: scenario_5050_23("refined"),
    "5050-two-step": lambda: scenario_5050_23("two_step"),
    "2575": scenario_25_75,
    "recollect": scenario_recollect,
}
