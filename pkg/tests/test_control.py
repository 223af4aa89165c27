import math

import numpy as np
import pytest

from superlattice.control import (FREEZE_PHI, PRESETS, AtQuasimomentum, AtTime, PopulationPeak,
                                  PopulationThreshold, Schedule, Step, fidelity,
                                  load_recollect_preset, recollect_schedule, run_schedule,
                                  scenario_1to4, scenario_25_75, scenario_recollect)
from superlattice.analysis import widths_overlap
from superlattice.dynamics import InitialDistribution, init_state, propagate, reproject
from superlattice.reference import SplitStep
from superlattice.units import ForceSpec, LatticeParams, bloch_period

P = LatticeParams(1, 1, 0.2)
F = ForceSpec(0.1)


def plain(steps=(), **kw):
    return Schedule(initial=P, force=F, distribution=InitialDistribution.pure(1), duration=1.0,
                    steps=list(steps), **kw)


@pytest.fixture(scope="module")
def reports():
    return {name: run_schedule(fn()) for name, fn in PRESETS.items()}


# --- trivial behaviour ----------------------------------------------------------

def test_fidelity_definition():
    assert fidelity([0.2, 0.8], [0.5, 0.5]) == pytest.approx(0.7)
    assert fidelity([1, 0, 0], [1, 0, 0]) == 1.0
    assert 0 <= fidelity([0.1, 0.2, 0.7], [0.3, 0.3, 0.4]) <= 1


def test_empty_schedule_matches_propagate_bitwise():
    tau = bloch_period(F)
    times = np.arange(201) * tau / 200
    traj, rep = run_schedule(plain(), times=times)
    ref = propagate(init_state(InitialDistribution.pure(1), P), P, F, tau, times=times)
    assert np.array_equal(traj.c, ref.c)
    assert np.array_equal(rep.final_populations, ref.final.populations)
    assert rep.events == [] and not rep.incomplete


def test_noop_switch_at_start():
    _, a = run_schedule(plain())
    _, b = run_schedule(plain([Step(AtTime(0.0), P)]))
    ev = b.events[0]
    assert ev["t"] == 0.0
    assert np.allclose(ev["populations_before"], ev["populations_after"], atol=1e-12)
    assert np.allclose(a.final_populations, b.final_populations, atol=1e-12)
    assert ev["leakage"] < 1e-12


def test_trigger_validation():
    with pytest.raises(ValueError):
        AtTime(-1)
    with pytest.raises(ValueError):
        AtTime(1, unit="s")
    with pytest.raises(ValueError):
        PopulationThreshold(2, 1.5)
    with pytest.raises(ValueError):
        PopulationThreshold(2, 0.5, direction="sideways")
    with pytest.raises(ValueError):
        AtQuasimomentum(1.5)
    with pytest.raises(ValueError):
        plain([Step(AtTime(0.5), P), Step(AtTime(0.2), P)])
    with pytest.raises(ValueError):
        Schedule(initial=P, force=F, distribution=InitialDistribution.pure(1), duration=0)


def test_quasimomentum_trigger_position():
    q = LatticeParams(1, 1, 0.3)
    _, rep = run_schedule(plain([Step(AtQuasimomentum(0.5), q)]))
    assert rep.events[0]["k"] == pytest.approx(0.5, abs=1e-9)
    assert rep.events[0]["t_tau"] == pytest.approx(0.25, abs=1e-9)


def test_threshold_trigger_hits_level():
    sched = Schedule(initial=LatticeParams(0.5, 0.25, math.pi / 8), force=ForceSpec(0.05),
                     distribution=InitialDistribution.pure(1), duration=1.0,
                     steps=[Step(PopulationThreshold(2, 0.5), LatticeParams(0.5, 0.25, math.pi / 8))])
    _, rep = run_schedule(sched)
    assert rep.events[0]["populations_before"][1] == pytest.approx(0.5, abs=1e-8)


def test_unfired_trigger_flags_incomplete():
    _, rep = run_schedule(plain([Step(PopulationThreshold(5, 0.9), P)]))
    assert rep.incomplete and rep.events == []
    _, rep = run_schedule(plain(stop=PopulationThreshold(5, 0.9)))
    assert rep.incomplete


def test_time_stop():
    _, rep = run_schedule(plain(stop=AtTime(0.4)))
    assert rep.stop_tau == pytest.approx(0.4, abs=1e-12)


def test_determinism():
    a = run_schedule(scenario_25_75())[1].as_dict()
    b = run_schedule(scenario_25_75())[1].as_dict()
    assert a == b


def test_carryover_mode_logged():
    _, rep = run_schedule(scenario_25_75(), mode="carryover")
    assert rep.mode == "carryover"
    assert np.allclose(rep.events[0]["populations_after"], rep.events[0]["populations_before"],
                       rtol=0, atol=1e-14)


# --- switches -------------------------------------------------------------------

def test_norm_kept_across_every_switch(reports):
    # weight leaving the five bands is reported, and the kept part is renormalized
    for name, (traj, rep) in reports.items():
        for ev in rep.events:
            assert sum(ev["populations_after"]) == pytest.approx(sum(ev["populations_before"]),
                                                                 abs=1e-9), name
            assert 0 <= ev["leakage"] < 1
        assert np.abs(traj.populations.sum(axis=1) - 1).max() < 1e-6, name


def test_reported_leakage_matches_independent_overlap():
    """Leakage from the 5-band space equals the weight the old bands lose in the new basis."""
    _, rep = run_schedule(PRESETS["5050-two-step"]())
    ev = rep.events[0]
    old = SplitStep(LatticeParams(0.5, 0.25, math.pi / 8))
    new = SplitStep(LatticeParams(2, 1.95, math.pi / 8))
    _, va = old.bands(ev["k"], 5)
    _, vb = new.bands(ev["k"], 5)
    kept = (np.abs(vb.conj().T @ va) ** 2).sum(axis=0)
    pops = np.array(ev["populations_before"])
    # the state is almost pure band 2, so the incoherent estimate is close
    assert ev["leakage"] == pytest.approx(float(pops @ (1 - kept)), abs=3e-3)


@pytest.mark.xfail(strict=True, reason="a sudden switch between these depths moves 2-5% of a "
                                       "band outside the lowest five bands (checked above)")
def test_leakage_below_1e3_for_every_preset(reports):
    for _, rep in reports.values():
        assert rep.max_leakage < 1e-3


def test_tolerance_loosening_changes_fidelity_little(reports):
    for name, fn in PRESETS.items():
        loose = run_schedule(fn(), rtol=1e-7)[1]
        assert abs(loose.fidelity - reports[name][1].fidelity) < 1e-3, name


# --- presets --------------------------------------------------------------------

def test_1to4(reports):
    traj, rep = reports["1to4"]
    assert rep.fidelity >= 0.97
    assert 1.5 <= rep.stop_tau <= 1.7
    for band in (2, 3):
        assert traj.populations[:, band - 1].max() > 0.95
    assert not rep.incomplete


def test_2575_transitions_never_overlap():
    f = ForceSpec(0.05)
    for params in (LatticeParams(2, 0.584, math.pi / 8), LatticeParams(0.5, 0.25, 0)):
        r = widths_overlap(params, f)
        assert r.overlap_12_23 is False and r.overlap_23_34 is False


def test_recollect_events_at_fixed_times(reports):
    _, rep = reports["recollect"]
    assert len(rep.events) == 6
    assert [round(e["t_tau"], 9) for e in rep.events] == [2.0, 2.6, 2.6, 3.2, 3.2, 4.8]
    assert rep.events[-1]["params"]["phi"] == pytest.approx(FREEZE_PHI)
    depth_changes = [e["t_tau"] for e in rep.events if e["label"].startswith("depths")]
    assert [round(t, 9) for t in depth_changes] == [2.6, 3.2]
    assert not rep.incomplete


def test_recollect_preset_file():
    data = load_recollect_preset()
    assert data["force"] == 0.1 and data["duration"] == 5.0
    assert data["phi_times"] == [2.0, 2.6, 3.2, 4.8] and data["depth_times"] == [2.6, 3.2]
    assert data["segments"][-1][2] == pytest.approx(FREEZE_PHI)
    sched = scenario_recollect()
    assert sched.distribution.weights == InitialDistribution.equal((1, 2, 3, 4)).weights


def test_recollect_schedule_rejects_misplaced_changes():
    segs = [(1, 1, 0.1)] * 5
    with pytest.raises(ValueError):
        recollect_schedule(segs[:4])
    bad = [(1, 1, 0.1), (2, 1, 0.1), (2, 1, 0.1), (2, 1, 0.1), (2, 1, 0.1)]   # depth change at t=2
    with pytest.raises(ValueError):
        recollect_schedule(bad)


def test_freezing_phase_holds_populations():
    """At phi = pi/20 the deep lattice barely moves population from one period to the next."""
    f = ForceSpec(0.1)
    tau = bloch_period(f)

    def strobe(params):
        st0 = init_state(InitialDistribution.equal((1, 2, 3, 4)), params)
        tr = propagate(st0, params, f, 4 * tau, times=np.arange(5) * tau)
        return np.abs(np.diff(tr.populations, axis=0)).max()

    assert strobe(LatticeParams(8, 5, FREEZE_PHI)) < 0.002
    assert strobe(LatticeParams(8, 5, 0.0)) > 0.02
