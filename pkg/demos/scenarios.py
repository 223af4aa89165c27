"""The packaged state-engineering schedules, with their switch logs.

Run: python3 demos/scenarios.py
"""

from superlattice.control import PRESETS, run_schedule

for name, build in PRESETS.items():
    sched = build()
    _, rep = run_schedule(sched)
    pops = " ".join(f"{x:.3f}" for x in rep.final_populations)
    print(f"{name:14s} stop {rep.stop_tau:.3f} tau_B  populations {pops}  fidelity {rep.fidelity:.4f}")
    for ev in rep.events:
        print(f"    {ev['t_tau']:.2f} tau_B  k={ev['k']:+.3f}  {ev['label']:28s} leakage {ev['leakage']:.3g}")
