"""Coordinate-sweep tuning of the four-band recollection schedule.

Switch times are fixed (phase at 2, 2.6, 3.2, 4.8 tau_B; depths at 2.6 and
3.2 tau_B) and the last interval uses the freezing phase pi/20. The free
parameters are three depth pairs and four phases. Each sweep scans one
coordinate on a grid around its current value and keeps the best band-1
population at 5 tau_B; sweeps repeat until a full pass gains less than 1e-4.

Runs use loose tolerances for speed; the result is re-evaluated with the
production tolerances before it is written.

    python3 tools/tune_recollect.py --out src/superlattice/presets/recollect.json
"""

import argparse
import json
import math
import time

import numpy as np

from superlattice.control import FREEZE_PHI, recollect_schedule, run_schedule
from superlattice.bands import DegenerateBandsError
from superlattice.dynamics import InitialDistribution, PropagationError, init_state, propagate, reproject
from superlattice.units import ForceSpec, LatticeParams, bloch_period

FORCE = ForceSpec(0.1)
TAU = bloch_period(FORCE)
EDGES = [0.0, 2.0, 2.6, 3.2, 4.8, 5.0]
NAMES = ["A1_0", "A2_0", "phi_0", "phi_1", "A1_1", "A2_1", "phi_2", "A1_2", "A2_2", "phi_3"]
BOUNDS = {"A": (0.1, 6.0), "p": (0.0, math.pi / 4)}
FAST = dict(rtol=1e-7, atol=1e-10, max_step=0.2)


def segments(x):
    a10, a20, p0, p1, a11, a21, p2, a12, a22, p3 = x
    return [(a10, a20, p0), (a10, a20, p1), (a11, a21, p2), (a12, a22, p3), (a12, a22, FREEZE_PHI)]


class Evaluator:
    """Band-1 population at the end, caching states at switch instants."""

    def __init__(self):
        self.cache = {}
        self.runs = 0

    def state_after(self, segs, i):
        key = tuple(segs[: i + 1])
        if key in self.cache:
            return self.cache[key]
        if i == 0:
            start = init_state(InitialDistribution.equal((1, 2, 3, 4)), LatticeParams(*segs[0]))
        else:
            start = reproject(self.state_after(segs, i - 1), LatticeParams(*segs[i]))
        dur = (EDGES[i + 1] - EDGES[i]) * TAU
        tr = propagate(start, LatticeParams(*segs[i]), FORCE, dur, times=[0.0, dur], **FAST)
        self.runs += 1
        self.cache[key] = tr.final
        return tr.final

    def __call__(self, x):
        try:
            return float(self.state_after(segments(x), len(EDGES) - 2).populations[0])
        except (DegenerateBandsError, PropagationError):
            return 0.0


def sweep(ev, x, span_a=1.0, span_p=math.pi / 16, n=9, tol=1e-4, max_passes=6, log=print):
    best = ev(x)
    for npass in range(max_passes):
        start = best
        for j, name in enumerate(NAMES):
            lo, hi = BOUNDS["p" if name.startswith("phi") else "A"]
            span = span_p if name.startswith("phi") else span_a
            grid = np.clip(x[j] + np.linspace(-span, span, n), lo, hi)
            for v in np.unique(grid):
                y = list(x)
                y[j] = float(v)
                val = ev(y)
                if val > best + 1e-12:
                    best, x = val, y
            log(f"pass {npass} {name:6s} -> {x[j]:.4f}  band1={best:.5f}  runs={ev.runs}")
        span_a, span_p = span_a / 2, span_p / 2
        if best - start < tol and npass > 0:
            break
    return x, best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="write the tuned preset JSON here")
    ap.add_argument("--starts", type=int, default=6, help="random starting points")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    ev = Evaluator()
    t0 = time.time()
    cands = []
    for s in range(args.starts):
        x = []
        for name in NAMES:
            if name.startswith("phi"):
                x.append(float(rng.choice([0.0, math.pi / 20, math.pi / 8, 3 * math.pi / 16])))
            else:
                x.append(float(rng.uniform(0.25, 4.0)))
        print(f"start {s}: band1={ev(x):.4f}")
        cands.append((ev(x), x))
    cands.sort(reverse=True)
    best_x, best = None, -1.0
    for val, x in cands[:3]:
        x, val = sweep(ev, x)
        if val > best:
            best_x, best = x, val
    print(f"tuned band-1 population {best:.5f} after {ev.runs} runs, {time.time() - t0:.0f} s")

    segs = segments(best_x)
    _, rep = run_schedule(recollect_schedule(segs))
    print("production tolerances:", np.round(rep.final_populations, 5))
    if args.out:
        data = {
            "version": 1,
            "description": "Depths and phases for recollecting an equal four-band "
                           "superposition into band 1; produced by tools/tune_recollect.py",
            "force": FORCE.f, "duration": 5.0,
            "phi_times": [2.0, 2.6, 3.2, 4.8], "depth_times": [2.6, 3.2],
            "segments": [list(s) for s in segs],
            "tuning": {"seed": args.seed, "starts": args.starts,
                       "band1_final": float(rep.final_populations[0])},
        }
        with open(args.out, "w") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")


if __name__ == "__main__":
    main()
