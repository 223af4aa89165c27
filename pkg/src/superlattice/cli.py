"""Command-line front end: ``superlattice <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .analysis import transition_sweep, transition_width, widths_overlap
from .bands import (DEFAULT_CUTOFF, BandSolverError, band_energies, default_grid, gap_profile,
                    simple_lattice_energies)
from .control import PRESETS, run_schedule
from .dynamics import (InitialDistribution, PropagationError, center_of_mass, init_state,
                       propagate, wavepacket_density)
from .io import (RunManifest, ScheduleError, dump_json, load_schedule, parse_angle, parse_range,
                 sha256_file, write_bands_csv, write_density_csv, write_overlap_csv,
                 write_sweep_csv, write_table, write_trajectory_csv)
from .units import ForceSpec, LatticeParams, bloch_period

WORKERS_ENV = "SUPERLATTICE_WORKERS"
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


def _params(args, a2=None, phi=None, a1=None) -> LatticeParams:
    try:
        return LatticeParams(float(args.a1 if a1 is None else a1),
                             float(args.a2 if a2 is None else a2),
                             parse_angle(args.phi) if phi is None else phi)
    except ValueError as exc:
        raise ConfigError(f"--a1/--a2/--phi: {exc}") from None


def _force(args) -> ForceSpec:
    try:
        f = ForceSpec(float(args.force), -1 if getattr(args, "reverse", False) else 1)
        f.require_dynamic()
        return f
    except ValueError as exc:
        raise ConfigError(f"--force: {exc}") from None


def _range(text, name, angle=False):
    try:
        return parse_range(text, angle=angle)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _time(value, args, tau) -> float:
    """Convert a CLI time (tau_B unless --hbar-time) to hbar/E_R."""
    return float(value) if args.hbar_time else float(value) * tau


def _distribution(args, n_bands) -> InitialDistribution:
    if args.weights:
        try:
            w = [complex(v) for v in args.weights.split(",")]
        except ValueError:
            raise ConfigError(f"--weights: cannot parse {args.weights!r}") from None
        if len(w) != n_bands:
            raise ConfigError(f"--weights: expected {n_bands} entries, got {len(w)}")
        return InitialDistribution(tuple(w), k0=args.k0)
    if args.equal:
        bands = [int(b) for b in args.equal.split(",")]
        if any(not 1 <= b <= n_bands for b in bands):
            raise ConfigError(f"--equal: bands must lie in 1..{n_bands}")
        return InitialDistribution.equal(bands, n_bands, k0=args.k0)
    if not 1 <= args.band <= n_bands:
        raise ConfigError(f"--band: must lie in 1..{n_bands}")
    return InitialDistribution.pure(args.band, n_bands, k0=args.k0)


def _manifest(args, argv, config, tolerances=None) -> RunManifest:
    return RunManifest(tool_version=__version__, command=args.command, argv=list(argv),
                       config=config, tolerances=tolerances or {}, cutoff=args.cutoff)


def _finish(args, manifest, outputs) -> None:
    files = [p for p in outputs if p and p != "-"]
    if not files:
        return
    for p in files:
        manifest.add_output(p)
    path = args.manifest or (files[0] + ".manifest.json")
    manifest.write(path)


# --- commands -------------------------------------------------------------------

def cmd_bands(args, argv):
    k = default_grid(args.nk)
    if args.simple is not None:
        if args.simple < 0:
            raise ConfigError("--simple: depth must be non-negative")
        energies = simple_lattice_energies(args.simple, k, args.nbands, args.cutoff)
        config = {"simple_V0": args.simple, "nbands": args.nbands, "nk": args.nk}
    else:
        if args.a1 is None or args.a2 is None:
            raise ConfigError("--a1 and --a2 are required (or use --simple V0)")
        p = _params(args)
        energies = band_energies(p, k, args.nbands, args.cutoff)
        config = {**p.as_dict(), "nbands": args.nbands, "nk": args.nk}
    write_bands_csv(args.out, k, energies)
    _finish(args, _manifest(args, argv, config), [args.out])


def cmd_evolve(args, argv):
    p = _params(args)
    f = _force(args)
    tau = bloch_period(f)
    duration = _time(args.duration, args, tau)
    if not duration > 0:
        raise ConfigError("--duration must be positive")
    stride = _time(args.observer_stride, args, tau) if args.observer_stride else None
    dist = _distribution(args, args.nbands)
    state = init_state(dist, p, args.cutoff)
    traj = propagate(state, p, f, duration, stride=stride, rtol=args.rtol, atol=args.atol)
    write_trajectory_csv(args.out, traj)
    fin = traj.final.populations
    print("final populations: " + " ".join(f"{x:.6f}" for x in fin)
          + f"  (t = {traj.final.t / tau:.6g} tau_B, norm drift {abs(traj.norm - 1).max():.2e})",
          file=sys.stderr)
    config = {**p.as_dict(), "force": f.f, "duration": duration, "stride": stride,
              "weights": [[w.real, w.imag] for w in dist.weights], "k0": dist.k0}
    _finish(args, _manifest(args, argv, config, {"rtol": args.rtol, "atol": args.atol}), [args.out])


def cmd_transition(args, argv):
    f = _force(args)
    a2s = _range(args.a2, "--a2")
    phi = parse_angle(args.phi)
    rows = transition_sweep(float(args.a1), a2s, phi, f, mode=args.mode,
                            with_lz=not args.no_lz, workers=args.workers)
    write_sweep_csv(args.out, rows)
    config = {"A1": float(args.a1), "A2": a2s, "phi": phi, "force": f.f, "mode": args.mode}
    _finish(args, _manifest(args, argv, config), [args.out])


def _pair(text):
    t = text.replace(",", "").replace("-", "")
    if len(t) != 2 or not t.isdigit():
        raise ConfigError(f"--pair: expected two adjacent band numbers like 12, got {text!r}")
    return int(t[0]), int(t[1])


def cmd_width(args, argv):
    f = _force(args)
    pair = _pair(args.pair)
    rows = []
    for a2 in _range(args.a2, "--a2"):
        p = _params(args, a2=a2)
        w = transition_width(p, f, pair, args.threshold, cutoff=args.cutoff)
        rows.append([p.A1, p.A2, p.phi, w.k_c, w.epsilon if w.defined else math.nan, w.delta_min])
    write_table(args.out, ["A1", "A2", "phi", "k_c", "epsilon", "delta_min"], rows)
    config = {"A1": float(args.a1), "A2": args.a2, "phi": args.phi, "pair": pair,
              "threshold": args.threshold, "force": f.f}
    _finish(args, _manifest(args, argv, config), [args.out])


def _overlap_row(job):
    a1, a2, phi, f, cutoff = job
    r = widths_overlap(LatticeParams(a1, a2, phi), f, cutoff=cutoff)
    def flag(v):
        return math.nan if v is None else float(v)
    return {"A1": a1, "A2": a2, "phi": phi, "overlap_12_23": flag(r.overlap_12_23),
            "overlap_23_34": flag(r.overlap_23_34)}


def cmd_overlap(args, argv):
    f = _force(args)
    jobs = [(a1, a2, phi, f, args.cutoff)
            for phi in _range(args.phi, "--phi", angle=True)
            for a1 in _range(args.a1, "--a1")
            for a2 in _range(args.a2, "--a2")]
    rows = _map(_overlap_row, jobs, args.workers)
    write_overlap_csv(args.out, rows)
    config = {"A1": args.a1, "A2": args.a2, "phi": args.phi, "force": f.f}
    _finish(args, _manifest(args, argv, config), [args.out])


def cmd_gapscan(args, argv):
    pairs = ((1, 2), (2, 3), (3, 4))
    header = ["phi"] + [f"{s}_{a}{b}" for a, b in pairs for s in ("mean", "min", "max", "rel")]
    rows = []
    for phi in _range(args.phi, "--phi", angle=True):
        p = _params(args, phi=phi)
        row = [phi]
        for pr in pairs:
            g = gap_profile(p, pr, args.nk, args.cutoff)
            row += [g.mean, g.min, g.max, g.rel_variation]
        rows.append(row)
    write_table(args.out, header, rows)
    config = {"A1": float(args.a1), "A2": float(args.a2), "phi": args.phi, "nk": args.nk}
    _finish(args, _manifest(args, argv, config), [args.out])


def cmd_density(args, argv):
    p = _params(args)
    f = _force(args)
    tau = bloch_period(f)
    if not args.sigma > 0:
        raise ConfigError("--sigma must be positive")
    dist = InitialDistribution.pure(args.band, args.nbands, k0=args.k0, kind="gaussian",
                                    sigma=args.sigma, n_nodes=args.nodes)
    ens = init_state(dist, p, args.cutoff)
    t = np.linspace(0.0, _time(args.duration, args, tau), args.nt)
    x = np.linspace(args.xmin, args.xmax, args.nx)
    dens = wavepacket_density(ens, p, f, x, t, method=args.method)
    write_density_csv(args.out, x, t, dens)
    com = center_of_mass(dens, x)
    print(f"centre of mass: start {com[0]:.6g} d, range [{com.min():.6g}, {com.max():.6g}] d, "
          f"end {com[-1]:.6g} d", file=sys.stderr)
    config = {**p.as_dict(), "force": f.f, "sigma": args.sigma, "nodes": args.nodes,
              "nt": args.nt, "x": [args.xmin, args.xmax, args.nx], "method": args.method}
    _finish(args, _manifest(args, argv, config), [args.out])


def cmd_control(args, argv):
    if bool(args.preset) == bool(args.schedule):
        raise ConfigError("give exactly one of --preset or --schedule")
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"--preset: unknown preset {args.preset!r}; "
                              f"choose from {', '.join(PRESETS)}")
        schedule = PRESETS[args.preset]()
    else:
        schedule = load_schedule(args.schedule)
    modes = ["reproject", "carryover"] if args.compare_modes else [args.mode or schedule.mode]
    reports = []
    traj = None
    for i, mode in enumerate(modes):
        tr, rep = run_schedule(schedule, mode=mode, rtol=args.rtol, atol=args.atol,
                               cutoff=args.cutoff)
        reports.append(rep.as_dict())
        if i == 0:
            traj = tr
    out = reports[0] if len(reports) == 1 else {"reports": reports}
    dump_json(out, args.report)
    if args.out:
        write_trajectory_csv(args.out, traj)
    rep = reports[0]
    fid = rep["fidelity"]
    print(f"{schedule.name}: final " + " ".join(f"{x:.4f}" for x in rep["final_populations"])
          + (f"  fidelity {fid:.4f}" if fid is not None else "")
          + ("  INCOMPLETE" if rep["incomplete"] else ""), file=sys.stderr)
    config = {"preset": args.preset, "schedule": args.schedule, "modes": modes}
    _finish(args, _manifest(args, argv, config, {"rtol": args.rtol, "atol": args.atol}),
            [args.out, args.report])


def cmd_rerun(args, argv):
    try:
        m = RunManifest.load(args.manifest_file)
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from None
    before = dict(m.outputs)
    code = main(m.argv)
    if code != 0:
        return code
    ok = True
    for path, digest in before.items():
        same = sha256_file(path) == digest
        ok &= same
        print(f"{'same' if same else 'DIFFERS'}  {path}", file=sys.stderr)
    return 0 if ok else 1


def _map(fn, jobs, workers):
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superlattice",
                                 description="Bloch oscillations and Landau-Zener control in a "
                                             "period-4 optical superlattice.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, lattice=True, force=False, a2_range=False):
        p.add_argument("--out", default="-", help="output CSV (default stdout)")
        p.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
        p.add_argument("--cutoff", type=int, default=DEFAULT_CUTOFF, help="plane-wave cutoff N")
        p.add_argument("--workers", type=int, default=None,
                       help=f"parallel workers (default ${WORKERS_ENV} or 1)")
        if lattice:
            p.add_argument("--a1", required=True, help="depth A1 (E_R)")
            p.add_argument("--a2", required=True,
                           help="depth A2 (E_R)" + ("; a:b:step or a:b:count" if a2_range else ""))
            p.add_argument("--phi", default="0", help="relative phase, radians or e.g. pi/8")
        if force:
            p.add_argument("--force", required=True, type=float, help="force f (E_R k_r)")
            p.add_argument("--reverse", action="store_true", help="sweep toward negative k")

    def timing(p, duration_default=None):
        p.add_argument("--duration", type=float, default=duration_default,
                       required=duration_default is None, help="duration (tau_B)")
        p.add_argument("--hbar-time", action="store_true",
                       help="read times in hbar/E_R instead of Bloch periods")
        p.add_argument("--rtol", type=float, default=1e-9)
        p.add_argument("--atol", type=float, default=1e-12)

    p = sub.add_parser("bands", help="band energies over the zone")
    common(p, lattice=False)
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--phi", default="0")
    p.add_argument("--nbands", type=int, default=5)
    p.add_argument("--nk", type=int, default=1025)
    p.add_argument("--simple", type=float, metavar="V0",
                   help="simple period-d lattice of depth V0 instead (k in pi/d)")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("evolve", help="band populations under the force")
    common(p, force=True)
    timing(p)
    p.add_argument("--nbands", type=int, default=5)
    p.add_argument("--band", type=int, default=1, help="start in this band")
    p.add_argument("--equal", help="start in an equal superposition, e.g. 1,2,3,4")
    p.add_argument("--weights", help="complex start amplitudes, e.g. 1,0,1j,0,0")
    p.add_argument("--k0", type=float, default=0.0)
    p.add_argument("--observer-stride", type=float,
                   help="sampling interval (tau_B); rows = floor(duration/stride) + 1")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("transition", help="transition probabilities over an A2 range")
    common(p, force=True, a2_range=True)
    p.add_argument("--mode", choices=["auto", "full", "isolated"], default="auto")
    p.add_argument("--no-lz", action="store_true", help="skip the Landau-Zener estimates")
    p.set_defaults(func=cmd_transition)

    p = sub.add_parser("width", help="transition half-widths")
    common(p, force=True, a2_range=True)
    p.add_argument("--pair", default="12")
    p.add_argument("--threshold", type=float, default=0.005)
    p.set_defaults(func=cmd_width)

    p = sub.add_parser("overlap", help="overlap map of neighbouring transition regions")
    common(p, force=True, a2_range=True)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("gapscan", help="gap statistics over a phase range")
    common(p)
    p.add_argument("--nk", type=int, default=1025)
    p.set_defaults(func=cmd_gapscan)

    p = sub.add_parser("density", help="real-space density of a Gaussian packet")
    common(p, force=True)
    timing(p, duration_default=1.0)
    p.add_argument("--sigma", type=float, default=0.4, help="momentum spread (k_r)")
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--band", type=int, default=1)
    p.add_argument("--nbands", type=int, default=5)
    p.add_argument("--k0", type=float, default=0.0)
    p.add_argument("--nt", type=int, default=41)
    p.add_argument("--xmin", type=float, default=-40.0)
    p.add_argument("--xmax", type=float, default=40.0)
    p.add_argument("--nx", type=int, default=1601)
    p.add_argument("--method", choices=["adiabatic", "ode"], default="adiabatic")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("control", help="run a parameter schedule")
    common(p, lattice=False)
    p.set_defaults(out=None)
    p.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--schedule", help="schedule JSON file")
    p.add_argument("--mode", choices=["reproject", "carryover"])
    p.add_argument("--compare-modes", action="store_true", help="run both switch modes")
    p.add_argument("--report", default="-", help="report JSON (default stdout)")
    p.add_argument("--rtol", type=float, default=1e-9)
    p.add_argument("--atol", type=float, default=1e-12)
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("rerun", help="repeat a run from its manifest and compare outputs")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_rerun, cutoff=DEFAULT_CUTOFF, workers=1)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "workers", None) is None:
            args.workers = _default_workers()
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if getattr(args, "cutoff", DEFAULT_CUTOFF) < 10:
            raise ConfigError("--cutoff must be >= 10")
        code = args.func(args, argv)
        return 0 if code is None else int(code)
    except (ConfigError, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BandSolverError, PropagationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the exit flush
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
