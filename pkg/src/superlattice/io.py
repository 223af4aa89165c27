"""CSV writers, schedule files and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from .units import ForceSpec, LatticeParams


def fmt(x) -> str:
    """Full-precision, locale-independent number formatting."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if x is None:
        return "nan"
    return repr(float(x))


@contextmanager
def _open_out(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_table(path, header, rows) -> None:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_bands_csv(path, k, energies) -> None:
    energies = np.atleast_2d(energies)
    header = ["k"] + [f"E_{i + 1}" for i in range(energies.shape[1])]
    write_table(path, header, (np.concatenate([[kk], e]) for kk, e in zip(k, energies)))


def write_trajectory_csv(path, traj) -> None:
    pops = traj.populations
    header = ["t", "t_over_tauB", "k"] + [f"pop_{i + 1}" for i in range(pops.shape[1])]
    rows = (np.concatenate([[t, t / traj.tau_B, k], p]) for t, k, p in zip(traj.t, traj.k, pops))
    write_table(path, header, rows)


def write_density_csv(path, x, t, density) -> None:
    rows = ((xx, tt, density[i, j]) for i, tt in enumerate(t) for j, xx in enumerate(x))
    write_table(path, ["x", "t", "density"], rows)


SWEEP_COLUMNS = ["A2", "T12", "T23", "T34", "P_LZ_12", "P_LZ_23", "P_LZ_34"]
OVERLAP_COLUMNS = ["A1", "A2", "overlap_12_23", "overlap_23_34", "phi"]


def write_sweep_csv(path, rows) -> None:
    write_table(path, SWEEP_COLUMNS, ([r.get(c, math.nan) for c in SWEEP_COLUMNS] for r in rows))


def write_overlap_csv(path, rows) -> None:
    write_table(path, OVERLAP_COLUMNS, ([r.get(c, math.nan) for c in OVERLAP_COLUMNS] for r in rows))


def read_csv(path):
    """Header and float rows of a CSV written by this module."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    return header, data


# --- angles and ranges ----------------------------------------------------------

_PI_FRACTION = re.compile(r"^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?\s*$", re.I)


def parse_angle(text) -> float:
    """Radians from a number or a ``pi`` fraction such as ``pi/8`` or ``-3pi/16``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip()
    m = _PI_FRACTION.match(s)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        num = float(m.group(2)) if m.group(2) else 1.0
        den = float(m.group(3)) if m.group(3) else 1.0
        if den == 0:
            raise ValueError(f"zero denominator in angle {text!r}")
        return sign * num * math.pi / den
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"cannot parse angle {text!r}") from None


def parse_range(text, angle: bool = False) -> list:
    """Values from ``a``, ``a,b,...``, ``a:b:step`` or ``a:b:count``.

    An integer third field (no decimal point) is a point count including
    both ends; otherwise it is a step and ``b`` is included when it lies on
    the grid (within 1e-9 of a step).
    """
    conv = parse_angle if angle else float
    if "," in str(text):
        return [v for item in str(text).split(",") for v in parse_range(item, angle)]
    parts = str(text).split(":")
    if len(parts) == 1:
        return [conv(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"range must be 'a' or 'a:b:step', got {text!r}")
    a, b = conv(parts[0]), conv(parts[1])
    third = parts[2].strip()
    if re.fullmatch(r"\d+", third):
        n = int(third)
        if n < 1:
            raise ValueError("point count must be >= 1")
        return [a] if n == 1 else list(np.linspace(a, b, n))
    step = float(third)
    if not step > 0:
        raise ValueError("range step must be positive")
    if b < a:
        raise ValueError("range end must not be below its start")
    n = int(math.floor((b - a) / step + 1e-9))
    return [a + i * step for i in range(n + 1)]


# --- schedules --------------------------------------------------------------------

_NUM_OR_ANGLE = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_PARAMS = {
    "type": "object",
    "required": ["A1", "A2"],
    "properties": {"A1": {"type": "number", "minimum": 0}, "A2": {"type": "number", "minimum": 0},
                   "phi": _NUM_OR_ANGLE},
    "additionalProperties": False,
}
_POPS = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}}
_TRIGGER = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["time", "population", "quasimomentum", "peak"]},
        "t": {"type": "number", "minimum": 0},
        "unit": {"enum": ["tau", "hbar"]},
        "band": {"type": "integer", "minimum": 1},
        "level": {"type": "number", "minimum": 0, "maximum": 1},
        "direction": {"enum": ["up", "down", "either"]},
        "relative_to": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "k": {"type": "number", "minimum": -1, "maximum": 1},
        "after": {"type": "number", "minimum": 0},
        "before": {"type": "number", "minimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "time"}}}, "then": {"required": ["t"]}},
        {"if": {"properties": {"kind": {"const": "population"}}},
         "then": {"required": ["band", "level"]}},
        {"if": {"properties": {"kind": {"const": "quasimomentum"}}}, "then": {"required": ["k"]}},
        {"if": {"properties": {"kind": {"const": "peak"}}}, "then": {"required": ["band"]}},
    ],
    "additionalProperties": False,
}

SCHEDULE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["initial", "force", "duration"],
    "properties": {
        "name": {"type": "string"},
        "initial": _PARAMS,
        "force": {"oneOf": [
            {"type": "number", "exclusiveMinimum": 0},
            {"type": "object", "required": ["f"],
             "properties": {"f": {"type": "number", "exclusiveMinimum": 0},
                            "direction": {"enum": [1, -1]}},
             "additionalProperties": False}]},
        "bands": {"type": "integer", "minimum": 2},
        "distribution": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["dirac"]},
                "k0": {"type": "number"},
                "weights": {"type": "array", "minItems": 1, "items": {"oneOf": [
                    {"type": "number"},
                    {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}},
                "equal": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            },
            "additionalProperties": False,
        },
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["reproject", "carryover"]},
        "steps": {"type": "array", "items": {
            "type": "object", "required": ["trigger", "params"],
            "properties": {"trigger": _TRIGGER, "params": _PARAMS, "label": {"type": "string"},
                           "expect": _POPS},
            "additionalProperties": False}},
        "stop": {"oneOf": [{"type": "null"}, _TRIGGER]},
        "target": _POPS,
    },
    "additionalProperties": False,
}


class ScheduleError(ValueError):
    """Schedule file problems; ``errors`` lists ``path: message`` strings."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid schedule:\n  " + "\n  ".join(self.errors))


def validate_schedule(data) -> list:
    v = jsonschema.Draft202012Validator(SCHEDULE_SCHEMA)
    out = []
    for err in sorted(v.iter_errors(data), key=lambda e: list(e.absolute_path)):
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{path}: {err.message}")
    return out


def _params(d) -> LatticeParams:
    return LatticeParams(float(d["A1"]), float(d["A2"]), parse_angle(d.get("phi", 0.0)))


def _trigger(d):
    from .control import AtQuasimomentum, AtTime, PopulationPeak, PopulationThreshold
    kind = d["kind"]
    if kind == "time":
        return AtTime(float(d["t"]), d.get("unit", "tau"))
    if kind == "population":
        rel = d.get("relative_to")
        return PopulationThreshold(int(d["band"]), float(d["level"]), d.get("direction", "up"),
                                   tuple(rel) if rel else None)
    if kind == "quasimomentum":
        return AtQuasimomentum(float(d["k"]))
    return PopulationPeak(int(d["band"]), float(d.get("after", 0.0)),
                          float(d.get("before", math.inf)))


def schedule_from_dict(data):
    """Validate and build a :class:`~superlattice.control.Schedule`."""
    from .control import Schedule, Step
    from .dynamics import InitialDistribution

    errors = validate_schedule(data)
    if errors:
        raise ScheduleError(errors)
    nb = int(data.get("bands", 5))
    f = data["force"]
    force = ForceSpec(float(f), 1) if not isinstance(f, dict) else \
        ForceSpec(float(f["f"]), int(f.get("direction", 1)))
    dd = data.get("distribution", {})
    k0 = float(dd.get("k0", 0.0))
    try:
        if "equal" in dd:
            dist = InitialDistribution.equal(dd["equal"], nb, k0=k0)
        elif "weights" in dd:
            w = [complex(*v) if isinstance(v, list) else complex(v) for v in dd["weights"]]
            if len(w) != nb:
                raise ScheduleError([f"distribution/weights: expected {nb} entries, got {len(w)}"])
            dist = InitialDistribution(tuple(w), k0=k0)
        else:
            dist = InitialDistribution.pure(1, nb, k0=k0)
        steps = [Step(_trigger(s["trigger"]), _params(s["params"]), s.get("label", ""),
                      tuple(s["expect"]) if "expect" in s else None)
                 for s in data.get("steps", [])]
        stop = data.get("stop")
        return Schedule(initial=_params(data["initial"]), force=force, distribution=dist,
                        duration=float(data["duration"]), steps=steps,
                        stop=_trigger(stop) if stop else None,
                        target=tuple(data["target"]) if "target" in data else None,
                        mode=data.get("mode", "reproject"), name=data.get("name", "custom"))
    except ScheduleError:
        raise
    except (ValueError, IndexError) as exc:
        raise ScheduleError([f"<root>: {exc}"]) from exc


def load_schedule(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScheduleError([f"<file>: not valid JSON ({exc})"]) from exc
    return schedule_from_dict(data)


def _trigger_dict(tr) -> dict:
    from .control import AtQuasimomentum, AtTime, PopulationPeak, PopulationThreshold
    if isinstance(tr, AtTime):
        return {"kind": "time", "t": tr.t, "unit": tr.unit}
    if isinstance(tr, PopulationThreshold):
        d = {"kind": "population", "band": tr.band, "level": tr.level, "direction": tr.direction}
        if tr.relative_to:
            d["relative_to"] = list(tr.relative_to)
        return d
    if isinstance(tr, AtQuasimomentum):
        return {"kind": "quasimomentum", "k": tr.k}
    if isinstance(tr, PopulationPeak):
        d = {"kind": "peak", "band": tr.band, "after": tr.after}
        if math.isfinite(tr.before):
            d["before"] = tr.before
        return d
    raise TypeError(tr)


def schedule_to_dict(schedule) -> dict:
    dist = schedule.distribution
    if dist.kind != "dirac":
        raise ValueError("only Dirac distributions can be written to a schedule file")
    w = [[v.real, v.imag] if v.imag else v.real for v in dist.weights]
    d = {
        "name": schedule.name,
        "initial": schedule.initial.as_dict(),
        "force": {"f": schedule.force.f, "direction": schedule.force.direction},
        "bands": dist.n_bands,
        "distribution": {"kind": "dirac", "k0": dist.k0, "weights": w},
        "duration": schedule.duration,
        "mode": schedule.mode,
        "steps": [],
        "stop": None if schedule.stop is None else _trigger_dict(schedule.stop),
    }
    for st in schedule.steps:
        s = {"trigger": _trigger_dict(st.trigger), "params": st.params.as_dict()}
        if st.label:
            s["label"] = st.label
        if st.expect is not None:
            s["expect"] = list(st.expect)
        d["steps"].append(s)
    if schedule.target is not None:
        d["target"] = list(schedule.target)
    return d


# --- manifests ------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Everything needed to rerun a command and check its outputs."""

    tool_version: str
    command: str
    argv: list
    config: dict
    tolerances: dict
    cutoff: int
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path) -> None:
        self.finished = self.finished or _now()
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> RunManifest:
        with open(path) as fh:
            return cls(**json.load(fh))

    def verify(self) -> dict:
        """Map each recorded output to whether its current digest matches."""
        return {p: Path(p).exists() and sha256_file(p) == d for p, d in self.outputs.items()}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, default=_json_default)
    with _open_out(path) as fh:
        fh.write(text + "\n")
