import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from superlattice.control import PRESETS, scenario_25_75
from superlattice.io import (ScheduleError, RunManifest, fmt, load_schedule, parse_angle,
                             parse_range, read_csv, schedule_from_dict, schedule_to_dict,
                             sha256_file, validate_schedule, write_bands_csv, write_sweep_csv,
                             write_table)


@pytest.mark.parametrize("text,value", [
    ("pi/8", math.pi / 8), ("-3pi/16", -3 * math.pi / 16), ("pi", math.pi), ("2*pi/5", 2 * math.pi / 5),
    ("0.3926990817", 0.3926990817), ("0", 0.0), (" PI / 4 ", math.pi / 4), (0.5, 0.5),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize("text", ["pie", "pi/0", "", "1/pi"])
def test_parse_angle_rejects(text):
    with pytest.raises(ValueError):
        parse_angle(text)


def test_parse_range_forms():
    assert parse_range("1.5") == [1.5]
    assert np.allclose(parse_range("0.25:3:0.25"), np.arange(1, 13) * 0.25)
    assert len(parse_range("0.25:3:0.05")) == 56
    r = parse_range("0:pi/8:64", angle=True)
    assert len(r) == 64 and r[-1] == pytest.approx(math.pi / 8)
    assert parse_range("1.95,2.72") == [1.95, 2.72]
    assert parse_range("0,pi/8", angle=True) == [0.0, pytest.approx(math.pi / 8)]
    with pytest.raises(ValueError):
        parse_range("1:2")
    with pytest.raises(ValueError):
        parse_range("2:1:0.1")
    with pytest.raises(ValueError):
        parse_range("1:2:0")


@given(st.floats(-1e300, 1e300, allow_nan=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_csv_single_header_full_precision(tmp_path):
    p = tmp_path / "b.csv"
    k = np.linspace(-1, 1, 3)
    e = np.array([[1 / 3, 2 / 3], [0.1, 0.2], [1 / 7, 1e-300]])
    write_bands_csv(p, k, e)
    lines = p.read_text().splitlines()
    assert lines[0] == "k,E_1,E_2"
    assert len(lines) == 4
    header, rows = read_csv(p)
    assert np.array_equal(rows, np.column_stack([k, e]))


def test_sweep_csv_columns(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep_csv(p, [{"A2": 1.0, "T12": 0.5, "T23": 0.1, "T34": 0.7,
                         "P_LZ_12": 0.4, "P_LZ_23": math.nan, "P_LZ_34": 0.6}])
    header, rows = read_csv(p)
    assert header == ["A2", "T12", "T23", "T34", "P_LZ_12", "P_LZ_23", "P_LZ_34"]
    assert np.isnan(rows[0, 5])


def test_table_to_stdout(capsys):
    write_table("-", ["a", "b"], [[1, True]])
    assert capsys.readouterr().out == "a,b\n1.0,1\n"


def test_schedule_round_trip(tmp_path):
    for name in ("1to4", "5050", "5050-two-step", "2575"):
        sch = PRESETS[name]()
        d = schedule_to_dict(sch)
        assert validate_schedule(d) == []
        back = schedule_from_dict(json.loads(json.dumps(d)))
        assert back.initial == sch.initial and back.force == sch.force
        assert back.steps == sch.steps and back.stop == sch.stop
        assert back.target == sch.target and back.duration == sch.duration
        assert np.allclose(back.distribution.weights, sch.distribution.weights)


def test_schedule_angles_as_text(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({
        "initial": {"A1": 2, "A2": 0.584, "phi": "pi/8"}, "force": 0.05, "duration": 1.2,
        "distribution": {"equal": [1, 3]},
        "steps": [{"trigger": {"kind": "time", "t": 0.72}, "params": {"A1": 0.5, "A2": 0.25}}],
    }))
    sch = load_schedule(p)
    assert sch.initial.phi == pytest.approx(math.pi / 8)
    assert np.allclose(np.abs(sch.distribution.weights) ** 2, [0.5, 0, 0.5, 0, 0])
    assert sch.steps[0].trigger.t == 0.72


def test_schedule_errors_name_paths():
    bad = {"initial": {"A1": -1, "A2": 0.5}, "force": 0, "duration": 1,
           "steps": [{"trigger": {"kind": "time"}, "params": {"A1": 1, "A2": 1, "x": 2}}]}
    with pytest.raises(ScheduleError) as exc:
        schedule_from_dict(bad)
    text = "\n".join(exc.value.errors)
    assert "initial/A1" in text
    assert "force" in text
    assert "steps/0/trigger" in text
    assert "steps/0/params" in text


def test_schedule_bad_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{nope")
    with pytest.raises(ScheduleError):
        load_schedule(p)


def test_schedule_weight_count_checked():
    with pytest.raises(ScheduleError):
        schedule_from_dict({"initial": {"A1": 1, "A2": 1}, "force": 0.1, "duration": 1,
                            "bands": 5, "distribution": {"weights": [1, 0]}})


def test_manifest_round_trip(tmp_path):
    out = tmp_path / "x.csv"
    out.write_text("a\n1\n")
    m = RunManifest(tool_version="0", command="bands", argv=["bands"], config={"A1": 1.0},
                    tolerances={"rtol": 1e-9}, cutoff=25)
    m.add_output(out)
    path = tmp_path / "m.json"
    m.write(path)
    back = RunManifest.load(path)
    assert back == m
    assert back.outputs[str(out)] == sha256_file(out)
    assert back.verify() == {str(out): True}
    out.write_text("a\n2\n")
    assert back.verify() == {str(out): False}


def test_schedule_to_dict_rejects_gaussian():
    sch = scenario_25_75()
    from dataclasses import replace
    from superlattice.dynamics import InitialDistribution
    g = replace(sch, distribution=InitialDistribution.pure(1, kind="gaussian", sigma=0.4))
    with pytest.raises(ValueError):
        schedule_to_dict(g)
