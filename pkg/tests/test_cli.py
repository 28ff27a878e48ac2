import json
import math
import subprocess
import sys

import pytest

from hjpath.cli import main
from hjpath.report import AnalysisReport, analyze
from hjpath.symexpr import is_zero, simplify

from conftest import load, shipped_text

SECOND_IC = "q1=0,q2=0,q3=0,p1=0,p2=-0.5,p3=0.5"


@pytest.fixture
def files(tmp_path):
    out = {}
    for name in ("first_class", "second_class", "radial"):
        p = tmp_path / f"{name}.hjs"
        p.write_text(shipped_text(name))
        out[name] = str(p)
    bad = tmp_path / "inconsistent.hjs"
    bad.write_text("[system]\ncoordinates = q\nlagrangian = q\n")
    out["inconsistent"] = str(bad)
    return out


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_analyze_first_class(capsys, files):
    code, out, _ = run(capsys, "analyze", files["first_class"])
    assert code == 0
    assert "verdict: integrable" in out
    assert "independent parameters: 2 (t, q2)" in out


def test_analyze_second_class_json(capsys, files):
    code, out, _ = run(capsys, "analyze", files["second_class"], "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert d["verdict"] == "integrable-after-determination"
    assert len(d["generated"]) == 1
    assert d["determinations"] == {"q2": "4*p3 - 4*q3 + 1"}


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "analyze", str(tmp_path / "missing.hjs"))
    assert code == 1 and "cannot read file" in err


def test_shipped_fallback(capsys):
    code, out, err = run(capsys, "analyze", "examples/first_class.hjs")
    assert code == 0 and "shipped first_class" in err and "verdict: integrable" in out


def test_parse_error_exit_code(capsys, tmp_path):
    p = tmp_path / "bad.hjs"
    p.write_text("[system]\ncoordinates = q\nlagrangian = q_dot^2 + w\n")
    code, _, err = run(capsys, "analyze", str(p))
    assert code == 1 and "undeclared symbol w at line 3" in err


def test_usage_error_exit_code(capsys, files):
    with pytest.raises(SystemExit) as info:
        main(["analyze"])
    assert info.value.code == 1
    code, _, err = run(capsys, "analyze", files["radial"], "--transform", "polar")
    assert code == 1 and "unknown transformation" in err


def test_inconsistent_exit_code(capsys, files):
    code, out, _ = run(capsys, "analyze", files["inconsistent"])
    assert code == 2 and "verdict: inconsistent" in out


def test_json_round_trip(capsys, files):
    for name in ("first_class", "second_class", "radial"):
        _, out, _ = run(capsys, "analyze", files[name], "--format", "json")
        rep = AnalysisReport.from_json(out)
        direct = AnalysisReport.from_analysis(analyze(load(name)))
        assert rep.equivalent(direct)
        assert rep.to_json() == out


def test_json_round_trip_expressions_are_equal(capsys, files):
    _, out, _ = run(capsys, "analyze", files["second_class"], "--format", "json")
    rep = AnalysisReport.from_json(out)
    direct = AnalysisReport.from_analysis(analyze(load("second_class")))
    for a, b in zip(rep.constraints, direct.constraints):
        assert is_zero(simplify(a["body"] - b["body"])).proven


def test_machine_output_is_byte_identical(capsys, files):
    outs = [run(capsys, "analyze", files["radial"], "--transform", "radial", "--format", "json")[1]
            for _ in range(2)]
    assert outs[0] == outs[1]
    outs = [run(capsys, "propagator", files["radial"], "--transform", "radial", "--regime", "euclidean",
                "--potential", "V(u)=u/2", "--sweeps", "2000", "--slices", "16", "--seed", "4",
                "--format", "json")[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_transform_command(capsys, files):
    code, out, _ = run(capsys, "transform", files["radial"], "--transform", "radial")
    assert code == 0
    assert "canonical (proven)" in out
    assert "K'_0 = P_R^2/2 + p0 + V(R^2)" in out
    code, out, _ = run(capsys, "transform", files["radial"], "--transform", "radial", "--format", "json")
    d = json.loads(out)
    assert d["certificate"]["passed"] and d["certificate"]["domain"] == ["R^2 - y^2 - z^2 > 0"]


def test_integrate_command(capsys, files, tmp_path):
    dest = tmp_path / "traj.txt"
    code, _, _ = run(capsys, "integrate", files["second_class"], "--param", "determined", "--ic", SECOND_IC,
                     "--t0", "0", "--t1", "1", "--step", "0.001", "--output", str(dest))
    assert code == 0
    lines = dest.read_text().splitlines()
    assert lines[0] == "t q2 q1 q3 p1 p2 p3 Z"
    assert len(lines) == 1002


def test_integrate_off_surface(capsys, files):
    code, _, err = run(capsys, "integrate", files["second_class"], "--param", "determined",
                       "--ic", "q1=0,q2=0,q3=0,p1=0,p2=-0.5,p3=0.7")
    assert code == 2 and "H'_q2" in err and "residual" in err


def test_integrate_bad_ic(capsys, files):
    code, _, err = run(capsys, "integrate", files["second_class"], "--ic", "q1")
    assert code == 1 and "malformed" in err


def test_action_command(capsys, files):
    code, out, _ = run(capsys, "action", files["first_class"], "--const", "a1=1,a2=2,b=1/2,c=1",
                       "--param", "q2=0.4*t", "--ic", "q1=0,p1=0.8,q3=0,p3=-0.4", "--t1", "1.5",
                       "--format", "json")
    assert code == 0
    want = (-1 + 0.8 ** 2 / 2 - 0.4 ** 2 / 4) * 1.5 + 0.5 * 0.4 * 1.5
    assert json.loads(out)["action"] == pytest.approx(want, rel=1e-12)


def test_zero_length_action(capsys, files):
    code, out, _ = run(capsys, "action", files["second_class"], "--ic", SECOND_IC, "--t0", "0.5", "--t1", "0.5")
    assert code == 0 and out == "Z = 0\n"


def test_action_needs_constants(capsys, files):
    code, _, err = run(capsys, "action", files["first_class"], "--param", "q2=t",
                       "--ic", "q1=0,p1=0,q3=0,p3=0")
    assert code == 1 and "unbound" in err


def test_propagator_harmonic(capsys, files):
    code, out, _ = run(capsys, "propagator", files["radial"], "--transform", "radial",
                       "--potential", "V(u)=u/2", "--slices", "256",
                       "--from", "R=0,y=0,z=0", "--to", "R=0,y=0,z=0", "--format", "json")
    assert code == 0
    d = json.loads(out)
    want = (1 / (2j * math.pi * math.sin(1.0))) ** 0.5
    got = complex(d["value"]["re"], d["value"]["im"])
    assert d["regime"] == "gaussian-exact" and d["n_sequence"] == [16, 32, 64, 128, 256]
    assert abs(got - want) / abs(want) < 1e-8


def test_propagator_interp(capsys, files):
    common = ["propagator", files["first_class"], "--const", "a1=1,a2=2,b=1/2,c=1", "--slices", "64",
              "--from", "q1=0,q3=0.2,q2=0.1", "--to", "q1=0.5,q3=-0.3,q2=0.7", "--format", "json"]
    vals = []
    for profile in ("q2=linear", "q2=3*s^2-2*s^3"):
        d = json.loads(run(capsys, *common, "--interp", profile)[1])
        vals.append(complex(d["value"]["re"], d["value"]["im"]))
    assert abs(vals[0] - vals[1]) < 1e-12


def test_installed_script():
    proc = subprocess.run([sys.executable, "-m", "hjpath.cli", "analyze", "first_class"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and "verdict: integrable" in proc.stdout
