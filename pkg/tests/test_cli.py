import json
import subprocess
import sys

import jsonschema
import pytest

from filippov_contraction.cli import main
from filippov_contraction.reports import SCHEMAS
from filippov_contraction.system import load_system, system_to_dict
from filippov_contraction.registry import build, example_names


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def load(path):
    with open(path) as fh:
        return json.load(fh)


def validate(doc):
    jsonschema.validate(doc, SCHEMAS[doc["report"]])


def test_certify_example1(capsys, tmp_path):
    code, out, _ = run(capsys, "certify", "ex1", "--metric", "l1", "--box", "-5:5,-5:5", "--out", str(tmp_path))
    assert code == 0 and "verdict: certified" in out
    doc = load(tmp_path / "certificate.json")
    validate(doc)
    assert doc["rates"]["c"] == 4.0 and doc["verdict"] == "certified"


def test_certify_example4_reports_rate_and_planar_remark(capsys, tmp_path):
    code, out, _ = run(capsys, "certify", "ex4", "--metric", "l1", "--out", str(tmp_path))
    assert code == 0
    doc = load(tmp_path / "certificate.json")
    validate(doc)
    assert doc["rates"]["c"] == 1.0 and doc["no_limit_cycle"]["holds"] is True


def test_certify_refuted_and_inconclusive_exit_codes(capsys):
    code, out, _ = run(capsys, "certify", "ex2", "--box", "-5:5,-3:3")
    assert code == 1 and "refuted-at-witness" in out
    code, out, _ = run(capsys, "certify", "ex1", "--box", "-1:1,1:2")
    assert code == 2 and "inconclusive" in out


def test_certify_with_weight_files(capsys, tmp_path):
    (tmp_path / "d.json").write_text("[1, 2]")
    (tmp_path / "p.json").write_text('{"P": [[2, 0], [0, 1]]}')
    assert run(capsys, "certify", "ex4", "--weight", str(tmp_path / "d.json"))[0] in (0, 1)
    assert run(capsys, "certify", "ex4", "--metric", "l2", "--weight", str(tmp_path / "p.json"))[0] in (0, 1)
    (tmp_path / "bad.json").write_text("[[1, 1], [0, 1]]")
    code, _, err = run(capsys, "certify", "ex4", "--weight", str(tmp_path / "bad.json"))
    assert code == 3 and "--weight" in err


def test_decay_example3(capsys, tmp_path):
    code, out, _ = run(capsys, "decay", "ex3", "--x0", "4,4", "--y0", "3,-1", "--rate", "1", "--out", str(tmp_path))
    assert code == 0
    doc = load(tmp_path / "decay.json")
    validate(doc)
    assert doc["max_ratio"] <= 1.02
    assert (tmp_path / "decay.csv").read_text().splitlines()[0] == "t,distance,envelope,ratio"


def test_simulate_outputs(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "ex1", "--x0", "2,2", "--tspan", "0:1", "--out", str(tmp_path))
    assert code == 0
    doc = load(tmp_path / "simulation.json")
    validate(doc)
    assert doc["events"] == 1 and doc["method"] == "filippov"
    lines = (tmp_path / "events.csv").read_text().splitlines()
    assert lines[0] == "t,kind" and lines[1].endswith(",enter-sliding") and len(lines) == 2
    code, _, _ = run(capsys, "simulate", "ex4", "--eps", "1e-2", "--tspan", "0:1", "--out", str(tmp_path / "r"))
    assert code == 0
    validate(load(tmp_path / "r" / "simulation.json"))


def test_sweep_entrain_and_search(capsys, tmp_path):
    code, _, _ = run(capsys, "sweep", "ex4", "--eps-list", "1e-2,1e-3,1e-4", "--out", str(tmp_path / "s"))
    assert code == 0
    validate(load(tmp_path / "s" / "sweep.json"))
    code, _, _ = run(capsys, "entrain", "ex3", "--tspan", "0:8", "--out", str(tmp_path / "e"))
    assert code == 0
    doc = load(tmp_path / "e" / "entrainment.json")
    validate(doc)
    assert doc["initial_conditions"] == 3
    code, out, _ = run(capsys, "search-metric", "ex4", "--family", "l2-factor", "--out", str(tmp_path / "m"))
    assert code == 0
    validate(load(tmp_path / "m" / "metric_search.json"))


def test_search_metric_none_found(capsys, tmp_path):
    spec = {"type": "relay", "A": [[-2, -1], [1, -3]], "b": [1, -3], "c": [0, 1]}
    (tmp_path / "r.json").write_text(json.dumps(spec))
    code, out, _ = run(capsys, "search-metric", str(tmp_path / "r.json"), "--family", "l2-factor")
    assert code == 2 and "no Euclidean weight" in out


def test_reports_are_bit_reproducible(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "certify", "ex2", "--out", str(tmp_path / d))[0] == 0
        assert run(capsys, "simulate", "ex3", "--tspan", "0:2", "--input", "6*sin(2*pi*t)", "--out", str(tmp_path / d))[0] == 0
    for name in ("certificate.json", "simulation.json", "trajectory.csv", "events.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("name", example_names())
def test_examples_dump_round_trip(capsys, tmp_path, name):
    assert run(capsys, "examples", "--dump", name, "--out", str(tmp_path))[0] == 0
    reloaded = load_system(tmp_path / f"{name}.json")
    assert system_to_dict(reloaded) == system_to_dict(build(name))


def test_examples_listing(capsys):
    code, out, _ = run(capsys, "examples")
    assert code == 0
    assert [line.split()[0] for line in out.splitlines()] == example_names()


@pytest.mark.parametrize(
    "argv, field",
    [
        (["certify", "nosuch"], "nosuch"),
        (["simulate", "ex1", "--x0", "1,2,3"], "--x0"),
        (["simulate", "ex1", "--tspan", "1:0"], "--tspan"),
        (["certify", "ex1", "--box", "1:0,0:1"], "box"),
        (["sweep", "ex1", "--eps-list", "1e-2,x"], "--eps-list"),
        (["decay", "ex1", "--bogus"], "--bogus"),
        ([], "subcommand"),
    ],
)
def test_usage_errors_name_the_field(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 3 and field in err


def test_malformed_definition_names_the_field(capsys, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"type": "pwa", "A1": [[1, 0], [0, 1]], "A2": [[1, 0]], "b1": [0, 0], "b2": [0, 0], "h": [0, 1]}))
    code, _, err = run(capsys, "certify", str(tmp_path / "bad.json"))
    assert code == 3 and "A2" in err
    (tmp_path / "nojson.json").write_text("{")
    code, _, err = run(capsys, "certify", str(tmp_path / "nojson.json"), "--box", "0:1,0:1")
    assert code == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "filippov_contraction", "examples"], capture_output=True, text=True)
    assert res.returncode == 0 and "ex1" in res.stdout
