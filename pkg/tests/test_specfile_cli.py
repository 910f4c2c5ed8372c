import json
import re

import pytest

from painleve import catalogue, cli, specfile
from painleve.errors import SpecError
from painleve.operators import robertson_check
from conftest import ALL, spec_named


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------------------
# spec files


@pytest.mark.parametrize("name", ALL)
def test_round_trip_is_byte_identical(name, tmp_path):
    s = spec_named(name)
    text = specfile.dumps(s)
    back = specfile.loads(text)
    assert specfile.dumps(back) == text
    assert specfile.spec_hash(back) == specfile.spec_hash(s)
    path = tmp_path / "s.json"
    specfile.dump(s, path)
    assert path.read_text() == text
    assert back.variables == s.variables and back.chart.blocks == s.chart.blocks


def _doc(name="euclidean3"):
    return json.loads(specfile.dumps(spec_named(name)))


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d.pop("chart"), "missing key 'chart'"),
    (lambda d: d.update(schema="v9"), "unsupported schema"),
    (lambda d: d["chart"]["blocks"].pop(), "partition"),
    (lambda d: d["chart"]["domain"].pop("x2"), "no interval"),
    (lambda d: d["stackel"][0].__setitem__(0, "sin(x1"), "stackel[0][0]"),
    (lambda d: d["stackel"][0].__setitem__(0, ["x1"]), "expected an expression string"),
    (lambda d: d["chart"]["domain"].__setitem__("x1", ["a", 1]), "pairs of numbers"),
    (lambda d: d.update(conformal={"c": "1"}), "conformal"),
])
def test_malformed_documents(mutate, fragment):
    doc = _doc()
    mutate(doc)
    with pytest.raises(SpecError, match=re.escape(fragment)):
        specfile.spec_from_dict(doc)


def test_invalid_json_and_missing_file(tmp_path):
    with pytest.raises(SpecError, match="invalid JSON"):
        specfile.loads("{not json")
    with pytest.raises(SpecError, match="cannot read"):
        specfile.load(tmp_path / "absent.json")


def test_numbers_accepted_as_constants():
    doc = _doc()
    doc["stackel"][0][0] = 2
    s = specfile.spec_from_dict(doc)
    assert specfile.spec_from_dict(json.loads(specfile.dumps(s))).stackel[0][0] is s.stackel[0][0]


# ---------------------------------------------------------------------------
# exit codes


def test_report_flat_exits_zero(capsys):
    code, out, _ = run(capsys, "report", "--example", "euclidean3")
    assert code == 0
    assert "0 failed" in out


def test_violator_exits_one_with_location(capsys):
    code, out, _ = run(capsys, "robertson", "--example", "robertson_violator", "--json", "-")
    assert code == 1
    doc = json.loads(out)
    diff = next(c for c in doc["checks"] if c["name"] == "robertson_differential")
    assert diff["verdict"] == "fail"
    assert set(diff["detail"]) == {"alpha", "beta", "i", "j"}
    assert diff["detail"]["alpha"] != diff["detail"]["beta"]
    assert len(diff["worst_point"]) == 3
    assert diff["max_residual"] > 1e-3


def test_text_output_names_worst_point(capsys):
    code, out, _ = run(capsys, "robertson", "--example", "robertson_violator")
    assert code == 1
    assert "FAIL  robertson_differential" in out and " at (" in out and "alpha=" in out


def test_vandermonde_ricci_exits_zero(capsys):
    code, out, _ = run(capsys, "ricci", "--example", "vandermonde3", "--json", "-")
    assert code == 0
    checks = {c["name"]: c for c in json.loads(out)["checks"]}
    assert checks["ricci_offblock"]["max_residual"] < 1e-8
    assert checks["ricci_closed_form"]["verdict"] == "pass"


@pytest.mark.parametrize("argv", [
    ("report", "--example", "no_such_entry"),
    ("validate",),
    ("validate", "x.json", "--example", "euclidean3"),
    ("validate", "--example", "euclidean3", "--samples", "0"),
    ("validate", "--example", "euclidean3", "--tol-scale", "0"),
    ("geodesic", "--example", "euclidean3", "--time", "1e-5"),
    ("dump", "no_such_entry"),
])
def test_input_errors_exit_two(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("painleve: input error")
    assert out == ""


def test_bad_json_and_bad_syntax_exit_two(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "validate", str(bad))[0] == 2
    doc = _doc()
    doc["block_metrics"][0][0][0] = "1 +* x1"
    bad.write_text(json.dumps(doc))
    code, _, err = run(capsys, "validate", str(bad))
    assert code == 2 and "block_metrics[0][0][0]" in err
    assert run(capsys, "validate", str(tmp_path / "absent.json"))[0] == 2


def test_numerical_breakdown_exits_three(capsys, tmp_path):
    doc = _doc()
    doc["stackel"][0][0] = "1/x1"  # singular at the chart centre, where geodesics start
    path = tmp_path / "singular.json"
    path.write_text(json.dumps(doc))
    code, out, err = run(capsys, "geodesic", str(path))
    assert code == 3
    assert err.startswith("painleve: numerical failure") and out == ""


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 2


# ---------------------------------------------------------------------------
# reports


def test_report_json_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "report", "--example", "liouville2d", "--json", str(a))[0] == 0
    assert run(capsys, "report", "--example", "liouville2d", "--json", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["spec_hash"] == specfile.spec_hash(spec_named("liouville2d"))
    assert doc["summary"]["fail"] == 0
    assert sum(doc["summary"].values()) == len(doc["checks"])


def test_spec_file_and_example_give_same_report(capsys, tmp_path):
    path = tmp_path / "w.json"
    assert run(capsys, "dump", "warped3") == (0, specfile.dumps(spec_named("warped3")), "")
    path.write_text(specfile.dumps(spec_named("warped3")))
    _, from_file, _ = run(capsys, "killing", str(path), "--json", "-")
    _, from_example, _ = run(capsys, "killing", "--example", "warped3", "--json", "-")
    assert from_file == from_example


def test_tol_scale_tightens_verdicts(capsys):
    code, out, _ = run(capsys, "commute", "--example", "liouville2d", "--json", "-")
    base = json.loads(out)["checks"][0]
    assert code == 0 and base["max_residual"] > 0
    code, out, _ = run(capsys, "commute", "--example", "liouville2d", "--tol-scale", "1e-20", "--json", "-")
    tight = json.loads(out)
    assert code == 1
    assert tight["tol_scale"] == 1e-20
    assert tight["checks"][0]["tolerance"] == pytest.approx(base["tolerance"] * 1e-20)


def test_seed_and_samples_recorded(capsys):
    _, out, _ = run(capsys, "validate", "--example", "sphere2", "--seed", "7", "--samples", "9", "--json", "-")
    doc = json.loads(out)
    assert doc["seed"] == 7 and doc["samples"] == 9 and doc["command"] == "validate"


def test_list_names_every_entry(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    names = [line.split()[0] for line in out.splitlines()]
    assert names == ALL


# ---------------------------------------------------------------------------
# catalogue records agree with the checks


@pytest.mark.parametrize("name", ALL)
def test_catalogue_robertson_flag_matches_verdicts(name, capsys):
    entry = catalogue.CATALOGUE[name]
    assert robertson_check(spec_named(name)).passed == entry.robertson
    code, _, _ = run(capsys, "robertson", "--example", name)
    assert code == (0 if entry.robertson else 1)
    code, out, _ = run(capsys, "ricci", "--example", name, "--json", "-")
    off = next(c for c in json.loads(out)["checks"] if c["name"] == "ricci_offblock")
    assert (off["verdict"] == "pass") == entry.robertson


@pytest.mark.parametrize("name", ALL)
def test_catalogue_entries_are_painleve(name, capsys):
    assert catalogue.CATALOGUE[name].painleve
    code, out, _ = run(capsys, "validate", "--example", name, "--json", "-")
    assert code == 0
