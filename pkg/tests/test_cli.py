import json
import subprocess
import sys

import pytest

from haantjes import cli

DIAG = {
    "dim": 2,
    "operators": {"A": [["x1", "0"], ["0", "x2 + 3"]], "B": [["x2", "x1"], ["0", "1"]]},
    "points": [[0.1, 0.2], [0.5, -0.4]],
}


@pytest.fixture
def deffile(tmp_path):
    def write(doc, name="def.json"):
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=1))
        return str(path)

    return write


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_eval_reports_upper_components(deffile, capsys):
    code, out, err = run(["eval", "--file", deffile(DIAG), "--op", "A", "--tensor", "nijenhuis"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["result"]["vanishes"]
    assert set(rep["result"]["components"][0]) == {"1,1,2", "2,1,2"}
    assert len(rep["input"]["digest"]) == 64
    assert "timing_seconds" not in rep
    assert "nijenhuis" in err


@pytest.mark.parametrize("tensor,extra", [
    ("haantjes", []), ("fn", ["--op2", "B"]), ("binary", ["--op2", "B"]),
    ("binary-level", ["--op2", "B", "--level", "3"]), ("tau", ["--level", "2"]),
    ("tau-closed", ["--level", "2"]), ("delta", ["--op2", "B"]),
])
def test_every_tensor_kind_evaluates(tensor, extra, deffile, capsys):
    code, out, _ = run(["eval", "--file", deffile(DIAG), "--op", "A", "--tensor", tensor, *extra], capsys)
    assert code == 0
    assert json.loads(out)["result"]["tensor"] == tensor


def test_expect_zero_failure_exits_one(deffile, capsys):
    code, _, _ = run(["eval", "--file", deffile(DIAG), "--op", "B", "--tensor", "nijenhuis", "--expect-zero"],
                     capsys)
    assert code == cli.EXIT_FAILED


@pytest.mark.parametrize("argv", [
    ["eval", "--tensor", "nijenhuis"],
    ["eval", "--example", "golden", "--tensor", "fn"],
    ["eval", "--example", "golden", "--tensor", "tau"],
    ["eval", "--example", "golden", "--tensor", "bogus"],
    ["eval", "--example", "golden", "--tensor", "nijenhuis", "--op", "Q"],
    ["eval", "--example", "golden", "--tensor", "nijenhuis", "--points", "abc"],
    ["nonsense"],
])
def test_usage_errors_exit_two(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE


def test_parse_error_names_operator_entry_and_line(deffile, capsys):
    text = '{\n  "dim": 2,\n  "operators": {\n    "A": [["x1", "x2 +"], ["0", "x1"]]\n  }\n}\n'
    code, _, err = run(["eval", "--file", deffile(text), "--tensor", "nijenhuis"], capsys)
    assert code == cli.EXIT_USAGE
    assert ":4:" in err and "'A'" in err and "(1,2)" in err


def test_domain_error_exits_three(deffile, capsys):
    doc = {"dim": 2, "operators": {"A": [["ln(x1)", "0"], ["0", "1"]]}, "points": [[-1.0, 0.0]]}
    assert cli.main(["eval", "--file", deffile(doc), "--tensor", "nijenhuis"]) == cli.EXIT_DOMAIN


def test_complex_spectrum_exits_three(deffile, capsys):
    doc = {"dim": 2, "operators": {"R": [["0", "-1"], ["1", "0"]]}}
    assert cli.main(["spectrum", "--file", deffile(doc)]) == cli.EXIT_DOMAIN


def test_integrability_on_golden_example(capsys):
    code, out, err = run(["integrability", "--example", "golden"], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["scan"]["smallest_m"] == 3
    assert res["distributions"][0]["method"] == "frame"
    assert "verdict: integrable" in err


def test_inconclusive_exits_four(deffile, capsys):
    doc = {"dim": 3, "operators": {"G": [["x2", "x3*x3", "1"], ["x1", "0", "x2"], ["x3", "1", "x1*x2"]]}}
    assert cli.main(["integrability", "--file", deffile(doc), "--m-max", "2", "--points", "5"]) \
        == cli.EXIT_INCONCLUSIVE


def test_spectrum_reports_riesz_indices(capsys):
    code, out, _ = run(["spectrum", "--example", "golden"], capsys)
    reports = json.loads(out)["result"]["reports"]
    assert code == 0
    assert all([c["riesz_index"] for c in r["clusters"]] == [2, 1] for r in reports)


def test_random_points_spec(deffile, capsys):
    doc = {"dim": 2, "operators": {"A": DIAG["operators"]["A"]}, "points": {"random": {"count": 4, "seed": 3}}}
    _, out, _ = run(["eval", "--file", deffile(doc), "--tensor", "nijenhuis"], capsys)
    assert len(json.loads(out)["points"]) == 4


def test_points_flag_accepts_json_list(deffile, capsys):
    _, out, _ = run(["eval", "--file", deffile(DIAG), "--op", "A", "--tensor", "nijenhuis",
                     "--points", "[[1, 2], [3, 4], [5, 6]]"], capsys)
    assert json.loads(out)["points"] == [[1, 2], [3, 4], [5, 6]]


def test_out_file_and_timing(deffile, tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out, _ = run(["eval", "--file", deffile(DIAG), "--op", "A", "--tensor", "haantjes",
                        "--out", str(target), "--timing"], capsys)
    assert code == 0 and out == ""
    assert "timing_seconds" in json.loads(target.read_text())


@pytest.mark.parametrize("argv", [
    ["eval", "--example", "golden", "--tensor", "tau", "--level", "3", "--points", "7", "--seed", "5"],
    ["spectrum", "--example", "golden"],
    ["integrability", "--example", "golden"],
    ["probe", "--conjecture", "2", "--trials", "3", "--points", "5"],
    ["suite", "--trials", "1", "--dims", "2", "--points", "4"],
])
def test_reports_are_byte_stable(argv, capsys):
    _, first, _ = run(argv, capsys)
    _, second, _ = run(argv, capsys)
    assert first == second and first


def test_probe_exits_zero(capsys):
    code, out, _ = run(["probe", "--conjecture", "1", "--kind", "diagonal", "--trials", "3", "--points", "5"], capsys)
    assert code == 0
    assert json.loads(out)["result"]["conjecture"] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "haantjes", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "haantjes" in proc.stdout


def test_haantjes_of_diagonal_file_vanishes(deffile, capsys):
    doc = {"dim": 3, "operators": {"D": [["x2*x3", "0", "0"], ["0", "exp(x1)", "0"], ["0", "0", "x1 - x2"]]}}
    _, out, _ = run(["eval", "--file", deffile(doc), "--tensor", "haantjes"], capsys)
    comps = json.loads(out)["result"]["components"]
    assert max(abs(v) for point in comps for v in point.values()) < 1e-10


def test_identity_spectrum_is_one_cluster(deffile, capsys):
    doc = {"dim": 3, "operators": {"I": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]}}
    _, out, _ = run(["spectrum", "--file", deffile(doc)], capsys)
    clusters = json.loads(out)["result"]["reports"][0]["clusters"]
    assert [(c["multiplicity"], c["riesz_index"]) for c in clusters] == [(3, 1)]


def test_golden_integrability_with_m_max_four(capsys):
    _, out, _ = run(["integrability", "--example", "golden", "--m-max", "4"], capsys)
    assert json.loads(out)["result"]["scan"]["smallest_m"] == 3


def test_diagonal_integrability(deffile, capsys):
    doc = {"dim": 3, "operators": {"D": [["x2", "0", "0"], ["0", "x3 + 3", "0"], ["0", "0", "x1 + 6"]]}}
    code, out, _ = run(["integrability", "--file", deffile(doc)], capsys)
    res = json.loads(out)["result"]
    assert code == 0 and res["scan"]["smallest_m"] <= 2
    assert all(s["involutive"] for s in res["semidirect_sums"])


def test_report_embeds_seed(capsys):
    _, out, _ = run(["eval", "--example", "golden", "--tensor", "nijenhuis", "--points", "3", "--seed", "17"], capsys)
    assert json.loads(out)["seed"] == 17
