import csv
import json
import subprocess
import sys

import pytest

from maxsum_bethe.cli import main
from maxsum_bethe.experiment import TRACE_HEADER


def _gen(tmp_path, name="m.json", *extra):
    out = tmp_path / name
    assert main(["generate", "--topology", "grid", "--rows", "2", "--cols", "3", "--labels", "3",
                 "--seed", "5", *extra, "-o", str(out)]) == 0
    return out


def test_generate_is_byte_identical(tmp_path):
    a, b = _gen(tmp_path, "a.json"), _gen(tmp_path, "b.json")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("argv", [
    ["generate", "--labels", "1", "-o", "x.json"],
    ["generate", "--topology", "grid", "--rows", "0", "-o", "x.json"],
])
def test_generate_usage_errors(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_bad_arguments_exit_2(tmp_path):
    m = _gen(tmp_path)
    for bad in (["--beta", "0"], ["--beta", "-1"], ["--tol", "0"], ["--eps-active", "-1"]):
        with pytest.raises(SystemExit) as info:
            main(["solve", str(m), *bad])
        assert info.value.code == 2
    (tmp_path / "bad.json").write_text('{"domains": [2], "unary": [[0, NaN]]}')
    assert main(["solve", str(tmp_path / "bad.json")]) == 2


def test_solve_diffusion_and_double_loop(tmp_path):
    m = _gen(tmp_path)
    out = tmp_path / "r.json"
    assert main(["solve", str(m), "-o", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["algorithm"] == "diffusion" and res["converged"] and res["beta"] == "inf"
    assert res["decoded"]["count"] >= 0

    out = tmp_path / "dl.json"
    assert main(["solve", str(m), "--algorithm", "double_loop", "-o", str(out)]) == 0
    res = json.loads(out.read_text())
    rows = list(csv.reader(open(res["trace_csv"])))
    assert tuple(rows[0]) == TRACE_HEADER and len(rows) == res["iterations"] + 1
    assert res["key_observation"]["holds"] in (True, False)

    assert main(["solve", str(m), "--algorithm", "double_loop", "--beta", "1", "--tilde-init", "random",
                 "-o", str(tmp_path / "r1.json")]) == 0


def test_iteration_cap_exits_3(tmp_path):
    m = _gen(tmp_path)
    assert main(["solve", str(m), "--max-sweeps", "1", "--tol", "1e-300", "-o", str(tmp_path / "r.json")]) == 3


def test_compare(tmp_path):
    m = _gen(tmp_path)
    out = tmp_path / "c.json"
    assert main(["compare", str(m), "--algorithm", "oracle", "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["belief_error"] == {"unary": 0.0, "factor": 0.0}
    assert rep["ground_states_equal"]
    assert main(["compare", str(m), "--algorithm", "double_loop", "--beta", "1", "--outer-tol", "1e-8",
                 "-o", str(out)]) == 0
    assert json.loads(out.read_text())["belief_error"]["unary"] < 0.5


def test_oracle_cap_exits_4(tmp_path):
    m = _gen(tmp_path)
    assert main(["compare", str(m), "--cap", "10"]) == 4


def test_experiment_small(tmp_path):
    out = tmp_path / "exp"
    assert main(["experiment", "--rows", "3", "--cols", "3", "--complete-n", "4", "--labels", "3",
                 "-o", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["cells"]) == 9
    for cell in manifest["cells"]:
        assert cell["status"] == "ok"
        with open(cell["trace_csv"]) as fh:
            assert tuple(next(csv.reader(fh))) == TRACE_HEADER
    assert main(["experiment", "--labels", "1", "-o", str(out)]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "maxsum_bethe", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "experiment" in r.stdout
