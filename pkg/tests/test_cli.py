import json
import subprocess
import sys

import pytest

from relaxnls.cli import build_parser, configs_from_args, main


def test_parser_defaults():
    args = build_parser().parse_args(["table2"])
    cfgs = configs_from_args(args)
    assert [c.M for c in cfgs] == [2400, 3600, 4800, 6000, 7200, 8400, 9600]
    assert {c.r for c in cfgs} == {2} and cfgs[0].convention == "table"
    t1 = configs_from_args(build_parser().parse_args(["table1", "--M", "120"]))
    assert [c.r for c in t1] == [1, 2, 3]


def test_run_stdout(capsys):
    assert main(["run", "--M", "120", "--degree", "2", "--columns", "table4"]) == 0
    out = capsys.readouterr().out.strip().split("\n")
    assert out[0] == "M,EN_total,Eexact,ei"
    assert out[1].startswith("120,")


def test_json_file(tmp_path):
    path = tmp_path / "rep"
    assert main(["sweep", "--M", "120", "180", "--format", "json", "--out", str(path)]) == 0
    data = json.loads((tmp_path / "rep.json").read_text())
    assert [d["M"] for d in data] == [120, 180]
    assert data[0]["EOCS0"] is None and isinstance(data[1]["EOCS0"], float)


def test_zero_problem(capsys):
    assert main(["run", "--M", "60", "--problem", "zero", "--steps", "3", "--columns", "table4"]) == 0
    assert capsys.readouterr().out.strip().split("\n")[1] == "60,0,0,0"


def test_exit_codes(capsys):
    assert main(["run", "--M", "0"]) == 2
    assert main(["run", "--M", "120", "--p", "2"]) == 2
    assert main(["run", "--M", "120", "--domain", "1", "0"]) == 2


def test_solver_failure_exit_code(monkeypatch):
    import relaxnls.cli as cli
    from relaxnls.exceptions import SingularMatrixError

    def boom(*a, **k):
        raise SingularMatrixError("singular")

    monkeypatch.setattr(cli, "sweep", boom)
    assert cli.main(["run", "--M", "120"]) == 3


def test_console_entry():
    res = subprocess.run([sys.executable, "-m", "relaxnls.cli", "table3", "--M", "120", "180"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    lines = res.stdout.strip().split("\n")
    assert lines[0] == "kinv,ET0,EOCT0,ET1,EOCT1,ET2,EOCT2" and len(lines) == 3
