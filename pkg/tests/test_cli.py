import json
import subprocess
import sys

import pytest

from tontine.cli import COMMANDS, RunConfig, build_parser, dispatch, resolve
from tontine.errors import ValidationError


def run(argv, capsys):
    code = dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_every_subcommand_has_a_parser():
    parser = build_parser()
    for name in COMMANDS:
        assert parser.parse_args([name]).subcommand == name


@pytest.mark.parametrize("argv", [[], ["bogus"], ["merton", "--nope", "1"], ["merton", "--alpha", "x"],
                                  ["merton", "--format", "xml"]])
def test_parse_errors_exit_two(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_invalid_values_exit_two(capsys, tmp_path):
    code, out, err = run(["merton", "--alpha", "0"], capsys)
    assert code == 2 and out == "" and "invalid input" in err and "--help" in err
    assert run(["recursion", "--n", "0"], capsys)[0] == 2
    assert run(["recursion", "--mortality", str(tmp_path / "missing.csv")], capsys)[0] == 2
    assert run(["cbd-cost", "--alpha", "-1"], capsys)[0] == 2
    assert run(["cbd-simulate", "--what", "money"], capsys)[0] == 2


def test_numerical_failure_exits_three(capsys, tmp_path):
    # all deaths in the first two years leave nothing to consume afterwards
    path = tmp_path / "short.csv"
    path.write_text("t,p\n65,0.5\n66,0.5\n67,0.0\n")
    code, _, err = run(["recursion", "--mortality", str(path), "--age", "65"], capsys)
    assert code == 3 and "numerical failure" in err


def test_precedence_defaults_config_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": -3.0, "rho": -0.5, "format": "json"}))
    parser = build_parser()
    r = resolve(parser.parse_args(["merton"]))
    assert r.params["alpha"] == -1.0 and r.format == "csv"
    r = resolve(parser.parse_args(["merton", "--config", str(cfg)]))
    assert (r.params["alpha"], r.params["rho"], r.format) == (-3.0, -0.5, "json")
    r = resolve(parser.parse_args(["merton", "--config", str(cfg), "--alpha", "-2", "--format", "csv"]))
    assert (r.params["alpha"], r.params["rho"], r.format) == (-2.0, -0.5, "csv")


def test_bad_config_files(tmp_path):
    parser = build_parser()
    for text in ('{"gamma": 1}', "[1, 2]", "{", '{"subcommand": "annuity"}', '{"alpha": "abc"}'):
        p = tmp_path / "bad.json"
        p.write_text(text)
        with pytest.raises(ValidationError):
            resolve(parser.parse_args(["merton", "--config", str(p)]))


def test_header_round_trip(capsys, tmp_path):
    code, out, _ = run(["merton", "--alpha", "-2", "--rho", "-0.5"], capsys)
    assert code == 0
    lines = out.splitlines()
    cfg = RunConfig.from_header(lines[0])
    assert cfg.subcommand == "merton" and cfg.params["alpha"] == -2.0
    assert lines[1] == "a_star,xi,xi_tilde,eis"
    # feeding the echoed config back reproduces the output
    p = tmp_path / "again.json"
    p.write_text(json.dumps({"subcommand": cfg.subcommand, "format": cfg.format, **cfg.params}))
    assert run(["merton", "--config", str(p)], capsys)[1] == out
    with pytest.raises(ValidationError):
        RunConfig.from_header("a_star,xi")


def test_json_output_and_file(capsys, tmp_path):
    code, out, _ = run(["merton", "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["columns"] == ["a_star", "xi", "xi_tilde", "eis"]
    assert doc["rows"][0][0] == pytest.approx(0.7777777777777778)
    target = tmp_path / "m.csv"
    code, out, _ = run(["merton", "-o", str(target)], capsys)
    assert code == 0 and out == "" and target.read_text().startswith("# config: ")


@pytest.mark.parametrize("argv", [
    ["merton"],
    ["recursion", "--n", "8"],
    ["recursion", "--alpha", "0.5", "--rho", "0.5"],
    ["simulate", "--paths", "200", "--annuity", "7000"],
    ["heterogeneous", "--members", "6", "--paths", "200", "--nmax", "6"],
    ["stylised-cost"],
    ["stylised-cost", "--alpha-grid=-1,0.5", "--rho-grid=-0.5:0.5:3"],
    ["cbd-solve", "--n-lambda", "100", "--n-time", "300", "--t-every", "50"],
    ["cbd-cost", "--alpha", "-2", "--rho", "-1", "--n-lambda", "100", "--n-time", "300"],
    ["cbd-simulate", "--what", "mortality", "--paths", "100"],
    ["cbd-simulate", "--paths", "100", "--n-lambda", "100", "--n-time", "300", "--scheme", "exact"],
    ["annuity", "--method", "mc", "--paths", "500"],
])
def test_reruns_are_byte_identical(argv, capsys):
    a = run(argv, capsys)
    b = run(argv, capsys)
    assert a[0] == 0 and a[1] == b[1]


def test_stylised_grid_skips_excluded_point(capsys):
    code, out, _ = run(["stylised-cost", "--alpha-grid=-1,0,0.5", "--rho-grid=-0.5:0.5:3"], capsys)
    rows = out.splitlines()[2:]
    assert code == 0 and len(rows) == 4
    assert not any(r.split(",")[1] in ("0", "-0") for r in rows)


def test_console_script_matches_dispatch(capsys):
    proc = subprocess.run([sys.executable, "-m", "tontine.cli", "merton"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == run(["merton"], capsys)[1]


@pytest.mark.slow
def test_repro_writes_every_table(capsys, tmp_path):
    code, out, _ = run(["repro", "--outdir", str(tmp_path), "--paths", "200"], capsys)
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["annuity.csv", "convergence.csv", "fig_heterogeneous_or.csv", "fig_stylised_cost.csv",
                     "table1_directions.csv", "table3_costs.csv"]
    for p in tmp_path.iterdir():
        assert p.read_text().startswith("# config: ")
