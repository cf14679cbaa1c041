import json
import subprocess
import sys

import pytest

from bose_expand.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main

BASE = {"spec": 1, "dimension": 1, "cutoff": 1, "N": 8, "potential": {"kind": "constant", "value": 1.0}}


@pytest.fixture(autouse=True)
def _workers_env(monkeypatch):
    # main() exports the pool size; keep it from leaking between tests
    monkeypatch.setenv("BOSE_EXPAND_WORKERS", "1")


def write_config(tmp_path, cfg=None, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg or BASE))
    return str(path)


def run(tmp_path, *args, cfg=None):
    out = tmp_path / "report.json"
    code = main([*args, "--config", write_config(tmp_path, cfg), "--out", str(out)])
    return code, out


HEADERS = {
    ("solve-hartree",): "index,phi_re,phi_im",
    ("bogoliubov",): "n,abs_p,eps",
    ("expand-energy",): "coefficient,value",
    ("edgeworth", "--nmin", "8", "--nmax", "14"): "N,oracle_value,prediction0,prediction1",
    ("binding", "--nmin", "8", "--nmax", "14"): "N,deltaE,residual0,residual1",
    ("dynamics", "--t", "0.1", "--nmin", "6", "--nmax", "12"): "N,error_order0,error_order1",
    ("oracle", "energy-curve", "--nmin", "8", "--nmax", "14"): "N,value,fit_slope",
    ("oracle", "statistics", "--nmin", "8", "--nmax", "14"): "N,value,fit_slope",
    ("oracle", "evolve", "--t", "0.1", "--nmin", "6", "--nmax", "12"): "N,value,fit_slope",
}


@pytest.mark.parametrize("args", list(HEADERS), ids=[" ".join(a) for a in HEADERS])
def test_subcommand_outputs(tmp_path, args):
    code, out = run(tmp_path, *args)
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert report["spec"] == 1
    assert report["command"] == args[0]
    assert report["config"]["model"] == BASE
    csv = out.with_suffix(".csv").read_text().splitlines()
    assert csv[0] == HEADERS[args]
    assert len(csv) > 1


def test_expand_energy_values(tmp_path):
    code, out = run(tmp_path, "expand-energy")
    res = json.loads(out.read_text())["result"]
    assert res["e_H"] == 0.5
    assert res["E0"] == pytest.approx(-0.01235414677913127, rel=1e-12)
    assert res["E1"] == pytest.approx(-0.012493731654268859, rel=1e-12)
    code, out = run(tmp_path, "expand-energy", "--orders", "0")
    assert "E1" not in json.loads(out.read_text())["result"]


def test_trap_config(tmp_path):
    cfg = dict(BASE, potential={"kind": "constant", "value": 0.0}, trap={"L": 8.0, "points": 801, "kind": "harmonic"})
    code, out = run(tmp_path, "solve-hartree", cfg=cfg)
    assert code == EXIT_OK
    res = json.loads(out.read_text())["result"]
    assert res["e_H"] == pytest.approx(1.0, abs=1e-4)
    # 801 points is coarse enough for the refinement probe to flag it
    assert res["warnings"]
    assert out.with_suffix(".csv").read_text().startswith("x,phi_re,phi_im")


def test_outputs_are_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert run(d, "binding", "--nmin", "8", "--nmax", "14")[0] == EXIT_OK
    for suffix in (".json", ".csv"):
        assert (a / "report.json").with_suffix(suffix).read_bytes() == \
            (b / "report.json").with_suffix(suffix).read_bytes()


def test_stdout_without_out(tmp_path, capsys):
    assert main(["bogoliubov", "--config", write_config(tmp_path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["command"] == "bogoliubov"


@pytest.mark.parametrize("cfg_text", [
    "{not json",
    json.dumps(dict(BASE, extra=1)),
    json.dumps(dict(BASE, potential={"kind": "constant", "value": -1.0})),
    json.dumps(dict(BASE, N=1)),
])
def test_bad_config_is_usage_error(tmp_path, cfg_text):
    path = tmp_path / "bad.json"
    path.write_text(cfg_text)
    out = tmp_path / "report.json"
    assert main(["bogoliubov", "--config", str(path), "--out", str(out)]) == EXIT_USAGE
    assert not out.exists() and not out.with_suffix(".csv").exists()


@pytest.mark.parametrize("argv", [
    ["bogoliubov"],
    ["no-such-command"],
    ["dynamics", "--quench", "{\"vhat_after\": 1, \"scale\": 2}"],
    ["dynamics", "--quench", "[1"],
    ["dynamics", "--t", "-1"],
    ["edgeworth", "--orders", "0,2"],
    ["binding", "--nmin", "12", "--nmax", "8"],
    ["bogoliubov", "--tol", "0"],
    ["bogoliubov", "--workers", "0"],
])
def test_usage_errors(tmp_path, argv):
    # the first case omits --config on purpose
    full = list(argv)
    if argv != ["bogoliubov"] and argv[0] != "no-such-command":
        full += ["--config", write_config(tmp_path)]
    out = tmp_path / "report.json"
    full += ["--out", str(out)]
    try:
        code = main(full)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_USAGE
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["bogoliubov", "--config", str(tmp_path / "nope.json")]) == EXIT_USAGE


def test_computational_failure_exit_code(tmp_path):
    # a power-law fit needs four N values
    out = tmp_path / "report.json"
    code = main(["binding", "--config", write_config(tmp_path), "--nmin", "8", "--nmax", "12",
                 "--nstep", "4", "--out", str(out)])
    assert code == EXIT_ERROR
    assert not out.exists()


def test_validate_core(tmp_path, capsys):
    out_dir = tmp_path / "val"
    code = main(["validate", "--suite", "core", "--out-dir", str(out_dir)])
    lines = capsys.readouterr().out.splitlines()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert code == (EXIT_OK if summary["overall"] == "pass" else EXIT_VALIDATION)
    assert lines[-1] == f"overall: {summary['overall']}"
    assert (out_dir / "summary.csv").exists() and (out_dir / "timings.json").exists()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bose_expand.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
