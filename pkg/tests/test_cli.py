import json

import pytest

from stagepp.cli import EXIT_CONFIG, EXIT_GOLDEN, EXIT_NUMERICAL, build_params, build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_table1_goes_to_prey_only(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--preset", "table1", "--init", "0.2,0.1,0.01,0.01", "--out", str(tmp_path))
    assert code == 0
    assert "verdict: equilibrium E2" in out
    assert (tmp_path / "trajectory.csv").exists()


def test_simulate_table2_cycle(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--preset", "table2", "--set", "c=0.037", "--init", "near-E4", "--out", str(tmp_path))
    assert code == 0
    assert "verdict: limit_cycle" in out


def test_simulate_missing_init_is_config_error(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--preset", "table1", "--out", str(tmp_path))
    assert code == EXIT_CONFIG
    assert "usage:" in err


def test_simulate_svg(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--init", "near-E4", "--tmax", "50", "--format", "csv,svg", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "trajectory.csv").exists()
    assert any(p.suffix == ".svg" for p in tmp_path.iterdir())


def test_analyze_table1(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "--preset", "table1", "--format", "json", "--out", str(tmp_path))
    assert code == 0
    lines = out.splitlines()
    assert any(ln.startswith("E4 ") and ln.endswith("stable") for ln in lines)
    assert any(ln.startswith("E3 ") and ln.endswith("saddle") for ln in lines)
    assert "eps1=1.21902" in out
    data = json.loads((tmp_path / "analyze.json").read_text())
    assert data


def test_analyze_u07_case1(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "--preset", "table1", "--set", "u=0.7", "--out", str(tmp_path))
    assert code == 0
    assert "E2 classification: stable, case 1" in out


def test_analyze_no_interior(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "--preset", "table1", "--set", "d2=10", "--out", str(tmp_path))
    assert code == 0
    assert "no interior equilibria" in out


def test_continue_hopf_line(capsys, tmp_path):
    code, out, _ = run(capsys, "continue", "--preset", "table2", "--free", "c", "--range", "0.02:0.06", "--out", str(tmp_path))
    assert code == 0
    assert any(ln.startswith("H c=0.0359834") for ln in out.splitlines())
    assert (tmp_path / "branch.csv").exists() and (tmp_path / "specials.csv").exists()


def test_verify_transcritical_pass_and_fail(capsys):
    code, out, _ = run(capsys, "verify", "--transcritical", "--preset", "table1", "--set", "b=0.114706")
    assert code == 0 and "a2t=0.625 PASS" in out
    code, out, _ = run(capsys, "verify", "--transcritical", "--preset", "table1")
    assert code == EXIT_GOLDEN and "FAIL" in out


def test_verify_saddle_node(capsys):
    code, out, _ = run(capsys, "verify", "--saddle-node", "--preset", "table1")
    assert code == 0
    assert "LP b=0.1081857" in out and "PASS" in out


def test_normal_form_json(capsys, tmp_path):
    code, out, _ = run(capsys, "normal-form", "--preset", "table2", "--at", "c=0.03598345", "--out", str(tmp_path))
    assert code == 0
    data = json.loads(out)
    for key in ("alpha", "g20", "g11", "g02", "g21", "C1_0", "theta", "beta2", "l1"):
        assert key in data
    assert data["beta2"] < 0


def test_normal_form_off_hopf_is_numerical_error(capsys, tmp_path):
    code, _, err = run(capsys, "normal-form", "--preset", "table1", "--at", "c=0.09", "--out", str(tmp_path))
    assert code == EXIT_NUMERICAL
    assert "NotAHopfPoint" in err


def test_codim2_fold_curve(capsys, tmp_path):
    code, out, _ = run(
        capsys, "codim2", "--preset", "table1", "--curve", "fold", "--p1", "c", "--p2", "b",
        "--bounds", "0.03:0.2,0.02:0.3", "--out", str(tmp_path),
    )
    assert code == 0
    assert "CP" in out
    assert any(p.name.endswith(".csv") for p in tmp_path.iterdir())


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--set", "zz=1"],
        ["analyze", "--set", "c=-1"],
        ["analyze", "--set", "c"],
        ["analyze", "--format", "pdf"],
        ["analyze", "--jobs", "0"],
        ["continue", "--free", "b", "--range", "0.3:0.1"],
        ["verify"],
    ],
)
def test_config_errors_exit_2(capsys, tmp_path, argv):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == EXIT_CONFIG
    assert err.startswith("error:") or "usage" in err


def test_unknown_preset_rejected_by_parser(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--preset", "table3"])
    assert exc.value.code == 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"preset": "table2", "simulate": {"init": "near-E4", "tmax": 20}}))
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 0 and "verdict:" in out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"simulate": {"bogus": 1}}))
    code, _, _ = run(capsys, "simulate", "--config", str(bad), "--out", str(tmp_path))
    assert code == EXIT_CONFIG


def test_param_precedence(tmp_path):
    cfg = {"params": {"a1": 0.5, "a2": 0.6, "a3": 0.05, "b": 0.1, "c": 0.08, "d1": 0.1, "d2": 0.1, "d3": 0.05, "u": 0.7}}
    ap = build_parser()
    p = build_params(ap.parse_args(["analyze", "--set", "u=0.9"]), cfg)
    assert p.a1 == 0.5 and p.u == 0.9
    p = build_params(ap.parse_args(["analyze", "--preset", "table2"]), cfg)
    assert p.a1 == 0.6


def test_outputs_byte_identical_on_repeat(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(capsys, "continue", "--preset", "table1", "--free", "b", "--out", str(d))[0] == 0
        assert run(capsys, "simulate", "--preset", "table1", "--init", "near-E4", "--tmax", "200", "--out", str(d))[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_reproduce_fig2(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce", "fig2", "--out", str(tmp_path))
    assert code == 0
    m = json.loads((tmp_path / "fig2_manifest.json").read_text())
    assert m["figure"] == "fig2"
    names = " ".join(c["name"] for c in m["checks"])
    assert "LP" in names and "BP" in names
