import json
import math
import os

import numpy as np
import pytest

from luxmin.cli_reports import main


def run(args):
    return main([str(a) for a in args])


def read_json(path):
    with open(path) as f:
        return json.load(f)


def test_distance_subcommand(tmp_path):
    code = run(["distance", "--shape", "disk", "--r", "1", "--n", "64",
                "--output-dir", tmp_path])
    assert code == 0
    rep = read_json(tmp_path / "distance.json")
    assert rep["lambda_inf"] == 1.0
    assert rep["d_max"] == 1.0
    assert rep["ridge_singleton"] is True
    assert rep["meta"]["resolution"] == 64
    assert "spacing" in rep["meta"] and "solver" in rep["meta"]
    assert (tmp_path / "distance_field.csv").exists()
    assert (tmp_path / "grid.csv").exists()


def test_norm_subcommand(tmp_path):
    code = run(["norm", "--shape", "rectangle", "--w", "1", "--h", "1",
                "--n", "16", "--p", "2", "--u", "1 + 0*x",
                "--output-dir", tmp_path])
    assert code == 0
    rep = read_json(tmp_path / "norm.json")
    assert rep["norm_weighted"] == pytest.approx(1 / math.sqrt(2), rel=1e-10)
    assert rep["norm_classical"] == pytest.approx(1.0, rel=1e-10)
    assert rep["sup_norm"] == 1.0
    assert rep["alpha"] == pytest.approx(0.5)


def test_norm_requires_expression(tmp_path, capsys):
    code = run(["norm", "--shape", "disk", "--r", "1", "--n", "16",
                "--output-dir", tmp_path])
    assert code == 2
    assert "u_expr" in capsys.readouterr().err


def test_minimize_subcommand(tmp_path):
    code = run(["minimize", "--shape", "rectangle", "--w", "1", "--h", "1",
                "--n", "24", "--p", "2", "--q", "2", "--output-dir", tmp_path])
    assert code == 0
    rep = read_json(tmp_path / "minimize.json")
    assert rep["lambda"] == pytest.approx(math.pi * math.sqrt(2), rel=0.02)
    assert rep["converged"] is True
    assert rep["el_residual"] <= 1e-3
    assert abs(rep["argmax"]["x"] - 0.5) < 0.1
    assert (tmp_path / "minimizer_field.csv").exists()


def test_minimize_nonconvergence_exit_code(tmp_path):
    code = run(["minimize", "--shape", "rectangle", "--w", "1", "--h", "1",
                "--n", "16", "--p", "2", "--q", "2",
                "--set", "solver.max_iter=3", "--output-dir", tmp_path])
    assert code == 3
    assert read_json(tmp_path / "minimize.json")["converged"] is False


def test_malformed_config_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"domain": {"shape": "disk", "r": "one", "n": 16}}')
    out = tmp_path / "out"
    code = run(["distance", "--config", cfg, "--output-dir", out])
    assert code == 2
    assert "must be a number" in capsys.readouterr().err
    # no partial outputs
    assert not os.path.exists(out / "distance.json")
    assert not os.path.exists(out / "distance_field.csv")


def test_unknown_keys_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"solverr": {"tol": 0.1}}')
    code = run(["distance", "--config", cfg, "--output-dir", tmp_path])
    assert code == 2
    assert "solverr" in capsys.readouterr().err

    cfg.write_text('{"domain": {"shape": "disk", "r": 1, "n": 16, "w": 2}}')
    code = run(["distance", "--config", cfg, "--output-dir", tmp_path])
    assert code == 2
    assert "not valid for shape" in capsys.readouterr().err


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "domain": {"shape": "rectangle", "w": 1.0, "h": 1.0, "n": 16},
        "p_expr": "2",
        "solver": {"seed": 7},
    }))
    code = run(["distance", "--config", cfg, "--set", "domain.n=24",
                "--output-dir", tmp_path])
    assert code == 0
    rep = read_json(tmp_path / "distance.json")
    assert rep["meta"]["resolution"] == 24
    assert rep["meta"]["solver"]["seed"] == 7
    assert rep["d_max"] == 0.5


def test_bad_set_path(tmp_path, capsys):
    code = run(["distance", "--shape", "disk", "--r", "1", "--n", "16",
                "--set", "solver.cleverness=9", "--output-dir", tmp_path])
    assert code == 2
    assert "solver.cleverness" in capsys.readouterr().err


def test_output_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("LUXMIN_OUTPUT_DIR", str(tmp_path / "envout"))
    code = run(["distance", "--shape", "disk", "--r", "1", "--n", "16"])
    assert code == 0
    assert (tmp_path / "envout" / "distance.json").exists()


def test_sweep_j_and_report(tmp_path):
    code = run(["sweep-j", "--shape", "rectangle", "--w", "1", "--h", "1",
                "--n", "16", "--p", "2", "--q", "2", "--l", "4",
                "--j-list", "1,2,4", "--output-dir", tmp_path])
    assert code == 0
    rep = read_json(tmp_path / "sweep_j.json")
    assert rep["limit_kind"] == "mu_l"
    assert [r["index"] for r in rep["rows"]] == [1, 2, 4]
    csv_lines = (tmp_path / "sweep_j.csv").read_text().splitlines()
    assert csv_lines[0].startswith("index,eigenvalue_estimate")
    assert len(csv_lines) == 4

    code = run(["report", "--output-dir", tmp_path])
    assert code == 0
    bundle = read_json(tmp_path / "report.json")
    assert "sweep_j.json" in bundle["reports"]
    assert bundle["count"] >= 1


def test_sweep_l_and_check_limit(tmp_path):
    code = run(["sweep-l", "--shape", "disk", "--r", "1", "--n", "24",
                "--p", "2 + (x^2+y^2)/2", "--l-list", "4,8",
                "--output-dir", tmp_path])
    assert code == 0
    rep = read_json(tmp_path / "sweep_l.json")
    assert rep["limit_kind"] == "lambda_infinity"
    assert rep["limit_value"] == 1.0
    assert (tmp_path / "sweep_l_final_field.csv").exists()

    code = run(["check-limit", "--shape", "disk", "--r", "1", "--n", "24",
                "--p", "2 + (x^2+y^2)/2", "--output-dir", tmp_path])
    assert code == 0
    chk = read_json(tmp_path / "check_limit.json")
    assert chk["residual"]["count"] > 0
    assert chk["distance_baseline"]["median"] > 0
    assert chk["median_ratio_to_baseline"] > 0


def test_check_limit_needs_field(tmp_path, capsys):
    code = run(["check-limit", "--shape", "disk", "--r", "1", "--n", "24",
                "--output-dir", tmp_path])
    assert code == 2
    assert "sweep-l" in capsys.readouterr().err


def test_byte_reproducibility(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = run(["sweep-l", "--shape", "disk", "--r", "1", "--n", "16",
                    "--p", "2", "--l-list", "4,8", "--seed", "3",
                    "--output-dir", out])
        assert code == 0
        outs.append(out)
    for fname in ("sweep_l.json", "sweep_l.csv", "sweep_l_final_field.csv"):
        a = (outs[0] / fname).read_bytes()
        b = (outs[1] / fname).read_bytes()
        assert a == b, f"{fname} differs between identical runs"
