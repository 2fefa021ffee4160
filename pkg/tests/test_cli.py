import json

import pytest

from ortholip.cli import (
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_NO_CONVERGENCE,
    EXIT_OK,
    ConfigError,
    main,
    parse_config,
)


def base_config(**overrides):
    cfg = {
        "schema_version": 1,
        "seed": 0,
        "problem": {
            "grid": {"lo": [-1.2, -1.2], "hi": [1.2, 1.2], "nodes": [17, 17]},
            "ball": {"center": [0.0, 0.0], "radius": 0.55},
            "p": 2.0,
            "deltas": [0.0, 0.0],
            "eps": 0.01,
            "boundary": {"kind": "saddle", "amplitude": 1.0},
            "lower": {"kind": "none"},
        },
        "solve": {"tol": 1e-10},
        "verify": {"inner_radius": 0.3, "outer_radius": 0.5},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


def test_solve_writes_artifacts_and_is_deterministic(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "run1"
    assert main(["solve", "--config", str(path), "--out", str(out)]) == EXIT_OK
    summary = (out / "summary.json").read_bytes()
    payload = json.loads(summary)
    assert payload["steps"][0]["final_residual"] <= 1e-10
    assert (out / "solution.csv").exists() and (out / "solution.json").exists()
    out2 = tmp_path / "run2"
    assert main(["solve", "--config", str(path), "--out", str(out2)]) == EXIT_OK
    assert (out2 / "summary.json").read_bytes() == summary  # byte-identical rerun


def test_solve_affine_fixture_residual(tmp_path):
    cfg = base_config()
    cfg["problem"]["boundary"] = {"kind": "affine", "coeffs": [1.0, 0.0], "offset": 0.0}
    path = write_config(tmp_path, cfg)
    out = tmp_path / "aff"
    assert main(["solve", "--config", str(path), "--out", str(out)]) == EXIT_OK
    payload = json.loads((out / "summary.json").read_text())
    assert payload["steps"][0]["iterations"] == 0


def test_oracle_cross_check(tmp_path):
    cfg = base_config()
    cfg["problem"]["grid"]["nodes"] = [11, 11]
    cfg["problem"]["ball"]["radius"] = 0.5
    cfg["problem"]["p"] = 3.0
    cfg["problem"]["eps"] = 0.05
    cfg["solve"] = {"tol": 1e-13, "residual_target": 1e-11, "cross_check": True}
    path = write_config(tmp_path, cfg)
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", str(path), "--out", str(out)]) == EXIT_OK
    payload = json.loads((out / "oracle_summary.json").read_text())
    assert payload["max_abs_diff"] <= 1e-8


def test_config_error_exit_code(tmp_path):
    cfg = base_config()
    del cfg["problem"]["ball"]
    path = write_config(tmp_path, cfg)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    bad_version = write_config(tmp_path, base_config(schema_version=99), "v99.json")
    assert main(["solve", "--config", str(bad_version), "--out", str(tmp_path / "y")]) == EXIT_CONFIG
    missing = tmp_path / "nope.json"
    assert main(["solve", "--config", str(missing), "--out", str(tmp_path / "z")]) == EXIT_CONFIG


def test_nonconvergence_exit_code(tmp_path):
    cfg = base_config()
    cfg["problem"]["p"] = 4.0
    cfg["problem"]["boundary"]["amplitude"] = 3.0
    cfg["solve"] = {"tol": 1e-14, "max_iter": 1}
    path = write_config(tmp_path, cfg)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "nc")]) == EXIT_NO_CONVERGENCE


def test_verify_battery_and_budget(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "ver"
    assert main(["verify", "--config", str(path), "--out", str(out), "--budget", "10"]) == EXIT_OK
    reports = json.loads((out / "reports.json").read_text())
    assert all(r["passes"] for r in reports)
    assert (out / "constants.csv").read_text().startswith("name,")
    # absurdly small budget: every checker with a nonzero constant fails
    assert main(["verify", "--config", str(path), "--out", str(tmp_path / "ver2"), "--budget", "1e-12"]) == EXIT_BUDGET


def test_ladder_command(tmp_path, capsys):
    out = tmp_path / "lad"
    code = main(["ladder", "--regime", "homogeneous", "--p", "2", "--N", "3", "--h", "2", "--j-max", "4", "--out", str(out)])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "gamma=    4.0000" in text  # first row gamma0 = p + 2
    payload = json.loads((out / "ladder.json").read_text())
    assert payload["rows"][0]["gamma"] == "4"

    code = main(["ladder", "--regime", "nonhomogeneous", "--p", "2", "--N", "3", "--h", "2", "--j-max", "6"])
    assert code == EXIT_OK
    assert "tau_bar=0.100000" in capsys.readouterr().out

    assert main(["ladder", "--regime", "nonhomogeneous", "--p", "2", "--N", "3", "--h", "1.4", "--j-max", "4"]) == EXIT_CONFIG


def test_sweep_refinement_and_lambda_replay(tmp_path):
    cfg = base_config()
    cfg["sweep"] = {"nodes_list": [[17, 17], [33, 33]], "lambdas": [0.1, 3.0, 10.0]}
    cfg["verify"]["h"] = 2.0
    cfg["verify"]["R0"] = 0.5
    path = write_config(tmp_path, cfg)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(path), "--out", str(out)]) == EXIT_OK
    rows = (out / "sweep.csv").read_text().strip().splitlines()[1:]
    spacing_rows = [r for r in rows if r.startswith("spacing,")]
    spacings = [float(r.split(",")[1]) for r in spacing_rows]
    assert spacings == sorted(spacings, reverse=True)  # monotone axis column
    lam_rows = [r.split(",") for r in rows if r.startswith("lambda,")]
    constants = {float(r[3]) for r in lam_rows}
    assert len(lam_rows) == 3
    ref = lam_rows[0][3]
    for r in lam_rows[1:]:
        assert abs(float(r[3]) - float(ref)) <= 1e-12 * abs(float(ref))


def test_threads_env_override(tmp_path, monkeypatch):
    cfg = base_config()
    cfg["sweep"] = {"nodes_list": [[17, 17], [33, 33]]}
    path = write_config(tmp_path, cfg)
    monkeypatch.setenv("ORTHOLIP_THREADS", "2")
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "sw2"), "--threads", "1"]) == EXIT_OK
    monkeypatch.setenv("ORTHOLIP_THREADS", "bogus")
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "sw3")]) == EXIT_CONFIG


def test_config_roundtrip_identity(tmp_path):
    cfg = parse_config(base_config())
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert cfg == again
    assert cfg.digest() == again.digest()


def test_referenced_field_files_must_exist(tmp_path):
    cfg = base_config()
    cfg["problem"]["boundary"] = {"kind": "csv", "path": str(tmp_path / "missing_field")}
    with pytest.raises(ConfigError):
        parse_config(cfg, base_dir=tmp_path)


def test_csv_boundary_field_roundtrip(tmp_path):
    from ortholip import save_field
    from conftest import make_grid, saddle_field

    grid = make_grid(17)
    save_field(saddle_field(grid), tmp_path / "bfield")
    cfg = base_config()
    cfg["problem"]["boundary"] = {"kind": "csv", "path": str(tmp_path / "bfield")}
    path = write_config(tmp_path, cfg)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_OK
