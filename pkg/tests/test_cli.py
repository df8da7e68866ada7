import json

import numpy as np
import pytest

from otpoisson.cli import ConfigError, main, parse_config


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


BASE_SOLVE = {
    "command": "solve",
    "domain": "unit_square",
    "h": 0.1,
    "cost": {"kind": "metric"},
    "alpha": 1.0,
    "objective": {"kind": "tracking_window",
                  "y_d": {"kind": "constant", "value": 0.5},
                  "window": [0.7, 0.9, 0.1, 0.9]},
    "prior": {"atoms": [[0.2, 0.3, 1.0], [0.25, 0.6, 0.5]]},
    "candidates": {"region": {"box": [0.1, 0.4, 0.1, 0.9]}},
}


def test_minimal_config_defaults(tmp_path):
    path = write_config(tmp_path, BASE_SOLVE)
    cfg = parse_config(path)
    assert cfg.tol == 1e-6
    assert cfg.max_iter == 5000
    assert cfg.checks  # defaults to all


def test_unknown_key_rejected(tmp_path):
    doc = dict(BASE_SOLVE)
    doc["tolerence"] = 1e-3  # misspelled
    path = write_config(tmp_path, doc)
    with pytest.raises(ConfigError, match="tolerence"):
        parse_config(path)


def test_gamma_out_of_range(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    doc["cost"] = {"kind": "power", "gamma": 2.5}
    path = write_config(tmp_path, doc)
    with pytest.raises(ConfigError, match=r"gamma must be in \(1,2\]"):
        parse_config(path)


def test_negative_prior_weight_rejected(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    doc["prior"] = {"atoms": [[0.2, 0.3, -1.0]]}
    path = write_config(tmp_path, doc)
    with pytest.raises(ConfigError, match="nonnegative"):
        parse_config(path)


def test_negative_prior_csv_rejected(tmp_path):
    csv = tmp_path / "prior.csv"
    csv.write_text("x,y,w\n0.2,0.3,-0.5\n")
    doc = json.loads(json.dumps(BASE_SOLVE))
    doc["prior"] = {"csv": "prior.csv"}
    path = write_config(tmp_path, doc)
    with pytest.raises(ConfigError, match="nonnegative"):
        parse_config(path)


def test_h_out_of_range(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    doc["h"] = 0.3
    path = write_config(tmp_path, doc)
    with pytest.raises(ConfigError, match="'h'"):
        parse_config(path)


def test_solve_run_writes_artifacts(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    doc["out"] = str(tmp_path / "out")
    path = write_config(tmp_path, doc)
    code = main(["--config", str(path)])
    assert code == 0
    out = tmp_path / "out"
    for name in ("report.json", "u_bar.csv", "plan.csv", "state.csv",
                 "adjoint.csv", "prior.csv", "candidates.csv", "grad_p.csv"):
        assert (out / name).exists(), name
    doc = json.loads((out / "report.json").read_text())
    assert doc["converged"]
    assert "certificate" in doc and "structure" in doc
    assert doc["config"]["alpha"] == 1.0


def test_deterministic_report(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    docs = []
    for sub in ("a", "b"):
        doc["out"] = str(tmp_path / sub)
        path = write_config(tmp_path, doc, name=f"cfg_{sub}.json")
        assert main(["--config", str(path)]) == 0
        loaded = json.loads((tmp_path / sub / "report.json").read_text())
        loaded.pop("wall_time_s")
        loaded["config"].pop("out")
        docs.append(json.dumps(loaded, sort_keys=True))
    assert docs[0] == docs[1]


def test_example_annulus_cli(tmp_path):
    cfg = {"command": "example-annulus", "h": 0.08, "alpha": 1.0,
           "out": str(tmp_path / "ann")}
    path = write_config(tmp_path, cfg)
    assert main(["--config", str(path)]) == 0
    doc = json.loads((tmp_path / "ann" / "report.json").read_text())
    assert doc["extras"]["ring_mass_fraction_2h"] >= 0.95
    assert doc["extras"]["u_bar_mass"] == pytest.approx(0.75 * np.pi, rel=1e-9)


def test_example_sparsity_cli(tmp_path, capsys):
    cfg = {"command": "example-sparsity", "h": 0.1, "alpha_factor": 2.0,
           "out": str(tmp_path / "sp")}
    path = write_config(tmp_path, cfg)
    assert main(["--config", str(path)]) == 0
    assert "u_bar == u0: true" in capsys.readouterr().out
    doc = json.loads((tmp_path / "sp" / "report.json").read_text())
    assert doc["extras"]["u_bar_equals_prior"] is True


def test_verify_pass_and_tamper(tmp_path):
    cfg = {"command": "example-annulus", "h": 0.1, "alpha": 1.0,
           "out": str(tmp_path / "ann")}
    path = write_config(tmp_path, cfg)
    assert main(["--config", str(path)]) == 0
    vcfg = write_config(tmp_path, {"command": "verify",
                                   "report": str(tmp_path / "ann" / "report.json")},
                        name="verify.json")
    assert main(["--config", str(vcfg)]) == 0
    report_path = tmp_path / "ann" / "report.json"
    doc = json.loads(report_path.read_text())
    doc["dual"]["psi"][3] += 0.25
    report_path.write_text(json.dumps(doc))
    assert main(["--config", str(vcfg)]) == 3


def test_ot_command(tmp_path):
    cfg = {"command": "ot", "cost": {"kind": "quadratic"},
           "source": {"atoms": [[0.0, 0.0, 1.0]]},
           "target": {"atoms": [[1.0, 1.0, 1.0]]},
           "out": str(tmp_path / "ot")}
    path = write_config(tmp_path, cfg)
    assert main(["--config", str(path)]) == 0
    doc = json.loads((tmp_path / "ot" / "report.json").read_text())
    assert doc["value"] == pytest.approx(1.0)


def test_usage_error_exit_code(tmp_path):
    assert main(["--config", str(tmp_path / "missing.json")]) == 1
    assert main([]) == 1  # argparse would exit 2; mapped to usage error


def test_unconverged_exit_code(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    doc["alpha"] = 0.001
    doc["max_iter"] = 1
    doc["tol"] = 1e-14
    doc["out"] = str(tmp_path / "out")
    path = write_config(tmp_path, doc)
    assert main(["--config", str(path)]) == 2


def test_flag_overrides(tmp_path):
    doc = json.loads(json.dumps(BASE_SOLVE))
    path = write_config(tmp_path, doc)
    code = main(["--config", str(path), "--out", str(tmp_path / "o2"),
                 "--tol", "1e-5", "--max-iter", "50", "--check", "optimality"])
    assert code == 0
    rep = json.loads((tmp_path / "o2" / "report.json").read_text())
    assert list(rep["structure"].keys()) == ["optimality"]
