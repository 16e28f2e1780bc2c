import json

import pytest

from stubborn.cli import ConfigError, load_config, main, parse_config, run_command

MINIMAL = {
    "model": {"a": 1.0, "sigma1": 0.3, "sigma2": 0.1},
    "payoff": {
        "theta": 1.0, "alpha1": 0.1, "alpha2": 0.1, "alpha3": 0.1,
        "c": 1.0, "r": 0.5, "mu_bar": 0.0, "omega": 1.0, "horizon": 1.0,
    },
}


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def small_numerics(**overrides):
    base = {
        "dt": 0.05,
        "n_paths": 16,
        "seed": 3,
        "u_grid_n": 11,
        "x_grid": {"min": 0.2, "max": 2.0, "n": 7},
    }
    base.update(overrides)
    return base


def test_minimal_config_gets_documented_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, MINIMAL))
    assert cfg.lagrange.l0 == 0.0 and cfg.lagrange.l1 == 0.0
    assert cfg.modes.derivative_mode == "paper"
    assert cfg.modes.nash_mode == "paper"
    assert cfg.modes.kernel_exponent_mode == "rederived"
    assert cfg.modes.closed_form_mode == "rederived"
    assert cfg.numerics.dt == 0.01
    assert cfg.numerics.tolerances.fd_rel == 1e-5


def test_missing_required_field(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    del doc["payoff"]["c"]
    with pytest.raises(ConfigError, match=r"payoff\.c required"):
        load_config(write_config(tmp_path, doc))


def test_invalid_params_surface_verbatim(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["payoff"]["r"] = 0.1
    doc["payoff"]["mu_bar"] = 0.2
    with pytest.raises(Exception, match="r must exceed mu_bar"):
        load_config(write_config(tmp_path, doc))


def test_parse_error_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "model": [,]\n}')
    with pytest.raises(ConfigError, match=r"line 2 column \d+"):
        load_config(str(path))


def test_unknown_mode_rejected():
    doc = json.loads(json.dumps(MINIMAL))
    doc["modes"] = {"derivative_mode": "exact"}
    with pytest.raises(ConfigError, match="derivative_mode"):
        parse_config(doc)


def test_simulate_row_count_and_manifest(tmp_path):
    doc = dict(MINIMAL, numerics=small_numerics())
    code = main(["simulate", "--config", write_config(tmp_path, doc),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    lines = (tmp_path / "out" / "paths.csv").read_text().strip().split("\n")
    assert lines[0] == "path_id,step,s,x,clamped"
    assert len(lines) == 1 + 16 * 21  # n_paths * (n_steps + 1)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["files"] == [str(tmp_path / "out" / "paths.csv")]
    assert manifest["seed"] == 3


def test_sweep_row_contract(tmp_path):
    doc = dict(MINIMAL, numerics=small_numerics())
    code = main(["sweep", "--config", write_config(tmp_path, doc),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    lines = (tmp_path / "out" / "sweep.csv").read_text().strip().split("\n")
    assert lines[0] == "u,J_mean,J_stderr,invalid_fraction"
    assert len(lines) == 1 + 11
    first = lines[1].split(",")
    assert float(first[0]) == 0.0


def test_optimize_domain_cells(tmp_path):
    doc = dict(
        MINIMAL,
        numerics=small_numerics(
            x_grid={"min": 0.0, "max": 1.0, "n": 3},
            s_grid={"min": 0.0, "max": 0.5, "n": 2},
        ),
    )
    code = main(["optimize", "--config", write_config(tmp_path, doc),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    lines = (tmp_path / "out" / "optimize.csv").read_text().strip().split("\n")
    header = "s,x,u_star,u_unclamped,residual,n_candidates,mode_flags,status"
    assert lines[0] == header
    assert len(lines) == 1 + 2 * 3
    below = [ln for ln in lines[1:] if ln.endswith("state below closed-form domain")]
    assert len(below) == 2  # the x = 0 column at both s values
    ok_rows = [ln for ln in lines[1:] if ln.endswith(",ok")]
    assert ok_rows, "interior cells should resolve"


def test_density_snapshots(tmp_path):
    doc = dict(
        MINIMAL,
        numerics=small_numerics(
            x_grid={"min": 0.2, "max": 3.0, "n": 33},
            density={"eps": 0.01, "n_steps": 4, "snapshot_stride": 2, "u": 0.2},
        ),
    )
    code = main(["density", "--config", write_config(tmp_path, doc),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    lines = (tmp_path / "out" / "density.csv").read_text().strip().split("\n")
    assert lines[0] == "s,x,psi"
    assert len(lines) == 1 + 3 * 33  # snapshots at s = 0, 0.02, 0.04


def test_density_kernel_step_with_gradient(tmp_path):
    doc = dict(
        MINIMAL,
        numerics=small_numerics(
            x_grid={"min": 0.2, "max": 3.0, "n": 33},
            density={
                "eps": 0.01, "n_steps": 4, "snapshot_stride": 4,
                "u": 0.2, "step": "kernel", "gradient_correction": True,
            },
        ),
    )
    code = main(["density", "--config", write_config(tmp_path, doc),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    lines = (tmp_path / "out" / "density.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 2 * 33  # snapshots at s = 0 and s = 0.04
    psi = [float(ln.split(",")[2]) for ln in lines[1 + 33:]]
    assert all(v >= 0.0 for v in psi)
    assert sum(psi) > 0.0


def test_validate_passes_and_reproduces(tmp_path):
    doc = dict(MINIMAL, numerics=small_numerics(n_paths=400, dt=0.02))
    cfg_path = write_config(tmp_path, doc)
    code1 = main(["validate", "--config", cfg_path, "--out-dir", str(tmp_path / "a")])
    code2 = main(["validate", "--config", cfg_path, "--out-dir", str(tmp_path / "b")])
    assert code1 == 0 and code2 == 0
    rep_a = (tmp_path / "a" / "report.json").read_bytes()
    rep_b = (tmp_path / "b" / "report.json").read_bytes()
    assert rep_a == rep_b
    report = json.loads(rep_a)
    assert report["passed"] is True
    assert set(report["suites"]) == {
        "gaussian_integral_identity",
        "derivative_consistency",
        "trivial_root_law",
        "root_residuals",
        "feynman_kac_analytic",
    }
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["checks_passed"] is True


def test_flag_overrides(tmp_path):
    doc = dict(MINIMAL, numerics=small_numerics())
    code = main([
        "simulate", "--config", write_config(tmp_path, doc),
        "--out-dir", str(tmp_path / "out"), "--seed", "99", "--n-paths", "2",
        "--dt", "0.25",
    ])
    assert code == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 99
    lines = (tmp_path / "out" / "paths.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 2 * 5


def test_usage_errors_exit_2(tmp_path):
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", str(tmp_path / "missing.json"),
                 "--out-dir", out]) == 2
    doc = json.loads(json.dumps(MINIMAL))
    doc["payoff"]["c"] = -1.0
    assert main(["simulate", "--config", write_config(tmp_path, doc),
                 "--out-dir", out]) == 2
    # the manifest is emitted even when the config never parsed
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "config_error"
    bad_grid = dict(MINIMAL, numerics=small_numerics(x_grid={"min": 0.0, "max": 2.0, "n": 9}))
    assert main([
        "density", "--config", write_config(tmp_path, bad_grid, "g.json"),
        "--out-dir", str(tmp_path / "out2"),
    ]) == 2


def test_run_command_rejects_unknown():
    doc = parse_config(json.loads(json.dumps(MINIMAL)))
    with pytest.raises(ConfigError, match="unknown command"):
        run_command("frobnicate", doc)
