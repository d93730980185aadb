"""Tests for the run configuration layer and the command-line verbs."""

import json
import os

import numpy as np
import pytest

from imexest.cli import (
    COMPONENT_COLUMNS,
    SCHEME_ORDER,
    THREADS_ENV,
    CliError,
    ReportRow,
    RunConfig,
    convergence_study,
    main,
    reproduce_table,
    run,
    table_config,
    write_report_csv,
)
from imexest.problems import split_scalar_bernoulli, split_scalar_linear


def base_config(**overrides):
    doc = {
        "scheme": "mid122",
        "problem": {"name": "scalar-linear", "lam_f": -0.4, "lam_g": -0.6,
                    "y0": 1.0},
        "grid": {"t_end": 1.0, "k": 0.05},
        "qoi": {"kind": "final-time", "psi": [1.0]},
    }
    doc.update(overrides)
    return doc


def test_config_rejects_unknown_top_level_key():
    with pytest.raises(CliError, match=r"\[config\].*unknown keys"):
        run(base_config(tolerance=1e-6))


def test_config_rejects_unknown_keys_in_every_section():
    bad_sections = [
        {"problem": {"name": "scalar-linear", "lam_f": 0.0, "lam_g": -1.0,
                     "y0": 1.0, "order": 3}},
        {"grid": {"t_end": 1.0, "k": 0.05, "cells": 7}},
        {"qoi": {"kind": "final-time", "psi": [1.0], "weight": 2.0}},
        {"newton": {"tol": 1e-9}},
        {"reference": {"solver": "rk45"}},
        {"adjoint": {"refinement": 2}},
        {"output": {"dir": "/tmp/x"}},
    ]
    for patch in bad_sections:
        with pytest.raises(CliError, match="unknown keys"):
            run(base_config(**patch))


def test_config_requires_core_sections():
    doc = base_config()
    del doc["qoi"]
    with pytest.raises(CliError, match="missing keys"):
        run(doc)


def test_config_grid_takes_k_or_n_not_both():
    with pytest.raises(CliError, match="not both"):
        run(base_config(grid={"t_end": 1.0, "k": 0.1, "n": 10}))
    with pytest.raises(CliError, match="needs k or n"):
        run(base_config(grid={"t_end": 1.0}))


def test_config_step_must_divide_horizon():
    with pytest.raises(CliError, match="does not divide"):
        run(base_config(grid={"t_end": 1.0, "k": 0.3}))
    cfg = RunConfig.from_dict(base_config(grid={"t_end": 1.0, "n": 20}))
    assert cfg.grid["n"] == 20
    assert cfg.grid["k"] == pytest.approx(0.05)


def test_config_missing_problem_parameter():
    doc = base_config(problem={"name": "scalar-linear", "lam_f": 0.0,
                               "y0": 1.0})
    with pytest.raises(CliError, match="missing keys.*lam_g"):
        run(doc)


def test_config_unknown_problem_and_qoi():
    with pytest.raises(CliError, match="unknown problem"):
        run(base_config(problem={"name": "heat"}))
    with pytest.raises(CliError, match="unknown qoi kind"):
        run(base_config(qoi={"kind": "average"}))


def test_config_records_defaults_used():
    cfg = RunConfig.from_dict(base_config(newton={"max_iters": 30}))
    assert "newton.abs_tol" in cfg.defaults_used
    assert "newton.max_iters" not in cfg.defaults_used
    assert "adjoint.refine" in cfg.defaults_used
    assert cfg.resolved()["reference"]["max_step"] == "inf"


def test_config_derives_alfven_speed():
    doc = {
        "scheme": "ssp332",
        "problem": {"name": "mhd-alfven", "h": 0.05},
        "grid": {"t_end": 0.01, "n": 2},
        "qoi": {"kind": "integral-v"},
    }
    cfg = RunConfig.from_dict(doc)
    assert cfg.problem["A0"] == pytest.approx(10.0)
    assert cfg.problem["v_mode"] == "v-split"


def test_run_reports_estimate_and_effectivity():
    row = run(base_config())
    assert row.scheme == "Mid(1,2,2)"
    assert row.computed_error == pytest.approx(row.e1 + row.e2 + row.e3)
    assert row.effectivity == pytest.approx(1.0, abs=1e-2)
    assert row.metadata["linearization"] == "exact-linear"
    assert row.metadata["reference_mode"] == "analytic"
    true_err = row.metadata["true_error"]
    assert row.computed_error == pytest.approx(true_err, rel=1e-2)


def test_run_zero_field_row_has_exact_zeros_and_no_effectivity():
    doc = base_config(problem={"name": "scalar-linear", "lam_f": 0.0,
                               "lam_g": 0.0, "y0": 1.0})
    row = run(doc)
    assert row.computed_error == 0.0
    assert row.e1 == row.e2 == row.e3 == 0.0
    assert row.effectivity is None
    vals = row.csv_values(with_components=False)
    assert vals[2] == "NA"
    assert vals[3] == "0.00000E+00"


def test_run_stage_label_on_pipeline_failure():
    doc = base_config(qoi={"kind": "final-time", "psi": [1.0, 2.0]})
    with pytest.raises(CliError, match=r"\[problem\].*psi length"):
        run(doc)


def test_run_accepts_time_integrated_qoi():
    doc = base_config(qoi={"kind": "time-integrated", "psi_tilde_const": [1.0]})
    row = run(doc)
    want = (1.0 - np.exp(-1.0))
    assert row.metadata["reference_qoi"] == pytest.approx(want, abs=1e-10)
    assert row.effectivity == pytest.approx(1.0, abs=1e-2)


def test_report_row_component_columns():
    row = ReportRow(scheme="s", computed_error=1.0, effectivity=None,
                    e1=0.5, e2=0.25, e3=0.25,
                    components={"v": (1.0, 2.0, 3.0), "B": (4.0, 5.0, 6.0)})
    vals = row.csv_values(with_components=True)
    assert len(vals) == 6 + len(COMPONENT_COLUMNS)
    # column order interleaves blocks per term: E1_v, E1_B, E2_v, ...
    assert vals[6:] == ["1.00000E+00", "4.00000E+00", "2.00000E+00",
                        "5.00000E+00", "3.00000E+00", "6.00000E+00"]
    missing = ReportRow(scheme="s", computed_error=1.0, effectivity=1.0,
                        e1=1.0, e2=0.0, e3=0.0)
    assert missing.csv_values(with_components=True)[6:] == ["NA"] * 6


def test_write_report_csv_layout(tmp_path):
    row = run(base_config())
    path = tmp_path / "row.csv"
    write_report_csv(str(path), [row], table_id=4)
    lines = path.read_text().splitlines()
    assert lines[0] == "# table: 4"
    assert lines[1] == "scheme,computed_error,effectivity,E1,E2,E3"
    assert lines[2].startswith("# config: {")
    echoed = json.loads(lines[2].split("# config: ", 1)[1])
    assert echoed["adjoint"]["refine"] == 4
    assert echoed["newton"]["abs_tol"] == 1e-12
    assert lines[3].startswith("Mid(1,2,2),")


def test_reproduce_table_rows_in_published_order(tmp_path):
    out = tmp_path / "table4.csv"
    rows = reproduce_table(4, out_csv=str(out))
    assert [r.scheme for r in rows] == ["Mid(1,2,2)", "SSP3(3,3,2)",
                                        "SSP3(4,3,3)"]
    text = out.read_text()
    assert text.count("# config:") == 3
    assert text.splitlines()[0] == "# table: 4"


def test_reproduce_table_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    reproduce_table(4, out_csv=str(a))
    reproduce_table(4, out_csv=str(b))
    assert a.read_bytes() == b.read_bytes()


def test_table_config_validates_id():
    with pytest.raises(ValueError, match="table id"):
        table_config(3, "mid122")
    doc = table_config(12, "ssp343")
    assert doc["problem"]["swap_roles"] is True
    assert doc["qoi"] == {"kind": "mean-left-half"}
    doc = table_config(16, "mid122")
    assert doc["components"] is True
    assert doc["qoi"] == {"kind": "integral-v"}


def test_thread_count_env_validation(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "abc")
    with pytest.raises(CliError, match="integer"):
        reproduce_table(4)
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(CliError, match=">= 1"):
        reproduce_table(4)


def test_series_emission(tmp_path):
    out = tmp_path / "series"
    doc = base_config(output={"series_dir": str(out), "name": "demo",
                              "series_indices": [0]})
    run(doc)
    names = sorted(os.listdir(out))
    assert names == ["demo_Y_state0.csv", "demo_eterms.csv",
                     "demo_figure.txt", "demo_phi_state0.csv"]
    ylines = (out / "demo_Y_state0.csv").read_text().splitlines()
    assert ylines[0] == "# run: demo; series: Y[0]"
    assert ylines[1] == "t,value"
    assert len(ylines) == 2 + 21
    figure = (out / "demo_figure.txt").read_text()
    assert "stays bounded" in figure
    eterms = (out / "demo_eterms.csv").read_text().splitlines()
    assert eterms[1] == "t_mid,E1,E2,E3"
    assert len(eterms) == 2 + 20


def test_convergence_study_orders():
    prob = split_scalar_bernoulli(-2.0, 0.5, 1.0)
    rows = convergence_study(prob, "mid122", 0.1, 4, 1.0)
    assert len(rows) == 4
    assert rows[0]["order"] is None
    assert rows[-1]["order"] == pytest.approx(2.0, abs=0.1)
    ks = [r["k"] for r in rows]
    assert ks == [0.1, 0.05, 0.025, 0.0125]


def test_convergence_study_zero_field_has_no_orders():
    prob = split_scalar_linear(0.0, 0.0, 1.0)
    rows = convergence_study(prob, "mid122", 0.25, 3, 1.0)
    for r in rows:
        assert r["error"] == 0.0
        assert r["order"] is None


def test_convergence_study_argument_validation():
    prob = split_scalar_bernoulli(-2.0, 0.5, 1.0)
    with pytest.raises(ValueError, match="levels"):
        convergence_study(prob, "mid122", 0.1, 2, 1.0)
    with pytest.raises(ValueError, match="divide"):
        convergence_study(prob, "mid122", 0.3, 3, 1.0)


def test_main_run_verb(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(base_config()))
    assert main(["run", "--config", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("# config:")
    assert out[1] == "scheme,computed_error,effectivity,E1,E2,E3"
    assert out[2].startswith("Mid(1,2,2),")


def test_main_reports_config_errors_on_stderr(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(base_config(grid={"t_end": 1.0, "k": 0.3})))
    assert main(["run", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: [config]")
    assert "does not divide" in err


def test_pipeline_errors_echo_resolved_config(tmp_path, capsys):
    # once the config has resolved, failures carry it for reproduction
    path = tmp_path / "bad_psi.json"
    path.write_text(json.dumps(base_config(
        qoi={"kind": "final-time", "psi": [1.0, 2.0]})))
    assert main(["run", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: [problem]")
    echoed = err.split("config: ", 1)[1]
    assert json.loads(echoed)["grid"]["n"] == 20


def test_main_table_verb(tmp_path, capsys):
    out = tmp_path / "t4.csv"
    assert main(["table", "--id", "4", "--out", str(out)]) == 0
    assert out.exists()
    assert "wrote 3 rows" in capsys.readouterr().out


def test_main_converge_verb(tmp_path, capsys):
    doc = {
        "scheme": "ssp332",
        "problem": {"name": "scalar-bernoulli", "lam": -2.0, "mu": 0.5,
                    "y0": 1.0},
        "grid": {"t_end": 1.0, "k": 0.1},
        "qoi": {"kind": "final-time", "psi": [1.0]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    assert main(["converge", "--config", str(path), "--levels", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1] == "k,error,order"
    assert out[2].endswith("NA")
    assert len(out) == 2 + 3


def test_main_dump_tableau_verb(capsys):
    assert main(["dump-tableau", "--scheme", "ssp332"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["name"] == "SSP3(3,3,2)"
    assert doc["implicit"]["d"][2] == pytest.approx(0.5)


def test_main_unknown_scheme_is_reported(capsys):
    assert main(["dump-tableau", "--scheme", "rk4"]) == 1
    assert "error:" in capsys.readouterr().err


def test_reference_cache_consistency():
    row1 = run(base_config())
    row2 = run(base_config())
    assert row1.metadata["reference_qoi"] == row2.metadata["reference_qoi"]
    assert row1.csv_values(False) == row2.csv_values(False)
