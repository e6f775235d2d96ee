import json
import os

import numpy as np
import pytest

from thermocontact import cli
from thermocontact.config import (ConfigError, parse_config,
                                  parse_material_file)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def _cfg(name):
    return os.path.join(CONFIG_DIR, name)


def test_parse_shipped_material_file():
    mat = parse_material_file(_cfg("default.mat"))
    assert mat.bulk.lam == 1.0
    assert mat.interface.gamma_C.kappa_C == 1000.0
    assert mat.interface.frict(0.0, 1.0) == pytest.approx(0.3)
    assert mat.interface.a0(0.7) == 0.0
    assert mat.interface.kappa_N(1.0) == pytest.approx(50.0)


def test_parse_shipped_run_config():
    spec = parse_config(_cfg("friction_heating.cfg"))
    scn = spec.scenario
    assert scn.T == pytest.approx(0.2)
    assert scn.tau == pytest.approx(0.002)
    assert scn.n_steps == 100
    assert np.all(scn.initial.alpha == 0.0)
    up = scn.initial.v[0::2]
    assert up.max() == pytest.approx(0.5)


def test_units_rescale_inputs(tmp_path):
    # reference units divide every dimensional entry on input:
    # lengths by L, times by t, tractions by sigma, body force by sigma/L
    base = parse_config(_cfg("friction_heating.cfg")).scenario
    text = open(_cfg("friction_heating.cfg")).read()
    text = text.replace("length = 1.0", "length = 2.0")
    text = text.replace("time = 1.0", "time = 4.0")
    p = tmp_path / "scaled.cfg"
    p.write_text(text.replace("file = default.mat",
                              f"file = {_cfg('default.mat')}"))
    scaled = parse_config(p).scenario
    assert scaled.T == pytest.approx(base.T / 4.0)
    assert scaled.tau == pytest.approx(base.tau / 4.0)
    assert np.allclose(scaled.ops.mesh.nodes, base.ops.mesh.nodes / 2.0)
    # velocity reference L/t: 0.5 / (2/4) = 1.0
    assert scaled.initial.v[0::2].max() == pytest.approx(1.0)
    # body force reference sigma/L: 2.0 / (1/2) = 4.0
    assert scaled.loads.g_table(0.0) == pytest.approx(4.0)


def test_config_errors(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[scenario]\nT = 1.0\n")
    with pytest.raises(ConfigError, match="units"):
        parse_config(p)
    p.write_text("[units]\nlength = 1\ntime = 1\nstress = 1\n"
                 "temperature = 1\n[scenario]\nT = 1.0\ntau = -0.1\n")
    with pytest.raises(ConfigError, match="positive"):
        parse_config(p)
    p.write_text("[units]\nlength = 1\ntime = 1\nstress = 1\n"
                 "temperature = 1\n[scenario]\nT = 1.0\ntau = 0.3\n")
    with pytest.raises(ConfigError, match="divide"):
        parse_config(p)
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.cfg")


def test_cli_run_null_bundle(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", _cfg("null.cfg"), "--out", str(out)])
    assert code == 0
    assert (out / "ledger.csv").exists()
    assert (out / "energies.png").exists()
    assert (out / "diagnostics.png").exists()
    assert (out / "interface.png").exists()
    assert (out / "snapshots" / "fields_initial.txt").exists()
    assert (out / "snapshots" / "grid_final.vtk").exists()
    rep = json.loads((out / "run_report").read_text())
    assert all(c["passed"] for c in rep["hard_invariants"])
    assert rep["steps"] == 5


def test_cli_run_bad_config_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[units]\nlength = 1\ntime = 1\nstress = 1\n"
                 "temperature = 1\n[scenario]\ntau = -1\n")
    assert cli.main(["run", str(p)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_study(tmp_path):
    out = tmp_path / "study"
    code = cli.main(["study", _cfg("shear_study.cfg"),
                     "--tau-list", "0.01,0.005", "--out", str(out)])
    assert code == 0
    table = (out / "study.csv").read_text().strip().splitlines()
    assert table[0].split(",")[0] == "tau"
    assert len(table) == 3
    # refinement shrinks the displacement error
    e1 = float(table[1].split(",")[1])
    e2 = float(table[2].split(",")[1])
    assert e2 < e1


def test_cli_study_rejects_non_dividing_tau(capsys):
    assert cli.main(["study", _cfg("shear_study.cfg"),
                     "--tau-list", "0.013"]) == 2
    assert "divide" in capsys.readouterr().err


def test_cli_threads_flag_is_accepted(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--threads", "1", "run", _cfg("null.cfg"),
                     "--out", str(out)]) == 0
