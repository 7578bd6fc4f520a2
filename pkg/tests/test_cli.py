import csv
import json
import subprocess
import sys
import math

import numpy as np
import pytest

from monitored_entanglement import presets
from monitored_entanglement.cli import ConfigError, config_from_dict, main, parse_initial, validate
from monitored_entanglement.model import MonitoredModel, ModelError
from monitored_entanglement.modelfile import load_model, model_from_dict, model_to_dict, save_model
from monitored_entanglement.qcore import SX, bell_basis, local


def write_config(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


SIMULATE = """
[model]
preset = "local_jump"
params = {{ gamma = 1.0, omega0 = 1.0 }}
initial = "bell0"

[run]
T = 0.2
dt = 1e-3
n_traj = 20
seed = 4
mode = "{mode}"
observables = ["concurrence", "weight", "counts", "state"]
record_every = 50
"""


@pytest.mark.parametrize("mode", ["P", "Q"])
def test_simulate_writes_outputs(tmp_path, mode):
    cfg = write_config(tmp_path, SIMULATE.format(mode=mode))
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--traj-dump", "2"]) == 0
    header, data = read_csv(out / "simulate.csv")
    assert header[:3] == ["t", "concurrence", "concurrence_se"]
    assert "counts_N1" in header and "rho11_re" in header
    assert data.shape[0] == 5
    assert np.allclose(data[:, 1], 1.0)  # local jumps keep the concurrence of a Bell state
    summary = json.loads((out / "simulate.json").read_text())
    assert summary["mode"] == mode and summary["n_traj"] == 20
    th, traj = read_csv(out / "traj_0001.csv")
    assert th[:2] == ["t", "weight"] and th[-1] == "N_N2"
    assert traj.shape[0] == 201


def test_simulate_is_reproducible_and_seed_overrides(tmp_path):
    cfg = write_config(tmp_path, SIMULATE.format(mode="P"))
    for name, seed in (("a", "4"), ("b", "4"), ("c", "5")):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--seed", seed]) == 0
    a = (tmp_path / "a" / "simulate.csv").read_text()
    assert a == (tmp_path / "b" / "simulate.csv").read_text()
    assert a != (tmp_path / "c" / "simulate.csv").read_text()


def test_master_reports_esd(tmp_path, capsys):
    cfg = write_config(tmp_path, """
[model]
preset = "local_diffusive"
initial = "esd"
[run]
T = 2.0
dt = 1e-3
""")
    assert main(["master", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    summary = json.loads((tmp_path / "m" / "master.json").read_text())
    assert abs(summary["esd_time"] + math.log(math.sqrt(2) - 1)) < 1e-4
    assert "t_D" in capsys.readouterr().out
    _, data = read_csv(tmp_path / "m" / "master.csv")
    assert np.allclose(data[:, -1], 1.0)


def test_oracle_command(tmp_path):
    cfg = write_config(tmp_path, """
[model]
preset = "swap_witness"
params = { nu = 1.0 }
initial = "bell1"
[run]
T = 2.0
dt = 1e-2
""")
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "oracle.json").read_text())
    assert abs(summary["esd_time"] - math.log(3)) < 1e-8
    header, data = read_csv(tmp_path / "o" / "oracle.csv")
    assert "mean_concurrence" in header and np.allclose(data[:, header.index("mean_concurrence")], 1)


def test_oracle_without_closed_form_is_config_error(tmp_path):
    cfg = write_config(tmp_path, """
[model]
preset = "nonlocal_diffusive"
params = { omega0 = 1.0 }
initial = "bell0"
""")
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_sweep(tmp_path):
    cfg = write_config(tmp_path, """
[model]
preset = "local_diffusive"
initial = "bell0"
[run]
T = 0.1
dt = 1e-3
n_traj = 10
observables = ["concurrence"]
sweep = { param = "phi1", values = [0.0, 1.5707963267948966] }
""")
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    header, data = read_csv(out / "sweep.csv")
    assert header == ["index", "phi1", "seed", "concurrence_final", "concurrence_final_se"]
    assert data.shape == (2, 5) and (out / "point_001" / "simulate.csv").exists()
    assert data[1, 3] > data[0, 3]


@pytest.mark.parametrize("text", [
    "[model]\npreset = 'local_jump'\n[run]\nT = -1\n",
    "[model]\npreset = 'local_jump'\n[run]\nmode = 'R'\n",
    "[model]\npreset = 'nope'\n",
    "[model]\n",
    "[model]\npreset = 'local_jump'\nfile = 'x.toml'\n",
    "[model]\npreset = 'local_jump'\ninitial = 'bell9'\n",
    "[model]\npreset = 'local_jump'\n[run]\nobservables = ['energy']\n",
    "[model]\npreset = 'local_jump'\n[extra]\n",
    "[model]\npreset = 'local_jump'\nparams = { rates = [500.0, 1.0] }\n",
    "[model]\nfile = 'missing.toml'\n",
    "[model\n",
])
def test_config_errors_exit_1(tmp_path, text):
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_missing_config_exit_1(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 1


def test_unwritable_output_exit_1(tmp_path):
    cfg = write_config(tmp_path, SIMULATE.format(mode="P"))
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", cfg, "--out", str(blocker / "sub")]) == 1


def test_numerical_failure_exit_2(tmp_path):
    from monitored_entanglement.qcore import SM

    m = MonitoredModel(H=np.zeros((4, 4)), L=(local(SM, 1),), d=0, lambdas=(5.0,))
    save_model(m, tmp_path / "killer.toml")
    cfg = write_config(tmp_path, """
[model]
file = "killer.toml"
initial = "00"
[run]
T = 3.0
dt = 1e-3
n_traj = 10
mode = "Q"
observables = ["weight"]
""")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, SIMULATE.format(mode="P").replace("n_traj = 20", "n_traj = 2"))
    proc = subprocess.run([sys.executable, "-m", "monitored_entanglement", "simulate", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_parse_initial():
    assert np.allclose(parse_initial("bell2"), bell_basis()[2])
    assert np.allclose(parse_initial([[1, 0], [0, 0], [0, 0], [1, 0]]), bell_basis()[0])
    rho = parse_initial([[0.25, 0]] * 1 + [[0, 0]] * 4 + [[0.25, 0]] + [[0, 0]] * 4 + [[0.25, 0]]
                        + [[0, 0]] * 4 + [[0.25, 0]])
    assert np.allclose(rho, np.eye(4) / 4)
    with pytest.raises(ConfigError):
        parse_initial([[0, 0]] * 4)
    with pytest.raises(ConfigError):
        parse_initial([[1, 0]] * 3)


def test_validate_rejects_dt_above_T():
    cfg = config_from_dict(dict(model=dict(preset="local_jump"), run=dict(T=0.1, dt=0.2)))
    with pytest.raises(ConfigError):
        validate(cfg)


@pytest.mark.parametrize("pid,kw", [
    ("local_diffusive", dict(phi1=0.3)),
    ("nonlocal_diffusive", dict(theta=0.2, omega0=1.0)),
    ("swap_witness", dict(nu=0.5, refined=True)),
    ("gammadelta", dict(variant=2, side="both")),
])
def test_model_file_round_trip(tmp_path, pid, kw):
    m = presets.build(pid, **kw).model
    save_model(m, tmp_path / "m.toml")
    back = load_model(tmp_path / "m.toml")
    assert model_to_dict(back) == model_to_dict(m)


def test_model_file_time_dependent_round_trip(tmp_path, rng):
    v = [(0.0, np.array([0.1, 0.2j])), (1.5, np.array([1.0, 0.0]))]
    m = MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1), local(SX, 2)), d=1, lambdas=(0.3,), v=v)
    save_model(m, tmp_path / "m.toml")
    back = load_model(tmp_path / "m.toml")
    assert back.breakpoints == (0.0, 1.5)
    assert np.array_equal(back.v.at(2.0), m.v.at(2.0))


def test_model_file_errors(tmp_path):
    with pytest.raises(ModelError):
        model_from_dict(dict(kind="monitored", H=[[0, 0]] * 16))
    with pytest.raises(ModelError):
        model_from_dict(dict(kind="other"))
    (tmp_path / "bad.toml").write_text("H = [")
    with pytest.raises(ModelError):
        load_model(tmp_path / "bad.toml")
