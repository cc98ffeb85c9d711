import subprocess
import sys

import pytest

from phaseflow.cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO, EXIT_OK, main
from phaseflow.core.fieldio import load_field

SMALL = ["--set", "grid.n_x=64", "--set", "solver.dt=0.02", "--set", "solver.t_final=0.4"]


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("grid.n_x = 64\nsolver.dt = 0.02\nsolver.t_final = 0.4\noutput.snapshots = 10\n")
    return path


def test_eigen(tmp_path, capsys):
    assert main(["eigen", "--out", str(tmp_path), "--set", "solver.n_states=3", *SMALL]) == EXIT_OK
    lines = capsys.readouterr().out.split("\n")
    assert float(lines[0].split()[1]) == pytest.approx(0.5, abs=1e-6)
    assert (tmp_path / "eigen.csv").exists()
    psi = load_field(tmp_path / "state_002.pbf")
    assert psi.norm2() == pytest.approx(1.0)


def test_evolve_quantum(tmp_path, cfg_file):
    assert main(["evolve-quantum", "--config", str(cfg_file), "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "quantum.csv").read_text().splitlines()
    assert rows[0] == "t,norm,energy" and len(rows) == 4
    assert load_field(tmp_path / "psi_0002.pbf").t == pytest.approx(0.4)


def test_evolve_classical(tmp_path, cfg_file):
    assert main(["evolve-classical", "--config", str(cfg_file), "--out", str(tmp_path)]) == EXIT_OK
    assert len((tmp_path / "classical.csv").read_text().splitlines()) == 4
    assert load_field(tmp_path / "w_0002.pbf").mass().real == pytest.approx(1.0, abs=1e-8)


def test_evolve_classical_ensemble(tmp_path, cfg_file):
    args = ["evolve-classical", "--config", str(cfg_file), "--out", str(tmp_path),
            "--set", "solver.classical=ensemble", "--set", "solver.n_samples=2000"]
    assert main(args) == EXIT_OK
    assert (tmp_path / "ensemble.csv").exists() and (tmp_path / "w_0000.pbf").exists()


def test_wigner(tmp_path):
    assert main(["wigner", "--out", str(tmp_path), *SMALL]) == EXIT_OK
    for name in ("wigner.pbf", "transform.pbf", "wigner.csv"):
        assert (tmp_path / name).exists()
    assert main(["wigner", "--out", str(tmp_path / "b"), "--set", "output.csv=false", *SMALL]) == EXIT_OK
    assert not (tmp_path / "b" / "wigner.csv").exists()


def test_compare(tmp_path, cfg_file, capsys):
    assert main(["compare", "--config", str(cfg_file), "--out", str(tmp_path), "--seed", "5"]) == EXIT_OK
    assert "max_l2_rel" in capsys.readouterr().out
    assert (tmp_path / "run_equivalence.csv").exists()
    assert '"seed": 5' in (tmp_path / "run_equivalence.json").read_text()


def test_theorem(tmp_path):
    args = ["theorem", "--out", str(tmp_path), "--set", "grid.n_x=64", "--set", "grid.length=2",
            "--set", "grid.boundary=periodic", "--set", "initial.kind=coefficients",
            "--set", "initial.coeffs=1,1j", "--set", "output.prefix=box"]
    assert main(args) == EXIT_OK
    assert (tmp_path / "box_theorem.csv").exists()


def test_sweep(tmp_path):
    args = ["sweep", "--out", str(tmp_path), "--axis", "dt", "--values", "0.1,0.05,0.025", *SMALL]
    assert main(args) == EXIT_OK
    assert (tmp_path / "run_sweep_dt.json").exists()


def test_config_errors(tmp_path, cfg_file, capsys):
    assert main(["eigen", "--out", str(tmp_path), "--set", "grid.nx=64"]) == EXIT_CONFIG
    assert "unknown configuration key" in capsys.readouterr().err
    assert main(["eigen", "--out", str(tmp_path), "--set", "grid.n_x"]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("system.mass = heavy\n")
    assert main(["eigen", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["sweep", "--out", str(tmp_path), "--values", "0.1,0.2", *SMALL]) == EXIT_CONFIG


def test_missing_config_is_io_error(tmp_path):
    assert main(["eigen", "--config", str(tmp_path / "nope.cfg")]) == EXIT_IO


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["wigner", "--out", str(blocker / "sub"), *SMALL]) == EXIT_IO


@pytest.mark.filterwarnings("ignore")
def test_divergence_exit(tmp_path):
    args = ["evolve-classical", "--out", str(tmp_path), "--set", "grid.n_x=64",
            "--set", "potential.form=polynomial", "--set", "potential.coeffs=0,0,0,0,-1e300",
            "--set", "solver.dt=1", "--set", "solver.t_final=2",
            "--set", "solver.classical=ensemble", "--set", "solver.n_samples=100"]
    assert main(args) == EXIT_DIVERGENCE


def test_module_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "phaseflow.cli", "wigner", "--out", str(tmp_path), *SMALL],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("mass 1")
    out = subprocess.run([sys.executable, "-m", "phaseflow.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "evolve-classical" in out.stdout
