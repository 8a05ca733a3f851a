"""Command-line behaviour: files written, exit codes, byte-stable output."""

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from unilateral_nnm.cli import dumps, main
from unilateral_nnm.ndof_expansion import periodic_initial_amplitudes
from unilateral_nnm.one_dof import exact_frequency
from unilateral_nnm.system import preset


def run(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return main(argv)


def load(path):
    return json.loads(path.read_text())


class TestExpand1Dof:
    def test_homogeneous_preset(self, tmp_path):
        assert run(tmp_path, "expand1dof", "--preset", "1dof-homogeneous") == 0
        doc = load(tmp_path / "expand1dof.json")
        assert doc["omega1"] == 0.25 and doc["omega2"] == -0.125
        assert doc["case"] == "homogeneous"
        rows = list(csv.reader(open(tmp_path / "expand1dof_reconstruction.csv")))
        assert rows[0] == ["s", "v0", "v0_plus_eps_v1"]

    def test_no_contact(self, tmp_path):
        assert run(tmp_path, "expand1dof", "--set", "b=2.0", "--set", "a0=1.0") == 0
        assert load(tmp_path / "expand1dof.json")["case"] == "no_contact"

    def test_malformed_gap(self, tmp_path, capsys):
        code = run(tmp_path, "expand1dof", "--set", "b=2.0", "--set", "require_contact=true")
        assert code == 2
        assert "> 1" in capsys.readouterr().err

    def test_bad_tolerance(self, tmp_path):
        assert run(tmp_path, "expand1dof", "--tol", "1.0") == 2

    def test_bytes_are_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        for d in (a, b):
            assert run(d, "expand1dof", "--preset", "1dof-offset", "--set", "n_max=64") == 0
        for name in ("expand1dof.json", "expand1dof_reconstruction.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestExpandNDof:
    def test_chain_round_trip(self, tmp_path):
        assert run(tmp_path, "expandndof", "--preset", "chain3") == 0
        doc = load(tmp_path / "expandndof.json")
        assert len(doc["a_k"]) == 3 and len(doc["series"]) == 3
        assert dumps(doc) == (tmp_path / "expandndof.json").read_text()

    def test_diagonal_first_order(self, tmp_path):
        assert run(tmp_path, "expandndof", "--preset", "modal3") == 0
        doc = load(tmp_path / "expandndof.json")
        assert doc["omega1"] == pytest.approx((1 / 3) / 4, rel=1e-14)

    def test_closed_form_amplitudes_are_library_values(self, tmp_path):
        assert run(tmp_path, "expandndof", "--preset", "modal3", "--set", "a0=0.8") == 0
        doc = load(tmp_path / "expandndof.json")
        lib = periodic_initial_amplitudes(preset("modal3"), 0, 0.8, 400)
        assert doc["a_k_closed_form"] == lib.tolist()

    def test_all_modes_block(self, tmp_path):
        assert run(tmp_path, "expandndof", "--preset", "modal3", "--set", "amplitudes=[1, 0.5, 0.2]") == 0
        block = load(tmp_path / "expandndof.json")["all_modes"]
        np.testing.assert_allclose(block["lambda1"], [1 / 12, 1 / (12 * math.sqrt(2)), 1 / (12 * math.sqrt(5))])

    def test_resonance_exit(self, tmp_path, capsys):
        cfg = {"system": {"lambdas": [1.0, 2.0], "A": [[0.5, 0.5], [0.5, 0.5]], "B": [0.0, 0.0]}}
        assert run(tmp_path, "expandndof", config=cfg) == 3
        assert "k=" in capsys.readouterr().err


class TestSimulate:
    def test_linear(self, tmp_path):
        cfg = {"preset": "chain2", "eps": 0.0, "U0": [0.5, 0.1], "t_end": 10.0, "n_samples": 101}
        assert run(tmp_path, "simulate", config=cfg) == 0
        data = np.loadtxt(tmp_path / "timeseries.csv", delimiter=",", skiprows=1)
        t = data[:, 0]
        lam = preset("chain2").lambdas
        np.testing.assert_allclose(data[:, 1], 0.5 * np.cos(lam[0] * t), atol=1e-8)
        np.testing.assert_allclose(data[:, 2], 0.1 * np.cos(lam[1] * t), atol=1e-8)
        assert load(tmp_path / "timeseries.json")["system_hash"] == preset("chain2").digest()

    def test_period_and_drift(self, tmp_path):
        cfg = {"preset": "1dof-homogeneous", "eps": 0.1, "t_end": 60.0, "spectrum": True}
        assert run(tmp_path, "simulate", config=cfg) == 0
        rep = load(tmp_path / "simulate_report.json")
        assert rep["period"] == pytest.approx((1 + 1.1**-0.5) * math.pi, rel=1e-9)
        assert rep["energy_drift"] <= 100 * 1e-10
        assert (tmp_path / "spectrum.csv").exists()

    def test_divergence_exit(self, tmp_path):
        cfg = {"omega0": 1.0, "eps": -400.0, "t_end": 200.0, "tol": 1e-6}
        assert run(tmp_path, "simulate", config=cfg) == 4

    def test_missing_system(self, tmp_path):
        assert run(tmp_path, "simulate") == 2


class TestNNM:
    def test_one_dof_branch(self, tmp_path):
        cfg = {"omega0": 1.0, "eps_start": 0.02, "eps_end": 0.06, "delta0": 0.02, "c": 1.0}
        assert run(tmp_path, "nnm", config=cfg) == 0
        doc = load(tmp_path / "branch.json")
        assert doc["complete"]
        for p in doc["points"]:
            assert p["frequency"] == pytest.approx(exact_frequency(1.0, p["eps"]), rel=1e-8)
        assert doc["purity_db"] > 60
        assert (tmp_path / "branch.csv").exists()

    def test_cannot_start_exit(self, tmp_path):
        # a softening contact on the only mode: no periodic orbit starts at rest from X0 > 0
        cfg = {"system": {"lambdas": [1.0], "A": [[-50.0]], "B": [0.0]}, "eps_start": 0.1, "eps_end": 0.2}
        assert run(tmp_path, "nnm", config=cfg) == 5


class TestSpectrumCommand:
    def test_from_csv(self, tmp_path):
        t = np.linspace(0, 200 * math.pi, 4096, endpoint=False)
        path = tmp_path / "in.csv"
        np.savetxt(path, np.column_stack([t, 0.7 * np.cos(1.3 * t)]), delimiter=",", header="t,u_1", comments="")
        assert run(tmp_path, "spectrum", "--set", f"input=\"{path}\"") == 0
        peak = load(tmp_path / "spectrum.json")["peaks"][0]
        assert peak["frequency"] == pytest.approx(1.3, abs=1e-3)
        assert peak["amplitude"] == pytest.approx(0.7, rel=1e-2)


class TestValidate:
    def test_subset_passes(self, tmp_path, capsys):
        assert run(tmp_path, "validate", "--set", "only=[1, 2, 6]") == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 3
        rep = load(tmp_path / "validation.json")
        assert rep["passed"] and [c["id"] for c in rep["criteria"]] == [1, 2, 6]

    def test_wrong_omega2_fails(self, tmp_path, capsys):
        code = run(tmp_path, "validate", "--set", "only=[1]", "--set", 'inject={"omega2_offset": 0.1}')
        assert code == 6
        assert "[FAIL]" in capsys.readouterr().out
        assert not load(tmp_path / "validation.json")["passed"]


class TestSweep:
    def test_parallel_matches_serial(self, tmp_path):
        grid = "eps_grid=[0.02, 0.05, 0.1]"
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert run(a, "sweep", "--set", grid) == 0
        assert run(b, "sweep", "--set", grid, "--set", "workers=2") == 0
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
        for row in load(a / "sweep.json")["rows"]:
            assert row["measured_frequency"] == pytest.approx(row["exact_frequency"], rel=1e-8)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "unilateral_nnm", "expand1dof", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "expand1dof.json").exists()


def test_dumps_is_canonical():
    assert dumps({"b": 0.1, "a": [1, float("nan")], "c": True}) == '{"a": [1, "nan"], "b": 0.10000000000000001, "c": true}\n'
