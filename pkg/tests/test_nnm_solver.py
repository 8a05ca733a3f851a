import json
import math

import numpy as np
import pytest

from unilateral_nnm.analysis import harmonic_purity
from unilateral_nnm.nnm_solver import (
    Branch,
    ContinuationError,
    DegenerateOrbitError,
    NNMConvergenceError,
    NNMResult,
    continue_nnm,
    orbit,
    orbit_energy,
    shoot_residual,
    solve_nnm,
)
from unilateral_nnm.one_dof import exact_frequency
from unilateral_nnm.system import OscillatorSystem, ValidationError, preset

TOL = 1e-10


class TestResidual:
    def test_linear_mode_is_periodic(self):
        s = preset("chain3", 0.0)
        for j in range(3):
            X0 = 0.4 * np.eye(3)[j]
            r = shoot_residual(s, X0, 2 * math.pi / s.lambdas[j], 0.0, TOL)
            assert r.size == 4
            assert np.max(np.abs(r[:3])) <= 10 * TOL

    def test_one_dof_exact_period(self):
        eps = 0.1
        s = OscillatorSystem.one_dof(1.0, eps)
        r = shoot_residual(s, [0.8], 2 * math.pi / exact_frequency(1.0, eps), 1.0, TOL)
        assert abs(r[0]) <= 10 * TOL
        # energy entry: (1/2) 0.8^2 - c eps
        assert r[1] == pytest.approx(0.32 - 0.1, abs=1e-15)

    def test_velocity_rows(self):
        s = OscillatorSystem.one_dof(1.0, 0.1)
        r = shoot_residual(s, [1.0], 2.0, 1.0, TOL, include_velocity=True)
        assert r.size == 3

    def test_rejects_bad_period(self):
        with pytest.raises(ValidationError):
            shoot_residual(preset("chain2"), [1.0, 0.0], -1.0, 1.0)


class TestSolve:
    def test_one_dof_frequency(self):
        eps = 0.1
        s = OscillatorSystem.one_dof(1.0, eps)
        c = 0.5 / eps  # amplitude 1
        res = solve_nnm(s, [1.0], 2 * math.pi, c, TOL)
        assert 2 * math.pi / res.T == pytest.approx(exact_frequency(1.0, eps), rel=1e-8)
        assert res.residual_norm <= TOL
        assert abs(res.X0[0]) == pytest.approx(1.0, rel=1e-9)

    def test_exact_guess_needs_no_iteration(self):
        s = preset("chain2", 0.0)
        res = solve_nnm(s, np.zeros(2), 2 * math.pi, 1.0, TOL)
        assert res.iterations <= 1

    def test_converged_point_properties(self):
        s = preset("chain5", 0.063)
        c = 0.03 / 0.063
        X0 = np.zeros(5)
        X0[0] = math.sqrt(2 * 0.03) / s.lambdas[0]
        res = solve_nnm(s, X0, 2 * math.pi / s.lambdas[0], c, TOL)
        assert res.residual_norm <= TOL
        assert np.linalg.norm(shoot_residual(s, res.X0, res.T, c, TOL)) <= TOL
        assert abs(orbit_energy(s, res.X0) - 0.03) <= TOL
        assert res.velocity_residual <= 10 * TOL * max(1.0, np.linalg.norm(s.lambdas * res.X0))
        orb = orbit(s, res, n_periods=16, samples_per_period=64)
        assert harmonic_purity(orb.positions[:, 0], 64) >= 60.0

    def test_non_convergence_carries_best(self):
        s = OscillatorSystem.one_dof(1.0, 0.1)
        with pytest.raises(NNMConvergenceError) as info:
            solve_nnm(s, [1.3], 5.0, 5.0, TOL, max_iter=1)
        best = info.value.best
        assert isinstance(best, NNMResult)
        assert best.residual_norm > TOL

    def test_degenerate_family(self):
        # equal frequencies without contact: every point of the energy circle is periodic
        s = OscillatorSystem([1.0, 1.0], np.zeros((2, 2)), np.zeros(2), 0.1)
        with pytest.raises(DegenerateOrbitError):
            solve_nnm(s, [1.001, 0.0], 2 * math.pi, 5.0, TOL)

    def test_result_round_trip(self):
        r = NNMResult(np.array([0.1, 0.2]), 6.0, 0.3, 0.05, 1e-12, 0, 3)
        d = json.loads(json.dumps(r.to_dict()))
        back = NNMResult.from_dict(d)
        np.testing.assert_array_equal(back.X0, r.X0)
        assert back.T == r.T and back.frequency == pytest.approx(2 * math.pi / 6.0)


class TestContinuation:
    def test_one_dof_branch(self):
        s = OscillatorSystem.one_dof(1.0, 0.0)
        branch = continue_nnm(s, 0, 1.0, 0.02, 0.2, 0.06, TOL)
        assert branch.complete
        assert branch[-1].eps == pytest.approx(0.2)
        for r in branch:
            assert r.frequency == pytest.approx(exact_frequency(1.0, r.eps), rel=1e-8)
            assert r.residual_norm <= TOL

    def test_no_contact_branch_is_linear(self):
        s = OscillatorSystem.one_dof(1.3, 0.0, 1.0, 5.0)
        branch = continue_nnm(s, 0, 1.0, 0.01, 0.05, 0.02, TOL)
        for r in branch:
            assert r.T == pytest.approx(2 * math.pi / 1.3, rel=1e-9)

    def test_starts_on_linear_mode(self):
        s = preset("chain3")
        branch = continue_nnm(s, 0, 1.0, 0.01, 0.02, 0.01, TOL)
        first = branch[0]
        assert first.eps == 0.01
        assert np.all(np.abs(first.X0[1:]) <= 1e-9 * abs(first.X0[0]))
        assert abs(first.X0[0]) == pytest.approx(math.sqrt(2 * 0.01) / s.lambdas[0], rel=1e-3)

    def test_downward_sweep(self):
        s = OscillatorSystem.one_dof(1.0, 0.0)
        branch = continue_nnm(s, 0, 1.0, 0.1, 0.05, 0.05, TOL)
        assert [round(r.eps, 12) for r in branch] == [0.1, 0.05]

    def test_cannot_start(self):
        s = OscillatorSystem.one_dof(1.0, 0.0)
        with pytest.raises(ContinuationError):
            continue_nnm(s, 0, 1.0, 0.5, 0.6, 0.1, TOL, max_iter=0)

    def test_lost_branch_is_partial(self, monkeypatch):
        # every solve after the first fails: delta halves down to 1e-6 delta0
        import unilateral_nnm.nnm_solver as ns

        real = ns.solve_nnm
        calls = []

        def flaky(*args, **kw):
            calls.append(args[0].eps)
            if len(calls) > 1:
                raise NNMConvergenceError("forced failure")
            return real(*args, **kw)

        monkeypatch.setattr(ns, "solve_nnm", flaky)
        branch = ns.continue_nnm(OscillatorSystem.one_dof(1.0, 0.0), 0, 1.0, 0.01, 0.1, 0.02, TOL)
        assert not branch.complete
        assert len(branch) == 1
        assert "branch lost" in branch.diagnostic
        # 0.02 / 2**k < 2e-8 first holds at k = 20
        assert len(calls) == 1 + 20
        assert calls[-1] == pytest.approx(0.01 + 0.02 / 2**19)

    def test_bad_arguments(self):
        with pytest.raises(ValidationError):
            continue_nnm(preset("chain2"), 5, 1.0, 0.01, 0.02, 0.01)
        with pytest.raises(ValidationError):
            continue_nnm(preset("chain2"), 0, 1.0, 0.01, -0.02, 0.01)

    def test_branch_files(self, tmp_path):
        s = OscillatorSystem.one_dof(1.0, 0.0)
        branch = continue_nnm(s, 0, 1.0, 0.02, 0.04, 0.02, TOL)
        branch.to_csv(tmp_path / "b.csv")
        branch.to_json(tmp_path / "b.json")
        rows = (tmp_path / "b.csv").read_text().splitlines()
        assert rows[0] == "eps,T,frequency,energy,residual,iterations"
        assert len(rows) == len(branch) + 1
        doc = json.loads((tmp_path / "b.json").read_text())
        assert doc["complete"] and len(doc["points"]) == len(branch)
        assert isinstance(branch, Branch)
