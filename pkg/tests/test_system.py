import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unilateral_nnm.system import (
    OscillatorSystem,
    ValidationError,
    chain_matrices,
    jacobi_eigh,
    modal_from_physical,
    preset,
    z_independence_pairs,
)


def random_spd(rng, n):
    G = rng.normal(size=(n, n))
    return G @ G.T + n * np.eye(n)


class TestModalFromPhysical:
    def test_diagonal(self):
        lam = np.array([1.0, 1.7, 2.5])
        s = modal_from_physical(np.eye(3), np.diag(lam**2))
        np.testing.assert_allclose(s.lambdas, lam, rtol=1e-14)
        np.testing.assert_allclose(s.phi, np.eye(3), atol=1e-14)

    def test_two_mass_chain(self):
        s = modal_from_physical(*chain_matrices(2))
        np.testing.assert_allclose(s.lambdas**2, [1.0, 3.0], rtol=1e-14)

    def test_chain_closed_form(self):
        n = 5
        s = modal_from_physical(*chain_matrices(n))
        j = np.arange(1, n + 1)
        np.testing.assert_allclose(s.lambdas, 2 * np.sin(j * np.pi / (2 * (n + 1))), rtol=1e-13)

    @pytest.mark.parametrize("seed", range(5))
    def test_mass_orthonormal(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        m = rng.uniform(0.5, 3.0, n)
        K = random_spd(rng, n)
        s = modal_from_physical(np.diag(m), K, 0, 0.2)
        phi = s.phi
        np.testing.assert_allclose(phi.T @ np.diag(m) @ phi, np.eye(n), atol=1e-12)
        np.testing.assert_allclose(K @ phi, np.diag(m) @ phi * s.lambdas**2, atol=1e-10 * np.abs(K).max())
        np.testing.assert_allclose(s.A[0], phi[0])
        assert s.B[0] == 0.2 and np.all(s.A[1:] == 0)

    def test_validation(self):
        with pytest.raises(ValidationError):
            modal_from_physical(np.eye(2), [[2.0, -1.0], [-0.5, 2.0]])
        with pytest.raises(ValidationError):
            modal_from_physical(np.diag([1.0, -1.0]), np.eye(2))
        with pytest.raises(ValidationError):
            modal_from_physical(np.eye(2), [[1.0, 2.0], [2.0, 1.0]])


class TestJacobi:
    @given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
    @settings(max_examples=40, deadline=None)
    def test_against_lapack(self, G):
        S = 0.5 * (G + G.T)
        w, V = jacobi_eigh(S)
        ref = np.linalg.eigvalsh(S)
        scale = max(1.0, np.abs(S).max())
        np.testing.assert_allclose(w, ref, atol=1e-11 * scale)
        np.testing.assert_allclose(V.T @ V, np.eye(5), atol=1e-12)
        np.testing.assert_allclose(S @ V, V * w, atol=1e-10 * scale)

    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValidationError):
            jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


class TestZIndependence:
    def test_flags_integer_ratio(self):
        bad = z_independence_pairs([1.0, 2.0])
        assert (1, 0, 2, 1) in bad

    def test_flags_rational_ratio(self):
        assert z_independence_pairs([1.0, 1.5], ref=0)

    def test_passes_irrational(self):
        assert z_independence_pairs([1.0, math.sqrt(2), math.sqrt(5)]) == []


class TestOscillatorSystem:
    def test_one_dof_form(self):
        s = OscillatorSystem.one_dof(1.0, 0.1, 2.0, 0.5)
        u = np.array([0.8])
        # eps a (u - b)_+
        assert s.contact_force(u)[0] == pytest.approx(0.1 * 2.0 * 0.3)

    def test_round_trip_and_digest(self):
        s = preset("chain3", 0.05)
        t = OscillatorSystem.from_dict(s.to_dict())
        assert t == s
        assert t.digest() == s.digest()
        assert s.digest() != s.with_eps(0.06).digest()

    def test_contact_rows(self):
        np.testing.assert_array_equal(preset("chain5").contact_rows, [0])
        np.testing.assert_array_equal(preset("modal3").contact_rows, [0, 1, 2])

    def test_rejects_bad_frequencies(self):
        with pytest.raises(ValidationError):
            OscillatorSystem([1.0, -2.0], np.zeros((2, 2)), np.zeros(2))

    def test_unknown_preset(self):
        with pytest.raises(ValidationError):
            preset("nope")

    def test_presets_build(self):
        for name in ("1dof-homogeneous", "1dof-offset", "1dof-critical", "modal3", "chain2", "chain20"):
            s = preset(name, 0.01)
            assert s.eps == 0.01 and s.name == name
