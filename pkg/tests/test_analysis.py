"""Measurement instruments checked on signals with known answers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unilateral_nnm.analysis import (
    InsufficientDataError,
    abs_spectrum_gap,
    chi_integral,
    chi_remainder,
    error_ladder,
    expansion_error,
    fit_frequency,
    fit_mode_frequencies,
    harmonic_purity,
    mean_coefficient,
    measure_period,
    order_slope,
    small_set_measure,
    spectrum,
)
from unilateral_nnm.integrator import TimeSeries, simulate
from unilateral_nnm.one_dof import exact_frequency, expand_homogeneous
from unilateral_nnm.system import OscillatorSystem

finite = st.floats(-5, 5, allow_nan=False)


class TestPeriod:
    def test_sampled_without_dense_output(self):
        t = np.linspace(0, 40, 4001)
        w = 1.37
        ts = TimeSeries(t, np.cos(w * t)[:, None], (-w * np.sin(w * t))[:, None], 1e-10)
        assert measure_period(ts) == pytest.approx(2 * math.pi / w, rel=1e-8)

    def test_stderr(self):
        ts = simulate(OscillatorSystem.one_dof(1.0, 0.3), [1.0], [0.0], 60.0, 1e-10)
        P, se = measure_period(ts, return_stderr=True)
        assert P == pytest.approx(2 * math.pi / exact_frequency(1.0, 0.3), rel=1e-9)
        assert se < 1e-9

    def test_too_short(self):
        ts = simulate(OscillatorSystem.one_dof(1.0, 0.0), [1.0], [0.0], 4.0, 1e-8)
        with pytest.raises(InsufficientDataError):
            measure_period(ts)


class TestSpectrum:
    def test_single_tone(self):
        n = 2**14
        t = np.arange(n) * (200 * math.pi / n)
        peaks = spectrum(np.cos(t), t=t).peaks(1)
        f, a = peaks[0]
        assert f == pytest.approx(1.0, abs=1e-3)
        assert a == pytest.approx(1.0, abs=1e-2)

    def test_two_tones(self):
        n = 2**15
        t = np.arange(n) * (600.0 / n)
        x = np.cos(t) + 0.3 * np.cos(math.sqrt(2) * t + 0.4)
        peaks = sorted(spectrum(x, t=t).peaks(2))
        assert peaks[0][0] == pytest.approx(1.0, rel=1e-2)
        assert peaks[1][0] == pytest.approx(math.sqrt(2), rel=1e-2)
        assert peaks[0][1] == pytest.approx(1.0, rel=1e-2)
        assert peaks[1][1] == pytest.approx(0.3, rel=1e-2)

    def test_from_timeseries(self):
        ts = simulate(OscillatorSystem.one_dof(1.0, 0.0), [2.0], [0.0], 300.0, 1e-9)
        f, a = spectrum(ts, n_samples=8192).peaks(1)[0]
        assert f == pytest.approx(1.0, abs=1e-3)
        assert a == pytest.approx(2.0, rel=1e-2)

    def test_unknown_window(self):
        with pytest.raises(ValueError):
            spectrum(np.ones(8), window="kaiser", t=np.arange(8.0))

    def test_expansion_signal_harmonics(self):
        # v0 + eps v1 contains the even harmonics of |cos| and no odd one above the first
        ex = expand_homogeneous(1.0, 1.0)
        spp, n_per = 64, 8
        s = np.arange(spp * n_per) * (2 * math.pi / spp)
        x = ex.v0(s) + 0.1 * ex.v1(s)
        amp = np.abs(np.fft.rfft(x)) / x.size
        h = amp[::n_per]
        assert h[2] > 1e-3 and h[4] > 1e-5
        assert max(h[3], h[5], h[7]) < 1e-12 * h[1]

    def test_csv(self, tmp_path):
        t = np.arange(64) * 0.1
        spectrum(np.sin(t), t=t).to_csv(tmp_path / "s.csv")
        head = (tmp_path / "s.csv").read_text().splitlines()[0]
        assert head == "frequency,amplitude"


class TestPurity:
    def test_pure_harmonics(self):
        s = np.arange(64 * 8) * (2 * math.pi / 64)
        assert harmonic_purity(np.cos(s) + 0.1 * np.cos(3 * s), 64) > 200

    def test_detects_foreign_line(self):
        s = np.arange(64 * 8) * (2 * math.pi / 64)
        x = np.cos(s) + 1e-3 * np.cos(1.5 * s)
        assert harmonic_purity(x, 64) == pytest.approx(60.0, abs=3.0)

    def test_needs_whole_periods(self):
        with pytest.raises(ValueError):
            harmonic_purity(np.ones(100), 64)


class TestChi:
    def test_zero_velocity(self):
        u = np.linspace(-1, 1, 11)
        assert np.all(chi_remainder(u, np.zeros(11), 0.1) == 0.0)

    def test_jump_case(self):
        v = np.array([0.5, 1.0, 2.0])
        np.testing.assert_array_equal(chi_remainder(np.zeros(3), v, 0.1), v)

    @given(u=finite, v=finite, eps=st.floats(1e-4, 1.0))
    @settings(max_examples=300, deadline=None)
    def test_bounds(self, u, v, eps):
        chi = float(chi_remainder(u, v, eps))
        assert 0.0 <= chi <= abs(v)
        if abs(u) > eps * abs(v):
            assert chi == 0.0

    @given(u=finite, v=finite, eps=st.floats(1e-3, 1.0))
    @settings(max_examples=300, deadline=None)
    def test_matches_definition(self, u, v, eps):
        H = 1.0 if u > 0 else 0.0
        direct = (max(u + eps * v, 0.0) - max(u, 0.0) - eps * H * v) / eps
        # the direct form loses up to ~|u|/eps of relative accuracy
        slack = 4e-16 * (abs(u) / eps + abs(v) + 1.0)
        assert float(chi_remainder(u, v, eps)) == pytest.approx(direct, abs=slack)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            chi_remainder([0.1], [0.2], 0.0)

    def test_integral_matches_fine_quadrature(self):
        rng = np.random.default_rng(7)
        t = np.sort(rng.uniform(0, 5, 12))
        t[0], t[-1] = 0.0, 5.0
        u, v = rng.normal(0, 0.05, 12), rng.normal(0, 1, 12)
        eps = 0.08
        # chi jumps where u changes sign, so the midpoint rule converges like h
        n = 4_000_000
        tm = (np.arange(n) + 0.5) * (5.0 / n)
        chi = chi_remainder(np.interp(tm, t, u), np.interp(tm, t, v), eps)
        assert chi_integral(t, u, v, eps) == pytest.approx(np.sum(np.abs(chi)) * 5.0 / n, abs=5e-6)


class TestSmallSet:
    @pytest.mark.parametrize("th", [1e-2, 1e-3, 1e-4])
    def test_simple_roots(self, th):
        t = np.linspace(0, 2 * math.pi, 2001)
        assert small_set_measure(np.cos, th, t=t) == pytest.approx(4 * math.asin(th), rel=1e-9)

    @pytest.mark.parametrize("th", [1e-2, 1e-3, 1e-4])
    def test_double_root(self, th):
        t = np.linspace(0, 2 * math.pi, 2001)
        mu = small_set_measure(lambda s: np.cos(s) - 1.0, th, t=t)
        assert mu == pytest.approx(2 * math.acos(1 - th), rel=1e-8)

    def test_never_close(self):
        t = np.linspace(0, 10, 101)
        assert small_set_measure(2.0 + np.sin(t), 0.5, t=t) == 0.0

    def test_linear_interpolant_exact(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        u = np.array([1.0, -1.0, 1.0, 1.0])
        # |u| <= 0.5 on [0.25, 0.75] and [1.25, 1.75]
        assert small_set_measure(u, 0.5, t=t) == pytest.approx(1.0, abs=1e-15)

    def test_dip_between_samples(self):
        # a narrow zero between coarse samples is found by the callable refinement
        t = np.linspace(0, 2 * math.pi, 7)
        mu = small_set_measure(lambda s: np.sin(s - 0.5) + 1.0005, 0.001, t=t)
        assert mu > 0

    def test_needs_grid(self):
        with pytest.raises(ValueError):
            small_set_measure(np.ones(3), 0.1)

    def test_slopes(self):
        th = (1e-2, 1e-3, 1e-4)
        t = np.linspace(0, 2 * math.pi, 2001)
        simple = [small_set_measure(np.cos, x, t=t) for x in th]
        double = [small_set_measure(lambda s: np.cos(s) - 1, x, t=t) for x in th]
        assert order_slope(th, simple) == pytest.approx(1.0, abs=0.05)
        assert order_slope(th, double) == pytest.approx(0.5, abs=0.05)


class TestExpansionError:
    def test_no_contact_limit(self):
        ex = expand_homogeneous(1.0, 1.0)
        rec = expansion_error(OscillatorSystem.one_dof(1.0), ex, 0.0, gamma=20.0, tol=1e-11)
        assert rec.max_error <= 1e-9
        assert rec.horizon == 20.0

    def test_homogeneous_order(self):
        ex = expand_homogeneous(1.0, 1.0)
        recs, slope = error_ladder(OscillatorSystem.one_dof(1.0), ex, (0.02, 0.04, 0.08), 1.0)
        assert slope == pytest.approx(2.0, abs=0.2)
        assert [r.horizon for r in recs] == pytest.approx([50.0, 25.0, 12.5])

    def test_record_serialises(self):
        ex = expand_homogeneous(1.0, 1.0)
        d = expansion_error(OscillatorSystem.one_dof(1.0), ex, 0.05).to_dict()
        assert set(d) == {"eps", "horizon", "sup_error", "n_samples"}


class TestMeans:
    def test_mean_coefficient_of_cos(self):
        t = np.linspace(0, 2000 * math.pi, 400_001)
        assert abs(mean_coefficient(np.cos(t), t, 1.0) - 0.5) < 1e-6

    @pytest.mark.parametrize("weight", ["box", "hann"])
    def test_abs_cos_has_no_first_harmonic(self, weight):
        rep = abs_spectrum_gap([1.0], [1.0], 2000.0, weight=weight)
        c = rep["coefficients"][0]
        assert c["ratio"] <= 0.6
        assert rep["mean"] == pytest.approx(2 / math.pi, abs=1e-4)

    def test_two_tone_gap_decreases(self):
        rep = abs_spectrum_gap([1.0, math.sqrt(2)], [1.0, 1.0], 2000.0)
        for c in rep["coefficients"]:
            assert c["abs_c_2T"] < c["abs_c_T"]

    def test_unknown_weight(self):
        with pytest.raises(ValueError):
            mean_coefficient([1.0, 1.0], [0.0, 1.0], 1.0, weight="tukey")


class TestFits:
    def test_fit_frequency_with_nuisance(self):
        t = np.linspace(0, 80, 4000)
        u = 0.8 * np.cos(1.03 * t + 0.2) + 0.3 * np.cos(2.1 * t) + 0.05
        assert fit_frequency(t, u, 1.0, nuisance=[2.1]) == pytest.approx(1.03, rel=1e-9)

    def test_one_dof_mode_frequency(self):
        eps = 0.02
        t = np.linspace(0, 150, 3000)
        ts = simulate(OscillatorSystem.one_dof(1.0, eps), [1.0], [0.0], 150.0, 1e-11, t_eval=t)
        w = fit_mode_frequencies(ts, [1.0])[0]
        # first order: shift eps / 4 within a second-order error
        assert w - 1.0 == pytest.approx(eps / 4, abs=2 * eps**2)
