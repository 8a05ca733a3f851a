"""Expansions for N degrees of freedom near one linear mode, and for all modes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fourier_kernels import CosineSeries, positive_part_series
from .one_dof import DegenerateAmplitudeError, _contact_interval, first_order_correction, gauss_panels
from .system import (
    OscillatorSystem,
    ResonanceError,
    ValidationError,
    chain_matrices,
    modal_from_physical,
    preset,
    z_independence_pairs,
)

__all__ = [
    "OscillatorSystem",
    "ExpansionNDof",
    "FirstOrderFrequencies",
    "UnsupportedCaseError",
    "NonConvergenceWarning",
    "modal_from_physical",
    "chain_matrices",
    "preset",
    "expand_mode_second_order",
    "periodic_initial_amplitudes",
    "first_order_all_modes",
]


class UnsupportedCaseError(ValueError):
    """Gap/sign combination for which no periodic amplitude formula is given.

    Only ``b_k = 0`` and ``0 < b_k / |a_k1 a0| < 1`` (either sign of
    ``a_k1 a0``) are covered, plus the trivial cases without forcing.
    """


class NonConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExpansionNDof:
    mode_index: int
    omega0: float
    omega1: float
    omega2: float
    alpha1: float
    alpha2: float
    a0: float
    a1: float
    v1_per_mode: tuple
    a_k: np.ndarray
    tail_bounds: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def omega(self, eps: float) -> float:
        return self.omega0 + eps * self.omega1 + eps**2 * self.omega2

    def initial_positions(self, eps: float) -> np.ndarray:
        """``U(0)`` matching the expansion: ``a0 + eps a1`` on the mode, ``eps a_k`` elsewhere."""
        U0 = eps * np.array(self.a_k, dtype=float)
        U0[self.mode_index] = self.a0 + eps * self.a1
        return U0

    def reconstruct(self, t, eps: float) -> np.ndarray:
        """``v^0 + eps v^1`` at strained time ``omega_eps t``; shape ``(len(t), N)``."""
        s = self.omega(eps) * np.atleast_1d(np.asarray(t, dtype=float))
        out = np.column_stack([eps * ser(s) for ser in self.v1_per_mode])
        out[:, self.mode_index] += self.a0 * np.cos(s)
        return out


@dataclass(frozen=True)
class FirstOrderFrequencies:
    lambda_eps: np.ndarray
    lambda1_corrections: np.ndarray
    estimates: dict = field(default_factory=dict, compare=False)
    converged: bool = True


def _forcing(system, k, mode, a0, n_max):
    return positive_part_series(system.A[k, mode] * a0, system.B[k], n_max)


def _check_z_independence(system, mode):
    bad = z_independence_pairs(system.lambdas, ref=mode)
    if bad:
        k, j, p, q = bad[0]
        raise ResonanceError(
            f"modes {k} and {j} fail the Z-independence screen: {q}*lambda_{k} ~ {p}*lambda_{j}",
            [(k, q)],
        )


def _periodic_response(forcing: CosineSeries, lam_k, lam_m, k, resonance_tol):
    """Even 2pi-periodic solution of ``lam_m^2 phi'' + lam_k^2 phi = -f``."""
    f = forcing.coefficients
    l = np.arange(f.size, dtype=float)
    denom = l**2 * lam_m**2 - lam_k**2
    close = (np.abs(denom) < resonance_tol * lam_k**2) & (f != 0.0)
    if np.any(close):
        ll = int(np.flatnonzero(close)[0])
        raise ResonanceError(f"mode {k} resonates with harmonic {ll} of the excited mode", [(k, ll)])
    phi = np.where(f != 0.0, f / np.where(denom == 0, 1.0, denom), 0.0)
    n = f.size - 1
    gap = (n + 1) ** 2 * lam_m**2 - lam_k**2
    tail = forcing.tail_bound / gap if gap > 0 else math.inf
    return CosineSeries(phi, tail)


def expand_mode_second_order(system: OscillatorSystem, mode: int, a0: float, a1: float = 0.0,
                             n_max: int = 400, resonance_tol: float = 1e-6,
                             n_quad: int | None = None) -> ExpansionNDof:
    """Second-order expansion of the orbit started near linear mode ``mode`` (0-based).

    Data ``U(0) = (a0 + eps a1) e_mode + eps a``, ``U'(0) = 0`` with the
    off-mode amplitudes ``a_k = phi_k(0)`` chosen so that every first-order
    correction is ``2 pi``-periodic in strained time.
    """
    if a0 == 0:
        raise DegenerateAmplitudeError("a0 = 0: no oscillation to expand")
    n = system.n
    if not 0 <= mode < n:
        raise ValidationError(f"mode {mode} out of range")
    _check_z_independence(system, mode)
    lam = system.lambdas
    w0 = lam[mode]

    f_m = _forcing(system, mode, mode, a0, n_max)
    alpha1, v1_m, A = first_order_correction(w0, f_m, a0, a1)
    w1 = alpha1 / (2.0 * w0)

    series, a_k, tails = [], np.zeros(n), np.zeros(n)
    for k in range(n):
        if k == mode:
            series.append(v1_m)
            tails[k] = v1_m.tail_bound
            continue
        phi = _periodic_response(_forcing(system, k, mode, a0, n_max), lam[k], w0, k, resonance_tol)
        series.append(phi)
        a_k[k] = phi.coefficients.sum()
        tails[k] = phi.tail_bound

    # solvability of the second-order equation on the excited mode
    arc = _contact_interval(system.A[mode, mode] * a0, system.B[mode])
    integral = 0.0
    if arc is not None:
        nq = n_quad if n_quad is not None else 4 * n_max + 64
        s, w = gauss_panels(np.linspace(arc[0], arc[1], 5), max(nq // 4, 8))
        W = sum(system.A[mode, j] * series[j](s) for j in range(n) if system.A[mode, j] != 0.0)
        integral = float(np.sum(w * W * np.cos(s)))
    alpha2 = 2.0 * integral / (math.pi * a0) - alpha1 * v1_m.coefficients[1] / a0
    w2 = (alpha2 - w1 * w1) / (2.0 * w0)
    return ExpansionNDof(mode, w0, w1, w2, alpha1, alpha2, float(a0), float(a1), tuple(series),
                         a_k, tails, meta={"A": A, "n_max": n_max})


def _eq46_amplitude(p, lam_k, lam_m, n_max):
    """Closed form of ``phi_k(0)`` for ``b_k = 0`` and forcing ``(p cos s)_+``."""
    l = np.arange(1, n_max // 2 + 1, dtype=float)
    series = np.sum((-1.0) ** l / ((4 * l * l * lam_m**2 - lam_k**2) * (4 * l * l - 1)))
    return (p / (2.0 * (lam_m**2 - lam_k**2)) - abs(p) / (lam_k**2 * math.pi)
            - (2.0 * abs(p) / math.pi) * series)


def periodic_initial_amplitudes(system: OscillatorSystem, mode: int, a0: float, n_max: int = 400,
                                resonance_tol: float = 1e-6, return_tails: bool = False):
    """First-order off-mode amplitudes giving a periodic approximate normal mode.

    ``a_k`` is the value at ``s = 0`` of the periodic response of mode
    ``k`` to ``(a_k,mode a0 cos s - b_k)_+``.  Entry ``mode`` is returned
    as 0 (the free constant ``a1`` lives there).
    """
    if a0 == 0:
        raise DegenerateAmplitudeError("a0 = 0: no oscillation to expand")
    _check_z_independence(system, mode)
    lam = system.lambdas
    out = np.zeros(system.n)
    tails = np.zeros(system.n)
    for k in range(system.n):
        if k == mode:
            continue
        p = system.A[k, mode] * a0
        bk = system.B[k]
        if bk < 0:
            raise UnsupportedCaseError(
                f"mode {k}: b_k < 0 (preloaded) is not among the covered cases; "
                "the other cases are less interesting but may be solved similarly"
            )
        if p == 0 or bk >= abs(p):
            continue  # no contact along the orbit
        if bk == 0:
            l = np.arange(n_max + 1, dtype=float)
            if np.any((np.abs(l**2 * lam[mode] ** 2 - lam[k] ** 2) < resonance_tol * lam[k] ** 2) & (l % 2 == 0)):
                raise ResonanceError(f"mode {k} resonates with an even harmonic", [(k, -1)])
            out[k] = _eq46_amplitude(p, lam[k], lam[mode], n_max)
            K = n_max // 2
            tails[k] = 2 * abs(p) / math.pi / ((4 * (K + 1) ** 2 * lam[mode] ** 2 - lam[k] ** 2) * 2 * (2 * K + 1))
        else:
            phi = _periodic_response(positive_part_series(p, bk, n_max), lam[k], lam[mode], k, resonance_tol)
            out[k] = phi.coefficients.sum()
            tails[k] = phi.tail_bound
    return (out, tails) if return_tails else out


def _mode_average(system, k, amplitudes, T, pts_per_period=64):
    """``mean_{[0,T]} (sum_j a_kj a_j cos(lam_j t) - b_k)_+ cos(lam_k t)`` by trapezoid."""
    lam = system.lambdas
    n_pts = int(math.ceil(T * lam.max() / (2 * math.pi) * pts_per_period)) + 1
    t = np.linspace(0.0, T, n_pts)
    out = np.zeros_like(t)
    # chunk to bound memory for long windows
    for i in range(0, t.size, 200_000):
        tt = t[i:i + 200_000]
        S = np.cos(np.outer(tt, lam)) @ (system.A[k] * amplitudes) - system.B[k]
        out[i:i + 200_000] = np.maximum(S, 0.0) * np.cos(lam[k] * tt)
    return np.trapezoid(out, t) / T


def first_order_all_modes(system: OscillatorSystem, amplitudes, n_periods: int = 2000,
                          tol: float = 1e-3) -> FirstOrderFrequencies:
    """First-order frequency of every mode when all modes are excited.

    ``lambda_k^eps = lambda_k + eps lambda_k^1``.  With ``b_k = 0`` the
    correction is ``a_kk / (4 lambda_k)``; otherwise it is
    ``mean[(sum_j a_kj a_j cos(lam_j t) - b_k)_+ cos(lam_k t)] / (lam_k a_k)``,
    averaged over ``n_periods`` and ``2 n_periods`` periods of mode ``k``.
    Modes with ``a_k = 0`` and a non-zero gap get ``nan``.
    """
    a = np.asarray(amplitudes, dtype=float)
    if a.shape != (system.n,):
        raise ValidationError("one amplitude per mode is required")
    if not np.any(a != 0):
        raise DegenerateAmplitudeError("at least one mode must be excited")
    bad = z_independence_pairs(system.lambdas)
    if bad:
        k, j, p, q = bad[0]
        raise ResonanceError(f"modes {k} and {j} fail the Z-independence screen", [(k, q)])
    lam = system.lambdas
    corr = np.zeros(system.n)
    est = {}
    converged = True
    for k in range(system.n):
        if system.B[k] == 0:
            corr[k] = system.A[k, k] / (4.0 * lam[k])
            continue
        if a[k] == 0:
            corr[k] = np.nan
            continue
        T = n_periods * 2 * math.pi / lam[k]
        m1 = _mode_average(system, k, a, T)
        m2 = _mode_average(system, k, a, 2 * T)
        c1, c2 = m1 / (lam[k] * a[k]), m2 / (lam[k] * a[k])
        est[k] = (c1, c2)
        corr[k] = c2
        if abs(c1 - c2) > tol * max(abs(c2), 1.0):
            converged = False
            warnings.warn(f"mode {k}: long-time average not converged ({c1!r} vs {c2!r})",
                          NonConvergenceWarning, stacklevel=2)
    return FirstOrderFrequencies(lam + system.eps * corr, corr, est, converged)
