"""Measurement instruments: periods, spectra, the rectifier remainder and small sets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .integrator import TimeSeries, simulate


class InsufficientDataError(ValueError):
    pass


class UnresolvedCrossingWarning(UserWarning):
    pass


# ---------------------------------------------------------------- periods

def _velocity_roots(series: TimeSeries, component: int):
    """Downward zero crossings of the velocity (maxima of the position), refined."""
    t = series.times
    v = series.velocities[:, component]
    idx = np.flatnonzero((v[:-1] > 0) & (v[1:] <= 0))
    roots = []
    dense = series.dense
    for i in idx:
        lo, hi = t[i], t[i + 1]
        if v[i + 1] == 0:
            roots.append(hi)
            continue
        if dense is not None:
            roots.append(brentq(lambda s: float(dense([s])[1][0, component]), lo, hi, xtol=1e-15, rtol=1e-15))
        else:
            # cubic through four neighbours when available, else linear
            j0 = max(i - 1, 0)
            j1 = min(i + 3, t.size)
            if j1 - j0 >= 4:
                poly = np.polynomial.Polynomial.fit(t[j0:j1], v[j0:j1], 3)
                rr = [r.real for r in poly.roots() if abs(r.imag) < 1e-12 and lo <= r.real <= hi]
                if rr:
                    roots.append(rr[0])
                    continue
            roots.append(lo - v[i] * (hi - lo) / (v[i + 1] - v[i]))
    return np.array(roots)


def measure_period(series: TimeSeries, component: int = 0, return_stderr: bool = False):
    """Period of one component from same-direction velocity zero crossings.

    Crossings are refined on the dense output when the series carries one.
    The period is the averaged spacing; the standard error is that of the
    mean spacing.
    """
    roots = _velocity_roots(series, component)
    if roots.size < 2:
        raise InsufficientDataError(f"only {roots.size} velocity crossing(s) in component {component}")
    d = np.diff(roots)
    period = (roots[-1] - roots[0]) / (roots.size - 1)
    if not return_stderr:
        return float(period)
    stderr = float(np.std(d, ddof=1) / math.sqrt(d.size)) if d.size > 1 else math.nan
    return float(period), stderr


def measure_frequency(series: TimeSeries, component: int = 0) -> float:
    return 2.0 * math.pi / measure_period(series, component)


def fit_frequency(t, u, omega_guess: float, nuisance=(), span: float = 0.05) -> float:
    """Least-squares frequency of ``u`` near ``omega_guess``.

    The model is ``c0 + a cos(w t) + b sin(w t)`` plus free cosine/sine
    pairs at the fixed ``nuisance`` frequencies; the linear coefficients are
    eliminated for each trial ``w``.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    fixed = [np.ones_like(t)]
    for nu in nuisance:
        if nu > 0:
            fixed += [np.cos(nu * t), np.sin(nu * t)]
    F = np.column_stack(fixed)

    def cost(w):
        M = np.column_stack([F, np.cos(w * t), np.sin(w * t)])
        coef = np.linalg.lstsq(M, u, rcond=None)[0]
        r = u - M @ coef
        return float(r @ r)

    lo, hi = omega_guess * (1 - span), omega_guess * (1 + span)
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * omega_guess})
    return float(res.x)


# ---------------------------------------------------------------- spectra

@dataclass
class FourierSpectrum:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    window: dict = field(default_factory=dict)

    def peaks(self, n: int = 10, rel_threshold: float = 1e-3):
        """Interpolated ``(frequency, amplitude)`` of the largest local maxima."""
        a = self.amplitudes
        if a.size < 3:
            return []
        loc = np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:])) + 1
        if a[0] > a[1]:
            loc = np.concatenate([[0], loc])
        loc = loc[a[loc] >= rel_threshold * a.max()]
        loc = loc[np.argsort(a[loc])[::-1][:n]]
        df = self.frequencies[1] - self.frequencies[0]
        out = []
        for k in loc:
            if k == 0 or k == a.size - 1:
                out.append((float(self.frequencies[k]), float(a[k])))
                continue
            delta = _bin_offset(a[k - 1], a[k], a[k + 1], self.window.get("function", "hann"))
            gain = _window_gain(delta, self.window.get("function", "hann"))
            out.append((float(self.frequencies[k] + delta * df), float(a[k] / gain)))
        return out

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.frequencies, self.amplitudes]), delimiter=",",
                   header="frequency,amplitude", comments="", fmt="%.17g")


def _bin_offset(left, mid, right, function):
    # ratio interpolation, exact for a single tone under the given window
    if right >= left:
        r = right / mid if mid else 0.0
        return (2 * r - 1) / (r + 1) if function == "hann" else r / (1 + r)
    r = left / mid if mid else 0.0
    return -((2 * r - 1) / (r + 1) if function == "hann" else r / (1 + r))


def _window_gain(delta, function):
    d = abs(delta)
    if function == "hann":
        return float(np.sinc(d) / (1 - d * d)) if d < 1 else 0.5
    return float(abs(np.sinc(d)))


def spectrum(series, component: int = 0, window: str = "hann", n_samples: int | None = None,
             t_span=None, t=None) -> FourierSpectrum:
    """Single-sided amplitude spectrum in rad/time.

    ``series`` is a :class:`TimeSeries` (resampled uniformly on ``t_span``
    from its dense output) or an array of uniform samples with times ``t``.
    Amplitudes are normalised so that ``A cos(w t)`` on a bin shows ``A``.
    """
    if isinstance(series, TimeSeries):
        t0, t1 = t_span if t_span is not None else (series.times[0], series.times[-1])
        n = n_samples or int(2 ** math.ceil(math.log2(max(series.times.size, 16))))
        if series.dense is not None:
            tt = t0 + (t1 - t0) * np.arange(n) / n
            x = series.dense(tt)[0][:, component]
        else:
            tt = series.times
            x = series.positions[:, component]
    else:
        x = np.asarray(series, dtype=float)
        tt = np.asarray(t, dtype=float)
        n = x.size
    dt = tt[1] - tt[0]
    n = x.size
    if window == "hann":
        w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    elif window in ("rect", "rectangular", "none"):
        window = "rectangular"
        w = np.ones(n)
    else:
        raise ValueError(f"unknown window {window!r}")
    X = np.fft.rfft(x * w)
    amp = np.abs(X) * 2.0 / w.sum()
    amp[0] /= 2.0
    if n % 2 == 0:
        amp[-1] /= 2.0
    freqs = 2 * np.pi * np.fft.rfftfreq(n, dt)
    return FourierSpectrum(freqs, amp, {"function": window, "n_samples": n, "duration": n * dt})


def harmonic_purity(x, samples_per_period: int) -> float:
    """Ratio (dB) between the largest harmonic and the largest non-harmonic line.

    ``x`` must hold an integer number of periods sampled coherently, so that
    the harmonics fall exactly on bins ``k * n_periods`` (rectangular window).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    n_periods = n // samples_per_period
    if n_periods * samples_per_period != n or n_periods < 2:
        raise ValueError("need at least two whole periods")
    amp = np.abs(np.fft.rfft(x)) / n
    k = np.arange(amp.size)
    harm = k % n_periods == 0
    top = amp[harm][1:].max() if harm.sum() > 1 else amp[harm].max()
    floor = amp[~harm].max()
    if floor == 0:
        return math.inf
    return float(20 * math.log10(top / floor))


# ---------------------------------------------------------------- rectifier remainder

def chi_remainder(u, v, eps: float) -> np.ndarray:
    """``((u + eps v)_+ - u_+ - eps H(u) v) / eps`` with ``H(0) = 0``.

    Written so that rounding cannot break ``0 <= chi <= |v|``: with
    ``q = v + u/eps``, ``chi = q_+`` where ``u <= 0`` and ``(-q)_+`` where
    ``u > 0``.  It vanishes unless ``|u| <= eps |v|``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if eps <= 0:
        raise ValueError("eps must be positive")
    q = v + u / eps
    return np.where(u <= 0, np.maximum(q, 0.0), np.maximum(-q, 0.0))


# ---------------------------------------------------------------- small sets

def small_set_measure(u, threshold: float, t=None, func=None, max_refine: int = 80) -> float:
    """Length of ``{t : |u(t)| <= threshold}``.

    ``u`` holds samples on the increasing grid ``t`` and is then read as its
    piecewise-linear interpolant, for which the measure is exact.  When a
    callable is available (``func``, or ``u`` itself) the boundary points
    are refined by root finding on ``u -+ threshold``, sample minima of
    ``|u|`` are checked for dips between samples, and membership of each
    piece is decided at its midpoint.
    """
    if t is None:
        raise ValueError("sample grid t is required")
    t = np.asarray(t, dtype=float)
    if callable(u):
        func = u
        vals = np.asarray(func(t), dtype=float)
    else:
        vals = np.asarray(u, dtype=float)
    if threshold < 0:
        return 0.0
    if func is None:
        return _linear_sublevel_length(t, vals, threshold)

    def f(x):
        return float(func(x))

    points = [t]
    unresolved = 0
    for level in (threshold, -threshold):
        g = vals - level
        for i in np.flatnonzero(((g[:-1] < 0) & (g[1:] > 0)) | ((g[:-1] > 0) & (g[1:] < 0))):
            try:
                points.append([brentq(lambda x: f(x) - level, t[i], t[i + 1], xtol=1e-15, rtol=1e-15,
                                      maxiter=max_refine)])
            except RuntimeError:
                unresolved += 1
    a = np.abs(vals) - threshold
    for i in np.flatnonzero((a[1:-1] > 0) & (a[1:-1] <= a[:-2]) & (a[1:-1] <= a[2:])) + 1:
        res = minimize_scalar(lambda x: abs(f(x)), bounds=(t[i - 1], t[i + 1]), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, abs(t[i]))})
        if res.fun <= threshold:
            x = res.x
            lvl = threshold if f(x) >= 0 else -threshold
            for lo, hi in ((t[i - 1], x), (x, t[i + 1])):
                if (f(lo) - lvl) * (f(hi) - lvl) < 0:
                    points.append([brentq(lambda y: f(y) - lvl, lo, hi, xtol=1e-15, rtol=1e-15)])
            points.append([x])
    if unresolved:
        warnings.warn(f"{unresolved} crossing(s) not resolved; sample bracketing used",
                      UnresolvedCrossingWarning, stacklevel=2)
    p = np.unique(np.concatenate([np.asarray(x, dtype=float) for x in points]))
    mid = 0.5 * (p[:-1] + p[1:])
    inside = np.abs(np.asarray(func(mid), dtype=float)) <= threshold
    return float(np.sum(np.diff(p)[inside]))


def _linear_sublevel_length(t, u, threshold):
    h = np.diff(t)
    u0, u1 = u[:-1], u[1:]
    du = u1 - u0
    flat = du == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        sa = (-threshold - u0) / du
        sb = (threshold - u0) / du
    lo = np.clip(np.minimum(sa, sb), 0.0, 1.0)
    hi = np.clip(np.maximum(sa, sb), 0.0, 1.0)
    frac = np.where(flat, (np.abs(u0) <= threshold).astype(float), np.maximum(hi - lo, 0.0))
    return float(np.sum(h * frac))


def order_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------- expansion errors

@dataclass
class ExpansionError:
    eps: float
    horizon: float
    sup_error: np.ndarray
    n_samples: int

    @property
    def max_error(self) -> float:
        return float(np.max(self.sup_error))

    def to_dict(self) -> dict:
        return {"eps": self.eps, "horizon": self.horizon, "sup_error": [float(e) for e in self.sup_error],
                "n_samples": self.n_samples}


def _initial_state(system, expansion, eps):
    if hasattr(expansion, "initial_positions"):
        return expansion.initial_positions(eps)
    return np.array([expansion.a0 + eps * expansion.a1])


def expansion_error(system, expansion, eps: float, horizon_exponent: float = 1.0, gamma: float = 1.0,
                    tol: float = 1e-11, samples_per_unit: float = 40.0) -> ExpansionError:
    """Sup-norm gap between the simulated orbit and the reconstructed expansion.

    The horizon is ``gamma * eps**(-horizon_exponent)`` (``gamma`` alone at
    ``eps = 0``).  Works for one- and many-degree-of-freedom expansions.
    """
    sys_e = system.with_eps(eps)
    horizon = gamma * (eps ** (-horizon_exponent) if eps > 0 else 1.0)
    n = max(int(horizon * samples_per_unit * max(1.0, float(system.lambdas.max()))), 200)
    t = np.linspace(0.0, horizon, n + 1)
    U0 = _initial_state(system, expansion, eps)
    ts = simulate(sys_e, U0, np.zeros(system.n), horizon, tol, t_eval=t)
    approx = np.asarray(expansion.reconstruct(t, eps)).reshape(t.size, -1)
    err = np.max(np.abs(ts.positions - approx), axis=0)
    return ExpansionError(float(eps), float(horizon), err, t.size)


def error_ladder(system, expansion, eps_values, horizon_exponent: float = 1.0, gamma: float = 1.0,
                 tol: float = 1e-11, expansion_for=None):
    """Expansion errors over an ``eps`` ladder and their log-log slope.

    ``expansion_for(eps)`` may supply an ``eps``-dependent expansion;
    otherwise ``expansion`` is used for every rung.
    """
    recs = []
    for e in eps_values:
        ex = expansion_for(e) if expansion_for is not None else expansion
        recs.append(expansion_error(system, ex, e, horizon_exponent, gamma, tol))
    slope = order_slope([r.eps for r in recs], [r.max_error for r in recs])
    return recs, slope


# ---------------------------------------------------------------- spectrum of |u|

def mean_coefficient(values, t, lam: float, weight: str = "box") -> complex:
    """``mean(f(t) exp(-i lam t))`` over the sampled window by the trapezoid rule."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(values, dtype=float)
    if weight == "box":
        w = np.ones_like(t)
    elif weight == "hann":
        x = (t - t[0]) / (t[-1] - t[0])
        w = np.sin(np.pi * x) ** 2
    else:
        raise ValueError(f"unknown averaging weight {weight!r}")
    return complex(np.trapezoid(f * w * np.exp(-1j * lam * t), t) / np.trapezoid(w, t))


def abs_spectrum_gap(lambdas, amplitudes, T_avg: float, pts_per_period: int = 256, weight: str = "box") -> dict:
    """Mean-value Fourier coefficients of ``|sum_k a_k cos(lam_k t)|`` at each ``lam_k``.

    Reported for windows ``T_avg`` and ``2 T_avg``; their ratio should tend
    to 0 since no ``lam_k`` belongs to the spectrum of ``|u|``.  The mean
    (frequency 0) is reported as well.
    """
    lam = np.asarray(lambdas, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    out = {"lambdas": lam.tolist(), "T_avg": float(T_avg), "weight": weight, "coefficients": []}
    data = {}
    for T in (T_avg, 2 * T_avg):
        n = int(T * lam.max() / (2 * math.pi) * pts_per_period) + 1
        t = np.linspace(0.0, T, n)
        u = np.abs(np.cos(np.outer(t, lam)) @ a)
        data[T] = (t, u)
    for lk in lam:
        c1 = abs(mean_coefficient(data[T_avg][1], data[T_avg][0], lk, weight))
        c2 = abs(mean_coefficient(data[2 * T_avg][1], data[2 * T_avg][0], lk, weight))
        out["coefficients"].append({"lambda": float(lk), "abs_c_T": c1, "abs_c_2T": c2,
                                    "ratio": c2 / c1 if c1 > 0 else 0.0})
    t, u = data[2 * T_avg]
    out["mean"] = float(np.trapezoid(u, t) / (t[-1] - t[0]))
    return out


# ---------------------------------------------------------------- multi-mode frequencies

def nonresonant_response(system, amplitudes, k: int, t, rtol: float = 1e-11) -> np.ndarray:
    """Response of mode ``k`` started at rest to its first-order forcing minus the resonant line.

    Solves ``psi'' + lam_k^2 psi = -[(sum_j a_kj a_j cos(lam_j t) - b_k)_+ - m_k cos(lam_k t)]``
    where ``m_k`` is the mean-value coefficient of the forcing at ``lam_k``
    (``a_kk a_k / 2`` when ``b_k = 0``).
    """
    from scipy.integrate import solve_ivp

    lam = system.lambdas
    a = np.asarray(amplitudes, dtype=float)
    t = np.asarray(t, dtype=float)
    row = system.A[k] * a
    if system.B[k] == 0:
        m_k = 0.5 * system.A[k, k] * a[k]
    else:
        from .ndof_expansion import _mode_average
        m_k = 2.0 * _mode_average(system, k, a, 4000 * 2 * math.pi / lam[k])

    def rhs(tt, y):
        f = max(float(np.cos(lam * tt) @ row) - system.B[k], 0.0) - m_k * math.cos(lam[k] * tt)
        return [y[1], -lam[k] ** 2 * y[0] - f]

    sol = solve_ivp(rhs, (t[0], t[-1]), [0.0, 0.0], method="DOP853", rtol=rtol, atol=rtol * 1e-2,
                    t_eval=t)
    return sol.y[0]


def fit_mode_frequencies(series: TimeSeries, amplitudes, span: float = 0.05) -> np.ndarray:
    """Per-mode frequencies of a multi-mode orbit started at rest from ``amplitudes``.

    The first-order non-resonant response, scaled by ``eps``, is removed
    from each component before a single-tone least-squares fit, so that a
    short window still resolves the ``O(eps)`` frequency shift.
    """
    system = series.system
    t = series.times
    out = np.empty(system.n)
    for k in range(system.n):
        if amplitudes[k] == 0:
            out[k] = np.nan
            continue
        r = series.positions[:, k] - system.eps * nonresonant_response(system, amplitudes, k, t)
        out[k] = fit_frequency(t, r, float(system.lambdas[k]), span=span)
    return out


def chi_integral(t, u, v, eps: float) -> float:
    """Exact integral of ``chi_eps(u, v)`` for piecewise-linear ``u`` and ``v`` on the grid ``t``.

    Each interval is split where ``u`` or ``q = v + u/eps`` changes sign;
    ``chi`` is linear on every piece, so the trapezoid rule is exact there.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    q = v + u / eps

    def cut(f):
        f0, f1 = f[:-1], f[1:]
        crosses = ((f0 < 0) & (f1 > 0)) | ((f0 > 0) & (f1 < 0))
        with np.errstate(invalid="ignore", divide="ignore"):
            x = f0 / (f0 - f1)
        return np.where(crosses, x, 1.0)

    pts = np.sort(np.column_stack([np.zeros(t.size - 1), cut(u), cut(q), np.ones(t.size - 1)]), axis=1)
    h = np.diff(t)
    total = 0.0
    for j in range(3):
        a, b = pts[:, j], pts[:, j + 1]
        du, dv = np.diff(u), np.diff(v)
        ua, ub = u[:-1] + du * a, u[:-1] + du * b
        va, vb = v[:-1] + dv * a, v[:-1] + dv * b
        um = 0.5 * (ua + ub)
        qa, qb = va + ua / eps, vb + ub / eps
        ca = np.where(um <= 0, np.maximum(qa, 0.0), np.maximum(-qa, 0.0))
        cb = np.where(um <= 0, np.maximum(qb, 0.0), np.maximum(-qb, 0.0))
        total += float(np.sum(0.5 * (ca + cb) * (b - a) * h))
    return total
