"""Adaptive integration of ``U'' + Lambda^2 U = -eps (A U - B)_+`` with contact events.

Between two switching events the right-hand side is linear, hence smooth.
Each sign change of a switching function ``(A U - B)_k`` is located to
``|g| <= tol * max(1, |U|)`` by shortening the step, and integration
restarts there with the new active set.  This keeps the fifth-order
accuracy of the Dormand-Prince pair despite the kink of ``(.)_+``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .system import OscillatorSystem, ValidationError


class IntegrationError(RuntimeError):
    """Integration failure (exit code 4 on the command line)."""


class StepSizeError(IntegrationError):
    pass


class DivergenceError(IntegrationError):
    pass


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _hermite_basis(theta):
    th = np.asarray(theta, dtype=float)
    t2, t3, t4, t5 = th**2, th**3, th**4, th**5
    val = np.stack([
        1 - 10 * t3 + 15 * t4 - 6 * t5,
        th - 6 * t3 + 8 * t4 - 3 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
        -4 * t3 + 7 * t4 - 3 * t5,
        10 * t3 - 15 * t4 + 6 * t5,
    ])
    der = np.stack([
        -30 * t2 + 60 * t3 - 30 * t4,
        1 - 18 * t2 + 32 * t3 - 15 * t4,
        th - 4.5 * t2 + 6 * t3 - 2.5 * t4,
        1.5 * t2 - 4 * t3 + 2.5 * t4,
        -12 * t2 + 28 * t3 - 15 * t4,
        30 * t2 - 60 * t3 + 30 * t4,
    ])
    return val, der


def hermite5(theta, h, u0, v0, a0, u1, v1, a1):
    """Quintic Hermite interpolant of ``u`` on one step and its derivative.

    ``theta`` in ``[0, 1]``; endpoint data are position, velocity and
    acceleration (arrays of shape ``(N,)``).  Returns ``(u, u')`` with
    shape ``(len(theta), N)``.
    """
    val, der = _hermite_basis(np.atleast_1d(theta))
    coeffs = np.stack([u0, h * v0, h * h * a0, h * h * a1, h * v1, u1])
    return val.T @ coeffs, (der.T @ coeffs) / h


@dataclass
class DenseOutput:
    """Piecewise quintic Hermite interpolant through the accepted steps."""

    t: np.ndarray
    U: np.ndarray
    V: np.ndarray
    acc: np.ndarray

    def __call__(self, t):
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        if tq.size and (tq.min() < self.t[0] - 1e-12 * max(1.0, abs(self.t[-1])) or
                        tq.max() > self.t[-1] * (1 + 1e-12) + 1e-12):
            raise ValueError("dense output requested outside the integrated interval")
        i = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, self.t.size - 2)
        h = self.t[i + 1] - self.t[i]
        theta = np.clip((tq - self.t[i]) / h, 0.0, 1.0)
        val, der = _hermite_basis(theta)
        hh = h[:, None]
        pos = (val[0][:, None] * self.U[i] + val[1][:, None] * hh * self.V[i]
               + val[2][:, None] * hh**2 * self.acc[i] + val[3][:, None] * hh**2 * self.acc[i + 1]
               + val[4][:, None] * hh * self.V[i + 1] + val[5][:, None] * self.U[i + 1])
        vel = (der[0][:, None] * self.U[i] + der[1][:, None] * hh * self.V[i]
               + der[2][:, None] * hh**2 * self.acc[i] + der[3][:, None] * hh**2 * self.acc[i + 1]
               + der[4][:, None] * hh * self.V[i + 1] + der[5][:, None] * self.U[i + 1]) / hh
        return pos, vel


@dataclass
class TimeSeries:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    tol: float
    events: list = field(default_factory=list)
    dense: DenseOutput | None = None
    system: OscillatorSystem | None = None
    n_steps: int = 0
    n_rejected: int = 0

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def t_end(self) -> float:
        return float(self.dense.t[-1]) if self.dense is not None else float(self.times[-1])

    def resample(self, t) -> "TimeSeries":
        if self.dense is None:
            raise ValueError("no dense output attached")
        U, V = self.dense(t)
        return TimeSeries(np.asarray(t, dtype=float), U, V, self.tol, self.events, self.dense, self.system,
                          self.n_steps, self.n_rejected)

    def sidecar(self) -> dict:
        return {
            "tol": self.tol,
            "events": [{"t": t, "row": int(k), "direction": int(d)} for t, k, d in self.events],
            "n_samples": int(self.times.size),
            "n_steps": int(self.n_steps),
            "n_rejected": int(self.n_rejected),
            "system_hash": self.system.digest() if self.system is not None else None,
            "system": self.system.to_dict() if self.system is not None else None,
        }

    def write(self, csv_path, json_path=None):
        """CSV columns ``t, u_1..u_N, v_1..v_N`` plus a JSON sidecar."""
        n = self.n
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)])
            for t, u, v in zip(self.times, self.positions, self.velocities):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in u] + [repr(float(x)) for x in v])
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


class _Dynamics:
    """Linear right-hand side for a fixed active set, cached per mask."""

    def __init__(self, system: OscillatorSystem):
        self.system = system
        self.n = system.n
        self.rows = system.contact_rows
        self.Ar = system.A[self.rows]
        self.Br = system.B[self.rows]
        self._cache = {}
        self.signs = {}

    def matrices(self, mask):
        key = mask.tobytes()
        if key not in self._cache:
            s = self.system
            K = np.diag(s.lambdas**2).astype(float)
            F = np.zeros(self.n)
            active = self.rows[mask]
            K[active] += s.eps * s.A[active]
            F[active] = s.eps * s.B[active]
            n = self.n
            J = np.zeros((2 * n, 2 * n))
            J[:n, n:] = np.eye(n)
            J[n:, :n] = -K
            P = np.array([np.linalg.matrix_power(J, m) for m in range(7)])
            self._cache[key] = (K, F, P)
        return self._cache[key]

    def sign_of(self, mask):
        out = np.where(mask, 1.0, -1.0)
        self.signs[mask.tobytes()] = out
        return out

    def switching(self, U):
        return U @ self.Ar.T - self.Br


_AM = np.zeros((7, 7))
for _i, _row in enumerate(_A):
    _AM[_i, :len(_row)] = _row


# For an affine right-hand side f(y) = J y + g every stage is a polynomial in
# hJ applied to f(y), so one step is sum_m w_m (hJ)^m f(y) h with
# w_m = b^T A^m 1.  This is the Dormand-Prince pair itself, evaluated with
# fewer array operations.
_POW = np.array([np.linalg.matrix_power(_AM, m) @ np.ones(7) for m in range(7)])
_W5 = _POW @ _B5
_WE = _POW @ _E


_EXP = np.arange(1, 8)


def _dopri_step(U, V, accU, h, mats):
    """One Dormand-Prince step.

    Returns the new position, velocity and acceleration, and the stacked
    ``(U, V)`` error estimate.
    """
    K, F, P = mats
    n = U.size
    W = P @ np.concatenate([V, accU])
    hp = h**_EXP
    y1 = np.concatenate([U, V]) + (hp * _W5) @ W
    U1, V1 = y1[:n], y1[n:]
    return U1, V1, F - K @ U1, (hp * _WE) @ W


_THETAS = np.linspace(0.0, 1.0, 9)[1:]
_THETA_BASIS = _hermite_basis(_THETAS)[0].T
# safety factor between the requested tolerance and the step-size control
_CONTROL = 0.1


# overflow is reported as DivergenceError, not as a numpy warning
@np.errstate(over="ignore", invalid="ignore")
def simulate(system: OscillatorSystem, U0, V0, t_end: float, tol: float = 1e-10, t_eval=None,
             max_step: float | None = None) -> TimeSeries:
    """Integrate from ``(U0, V0)`` at ``t = 0`` up to ``t_end``.

    Parameters
    ----------
    tol : float
        Local error tolerance per step (absolute and relative), in
        ``[1e-13, 1e-3]``.  Switching events are located to
        ``tol * max(1, |U|)``.
    t_eval : array_like, optional
        Sample instants, served by the dense output.  Defaults to the
        accepted step times.
    max_step : float, optional
        Defaults to ``0.5 / max(lambda)``.

    Raises
    ------
    StepSizeError
        Step size below ``1e-14 * t_end``.
    DivergenceError
        Non-finite state.
    """
    if not t_end > 0:
        raise ValidationError("t_end must be positive")
    if not 1e-13 <= tol <= 1e-3:
        raise ValidationError("tol must lie in [1e-13, 1e-3]")
    n = system.n
    U = np.array(U0, dtype=float).reshape(n)
    V = np.array(V0, dtype=float).reshape(n)
    dyn = _Dynamics(system)
    lam_max = float(system.lambdas.max())
    if max_step is None:
        max_step = 0.5 / lam_max
    h_min = 1e-14 * t_end
    ctol = _CONTROL * tol

    g = dyn.switching(U)
    mask = g > 0
    # exactly on a switching surface: follow the velocity
    on = g == 0
    if np.any(on):
        mask[on] = (dyn.Ar @ V)[on] > 0
    mats = dyn.matrices(mask)
    acc = mats[1] - mats[0] @ U

    ts, Us, Vs, As = [0.0], [U.copy()], [V.copy()], [acc.copy()]
    events = []
    t = 0.0
    h = min(max_step, 0.1 * tol**0.2 / lam_max * 10, t_end)
    n_rej = 0
    same_time_events = 0

    while t < t_end:
        if t_end - t <= h_min:
            break
        h = min(h, max_step, t_end - t)
        if h < h_min:
            raise StepSizeError(f"step size {h:.3e} underflow at t = {t:.6g}")
        U1, V1, acc1, e = _dopri_step(U, V, acc, h, mats)
        y_abs = np.abs(np.concatenate([U, V, U1, V1])).reshape(2, -1)
        err = float((np.abs(e) / (ctol * (1.0 + y_abs.max(axis=0)))).max())
        if not math.isfinite(err):
            if not (np.all(np.isfinite(U1)) and np.all(np.isfinite(V1))):
                raise DivergenceError(f"non-finite state at t = {t + h:.6g}")
            raise DivergenceError(f"non-finite error estimate at t = {t + h:.6g}")
        if err > 1.0:
            n_rej += 1
            h *= max(0.2, 0.9 * err**-0.2)
            continue

        if dyn.rows.size:
            ev_tol = tol * max(1.0, float(np.max(np.abs(U1))))
            hit = _first_inconsistency(dyn, mask, h, U, V, acc, U1, V1, acc1, ev_tol)
        else:
            hit = None
        if hit is not None:
            row_i, h_e, U_e, V_e, acc_e = _locate_event(dyn, mask, hit, h, U, V, acc, mats, ev_tol)
            if h_e <= 1e-13 * max(1.0, t):
                same_time_events += 1
                if same_time_events > 8:
                    raise StepSizeError(f"chattering contact at t = {t:.6g}")
            else:
                same_time_events = 0
            t += h_e
            U, V = U_e, V_e
            mask = mask.copy()
            mask[row_i] = not mask[row_i]
            mats = dyn.matrices(mask)
            acc = mats[1] - mats[0] @ U
            events.append((t, int(dyn.rows[row_i]), 1 if mask[row_i] else -1))
            if h_e > 0:
                ts.append(t)
                Us.append(U.copy())
                Vs.append(V.copy())
                As.append(acc_e)
            continue

        t += h
        U, V, acc = U1, V1, acc1
        ts.append(t)
        Us.append(U.copy())
        Vs.append(V.copy())
        As.append(acc.copy())
        h *= min(5.0, max(0.2, 0.9 * max(err, 1e-10) ** -0.2))

    dense = DenseOutput(np.array(ts), np.array(Us), np.array(Vs), np.array(As))
    if t_eval is None:
        times, P, Q = dense.t.copy(), dense.U.copy(), dense.V.copy()
    else:
        times = np.asarray(t_eval, dtype=float)
        P, Q = dense(times)
    return TimeSeries(times, P, Q, tol, events, dense, system, len(ts) - 1, n_rej)


def _first_inconsistency(dyn, mask, h, U, V, acc, U1, V1, acc1, ev_tol):
    """Earliest sampled point of the step where a switching function has the wrong sign.

    Returns ``(row_index, theta_lo, theta_hi, theta_root)`` or ``None``.
    """
    sign = dyn.signs[mask.tobytes()] if mask.tobytes() in dyn.signs else dyn.sign_of(mask)
    hh = h * h
    Ut = _THETA_BASIS @ np.array((U, h * V, hh * acc, hh * acc1, h * V1, U1))
    G = (Ut @ dyn.Ar.T - dyn.Br) * sign  # consistent when >= -ev_tol
    bad = G < -ev_tol
    if not bad.any():
        return None
    i = int(np.argmax(np.any(bad, axis=1)))
    lo = 0.0 if i == 0 else _THETAS[i - 1]
    hi = _THETAS[i]
    best = None
    for r in np.flatnonzero(bad[i]):
        def gr(th, r=r):
            u, _ = hermite5([th], h, U, V, acc, U1, V1, acc1)
            return float((u[0] @ dyn.Ar[r] - dyn.Br[r]) * sign[r])

        g_lo = gr(lo)
        root = lo if g_lo <= 0 else brentq(gr, lo, hi, xtol=1e-15, rtol=1e-14)
        if best is None or root < best[3]:
            best = (r, lo, hi, root)
    return best


def _locate_event(dyn, mask, hit, h, U, V, acc, mats, ev_tol, max_iter=60):
    """Shorten the step so that it ends on the switching surface of row ``hit[0]``."""
    r, lo, hi, root = hit
    s = 1.0 if mask[r] else -1.0

    def G(hs):
        if hs == 0:
            return U, V, acc, float((U @ dyn.Ar[r] - dyn.Br[r]) * s)
        U1, V1, a1, _ = _dopri_step(U, V, acc, hs, mats)
        return U1, V1, a1, float((U1 @ dyn.Ar[r] - dyn.Br[r]) * s)

    h_lo, h_hi = lo * h, hi * h
    f_lo = G(h_lo)[3]
    f_hi = G(h_hi)[3]
    if f_lo <= ev_tol and f_lo >= -ev_tol:
        out = G(h_lo)
        return r, h_lo, out[0], out[1], out[2]
    hs = root * h
    side = 0
    for _ in range(max_iter):
        U1, V1, a1, f = G(hs)
        if abs(f) <= ev_tol:
            return r, hs, U1, V1, a1
        if f > 0:
            h_lo, f_lo = hs, f
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            h_hi, f_hi = hs, f
            if side == -1:
                f_lo *= 0.5
            side = -1
        # Illinois false position
        hs = h_lo - f_lo * (h_hi - h_lo) / (f_hi - f_lo) if f_hi != f_lo else 0.5 * (h_lo + h_hi)
        if not h_lo < hs < h_hi:
            hs = 0.5 * (h_lo + h_hi)
    U1, V1, a1, f = G(hs)
    return r, hs, U1, V1, a1


def energy(system: OscillatorSystem, U, V, functional: str = "linear", weights=None) -> float:
    """Mechanical energy ``(V.V + U.Lambda^2 U)/2``.

    ``with_contact_potential`` adds ``(eps/2) sum_k w_k ((A U - B)_+)_k^2``
    (unit weights by default).  That total is conserved only when the
    contact force is the gradient of the added potential, e.g. ``N = 1``
    with ``a = 1`` or a rank-one ``A = w w^T`` with ``|w| = 1``.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    E = 0.5 * (V @ V + U @ (system.lambdas**2 * U))
    if functional == "linear":
        return float(E)
    if functional != "with_contact_potential":
        raise ValidationError(f"unknown energy functional {functional!r}")
    w = np.ones(system.n) if weights is None else np.asarray(weights, dtype=float)
    r = np.maximum(system.A @ U - system.B, 0.0)
    return float(E + 0.5 * system.eps * np.sum(w * r * r))


def energy_along(series: TimeSeries, functional: str = "with_contact_potential", weights=None) -> np.ndarray:
    return np.array([energy(series.system, u, v, functional, weights)
                     for u, v in zip(series.positions, series.velocities)])
