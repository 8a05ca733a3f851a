"""Periodic orbits of prescribed energy by shooting, and their continuation in ``eps``.

Unknowns are the initial positions ``X0`` (initial velocity pinned to 0)
and the period ``T``.  The shooting residual is
``[X(T) - X0, E(X0, 0) - c eps]``.  At a solution the column of its
Jacobian with respect to ``T`` vanishes, because ``dX(T)/dT = X'(T) = 0``,
so the solver also asks for ``X'(T) = 0`` and works on the resulting
over-determined system in the least-squares sense.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .integrator import IntegrationError, energy, simulate
from .system import OscillatorSystem, ValidationError


class NNMError(RuntimeError):
    pass


class NNMConvergenceError(NNMError):
    """Iteration limit reached; ``best`` holds the iterate with the smallest residual."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateOrbitError(NNMError):
    pass


class ContinuationError(NNMError):
    """The branch could not be started (exit code 5 on the command line)."""


@dataclass
class NNMResult:
    X0: np.ndarray
    T: float
    energy: float
    eps: float
    residual_norm: float
    branch_id: int
    iterations: int
    velocity_residual: float = 0.0
    target_energy: float = 0.0

    @property
    def frequency(self) -> float:
        return 2.0 * math.pi / self.T

    def to_dict(self) -> dict:
        d = asdict(self)
        d["X0"] = [float(x) for x in self.X0]
        d["frequency"] = self.frequency
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NNMResult":
        keys = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in d.items() if k in keys}
        kw["X0"] = np.asarray(kw["X0"], dtype=float)
        return cls(**kw)


class Branch(list):
    """List of :class:`NNMResult` with completion status."""

    def __init__(self, items=(), complete=True, diagnostic=""):
        super().__init__(items)
        self.complete = complete
        self.diagnostic = diagnostic

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"complete": self.complete, "diagnostic": self.diagnostic,
                       "points": [r.to_dict() for r in self]}, fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "T", "frequency", "energy", "residual", "iterations"])
            for r in self:
                w.writerow([repr(r.eps), repr(r.T), repr(r.frequency), repr(r.energy),
                            repr(r.residual_norm), r.iterations])


def orbit_energy(system: OscillatorSystem, X0, functional: str = "linear") -> float:
    return energy(system, X0, np.zeros(system.n), functional)


def _sim_tol(tol):
    return min(max(tol / 10.0, 1e-13), 1e-3)


def shoot_residual(system: OscillatorSystem, X0, T: float, c: float, tol: float = 1e-10,
                   include_velocity: bool = False, functional: str = "linear") -> np.ndarray:
    """``[X(T) - X0, E(X0, 0) - c eps]`` for the orbit started at rest from ``X0``.

    With ``include_velocity`` the vector ``X'(T)`` is inserted before the
    energy entry (length ``2N + 1`` instead of ``N + 1``).
    """
    if not T > 0:
        raise ValidationError("period must be positive")
    X0 = np.asarray(X0, dtype=float)
    ts = simulate(system, X0, np.zeros(system.n), T, _sim_tol(tol), t_eval=[T])
    XT, VT = ts.positions[-1], ts.velocities[-1]
    e = orbit_energy(system, X0, functional) - c * system.eps
    parts = [XT - X0, VT, [e]] if include_velocity else [XT - X0, [e]]
    return np.concatenate(parts)


def _dogleg(J, r, radius):
    g = J.T @ r
    p_gn = np.linalg.lstsq(J, -r, rcond=None)[0]
    if np.linalg.norm(p_gn) <= radius:
        return p_gn
    Jg = J @ g
    gg = g @ g
    p_c = -(gg / (Jg @ Jg)) * g if Jg @ Jg > 0 else -g
    nc = np.linalg.norm(p_c)
    if nc >= radius:
        return p_c * (radius / nc)
    # point where the segment from p_c towards p_gn leaves the trust region
    d = p_gn - p_c
    a, b, cc = d @ d, 2 * p_c @ d, p_c @ p_c - radius**2
    tau = (-b + math.sqrt(b * b - 4 * a * cc)) / (2 * a)
    return p_c + tau * d


def solve_nnm(system: OscillatorSystem, X0_guess, T_guess: float, c: float, tol: float = 1e-10,
              max_iter: int = 30, functional: str = "linear", branch_id: int = -1) -> NNMResult:
    """Solve for a zero-velocity start ``X0`` and period ``T`` of prescribed energy ``c eps``.

    Trust-region dogleg on a forward-difference Jacobian (step
    ``sqrt(tol)`` times the variable scale).  Converged when the full
    residual, velocity return included, has norm at most ``tol``.

    Raises
    ------
    NNMConvergenceError
        ``max_iter`` exceeded; carries the best iterate.
    DegenerateOrbitError
        Column-scaled Jacobian with condition number above ``1e12``, or
        above ``1 / min(1e-3, sqrt(tol))``, where finite-difference
        noise hides an exact singularity.
    """
    n = system.n
    x = np.concatenate([np.asarray(X0_guess, dtype=float).reshape(n), [float(T_guess)]])
    if not x[-1] > 0:
        raise ValidationError("period guess must be positive")

    def R(z):
        return shoot_residual(system, z[:n], z[-1], c, tol, include_velocity=True, functional=functional)

    def result(z, r, it):
        F = np.concatenate([r[:n], r[-1:]])
        return NNMResult(z[:n].copy(), float(z[-1]), orbit_energy(system, z[:n], functional), system.eps,
                         float(np.linalg.norm(F)), branch_id, it, float(np.linalg.norm(r[n:2 * n])),
                         c * system.eps)

    r = R(x)
    best = (np.linalg.norm(r), x.copy(), r.copy())
    radius = max(0.5 * np.linalg.norm(x), 1e-3)
    sq = math.sqrt(max(tol, 1e-15))
    for it in range(max_iter + 1):
        norm = np.linalg.norm(r)
        if norm <= tol:
            return result(x, r, it)
        if it == max_iter:
            break
        amp = max(np.max(np.abs(x[:n])), 1e-8)
        steps = sq * np.concatenate([np.maximum(np.abs(x[:n]), amp), [x[-1]]])
        J = np.empty((r.size, n + 1))
        for j in range(n + 1):
            z = x.copy()
            z[j] += steps[j]
            J[:, j] = (R(z) - r) / steps[j]
        cols = np.linalg.norm(J, axis=0)
        if np.any(cols == 0):
            raise DegenerateOrbitError(f"shooting Jacobian has a zero column at iteration {it}")
        sv = np.linalg.svd(J / cols, compute_uv=False)
        # finite differences leave a noise floor near sqrt(tol) in a singular direction
        if sv[-1] < max(sv[0] / 1e12, sv[0] * min(1e-3, sq)):
            raise DegenerateOrbitError(
                f"shooting Jacobian is singular at iteration {it} (cond ~ {sv[0] / max(sv[-1], 1e-300):.2e})")
        while True:
            p = _dogleg(J, r, radius)
            z = x + p
            if z[-1] <= 0:
                radius *= 0.25
                continue
            try:
                rz = R(z)
            except IntegrationError:
                radius *= 0.25
                if radius < 1e-14 * np.linalg.norm(x):
                    break
                continue
            pred = norm**2 - np.linalg.norm(r + J @ p) ** 2
            act = norm**2 - np.linalg.norm(rz) ** 2
            rho = act / pred if pred > 0 else -1.0
            if rho < 0.25:
                radius = 0.25 * np.linalg.norm(p)
            elif rho > 0.75 and np.linalg.norm(p) > 0.99 * radius:
                radius *= 2.0
            if rho > 1e-4 or np.linalg.norm(rz) < norm:
                x, r = z, rz
                break
            if radius < 1e-14 * np.linalg.norm(x):
                break
        if np.linalg.norm(r) < best[0]:
            best = (np.linalg.norm(r), x.copy(), r.copy())
        if radius < 1e-14 * np.linalg.norm(x):
            break
    raise NNMConvergenceError(f"no convergence after {max_iter} iterations (|F| = {best[0]:.3e})",
                              result(best[1], best[2], max_iter))


def linear_mode_guess(system: OscillatorSystem, mode: int, c: float):
    """Linear mode ``mode`` at rest with energy ``c eps`` and its linear period."""
    lam = system.lambdas[mode]
    X0 = np.zeros(system.n)
    X0[mode] = math.sqrt(2.0 * c * system.eps) / lam
    return X0, 2.0 * math.pi / lam


def continue_nnm(system: OscillatorSystem, mode: int, c: float, eps_start: float, eps_end: float,
                 delta0: float, tol: float = 1e-10, max_iter: int = 30, secant: bool = True,
                 functional: str = "linear") -> Branch:
    """Follow the orbit issued from linear mode ``mode`` from ``eps_start`` to ``eps_end``.

    Each accepted point seeds the next solve (extrapolated from the last
    two points when ``secant``).  A failed step halves ``delta``; below
    ``1e-6 delta0`` the sweep stops and the partial branch is returned with
    ``complete = False``.
    """
    if not 0 <= mode < system.n:
        raise ValidationError(f"mode {mode} out of range")
    if not (delta0 > 0 and c > 0 and eps_start > 0 and eps_end > 0):
        raise ValidationError("need delta0 > 0, c > 0, eps_start > 0 and eps_end > 0")
    direction = 1.0 if eps_end >= eps_start else -1.0
    sys0 = system.with_eps(eps_start)
    X0, T0 = linear_mode_guess(sys0, mode, c)
    try:
        first = solve_nnm(sys0, X0, T0, c, tol, max_iter, functional, branch_id=mode)
    except (NNMError, IntegrationError) as exc:
        raise ContinuationError(f"cannot start the branch at eps = {eps_start}: {exc}") from exc
    branch = Branch([first])
    eps = eps_start
    delta = delta0
    while direction * (eps_end - eps) > 1e-14 * max(1.0, abs(eps_end)):
        step = min(delta, abs(eps_end - eps))
        eps_new = eps + direction * step
        last = branch[-1]
        X_pred, T_pred = last.X0.copy(), last.T
        if secant and len(branch) >= 2:
            prev = branch[-2]
            ratio = (eps_new - last.eps) / (last.eps - prev.eps)
            X_pred = last.X0 + ratio * (last.X0 - prev.X0)
            T_pred = last.T + ratio * (last.T - prev.T)
        else:
            # energy grows with eps: rescale the amplitude
            X_pred = X_pred * math.sqrt(eps_new / last.eps)
        try:
            res = solve_nnm(system.with_eps(eps_new), X_pred, T_pred, c, tol, max_iter, functional,
                            branch_id=mode)
        except (NNMError, IntegrationError) as exc:
            delta /= 2.0
            if delta < 1e-6 * delta0:
                branch.complete = False
                branch.diagnostic = f"branch lost near eps = {eps:.6g}: {exc}"
                return branch
            continue
        branch.append(res)
        eps = eps_new
        delta = min(2.0 * delta, delta0)
    return branch


def orbit(system: OscillatorSystem, result: NNMResult, n_periods: int = 1, samples_per_period: int = 256):
    """Sample ``n_periods`` periods of a converged orbit on a uniform grid (end point excluded)."""
    n_s = n_periods * samples_per_period
    t = np.arange(n_s) * (result.T / samples_per_period)
    return simulate(system, result.X0, np.zeros(system.n), n_periods * result.T, _sim_tol(1e-10), t_eval=t)
