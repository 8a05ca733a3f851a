"""Modal oscillator systems ``U'' + Lambda^2 U = -eps (A U - B)_+`` and presets."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np


class ValidationError(ValueError):
    """Invalid physical parameters (exit code 2 on the command line)."""


class ResonanceError(ValueError):
    """Near-resonance between a forced mode and a harmonic of the excited mode."""

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


@dataclass(frozen=True, eq=False)
class OscillatorSystem:
    """Diagonalised system with one family of unilateral springs.

    Parameters
    ----------
    lambdas : (N,) array
        Linear modal angular frequencies, all positive.
    A : (N, N) array
        Contact matrix; row ``k`` gives the switching function
        ``(A U - B)_k`` whose positive part forces mode ``k``.
    B : (N,) array
        Gaps.  ``b_k > 0`` means detached at rest, ``b_k < 0`` preloaded.
    eps : float
        Rigidity of the defect spring(s).
    phi : (n_phys, N) array, optional
        Mass-orthonormal eigenvectors when the system was built from
        physical matrices, so that ``X = phi @ U``.
    """

    lambdas: np.ndarray
    A: np.ndarray
    B: np.ndarray
    eps: float = 0.0
    phi: np.ndarray | None = field(default=None, compare=False)
    name: str = field(default="", compare=False)

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        n = lam.size
        A = np.asarray(self.A, dtype=float).reshape(n, n)
        B = np.atleast_1d(np.asarray(self.B, dtype=float)).reshape(n)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("all modal frequencies must be positive")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.isfinite(self.eps)):
            raise ValidationError("A, B and eps must be finite")
        for arr in (lam, A, B):
            arr.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "eps", float(self.eps))

    def __eq__(self, other):
        if not isinstance(other, OscillatorSystem):
            return NotImplemented
        return (self.eps == other.eps and np.array_equal(self.lambdas, other.lambdas)
                and np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B))

    def __hash__(self):
        return hash(self.digest())

    @property
    def n(self) -> int:
        return self.lambdas.size

    @property
    def contact_rows(self) -> np.ndarray:
        """Indices of rows that can switch (non-trivial ``A`` row or gap)."""
        return np.flatnonzero(np.any(self.A != 0.0, axis=1) | (self.B != 0.0))

    def with_eps(self, eps: float) -> "OscillatorSystem":
        return replace(self, eps=float(eps))

    def contact_force(self, U) -> np.ndarray:
        return self.eps * np.maximum(self.A @ U - self.B, 0.0)

    def to_dict(self) -> dict:
        out = {
            "lambdas": self.lambdas.tolist(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "eps": self.eps,
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OscillatorSystem":
        return cls(d["lambdas"], d["A"], d["B"], d.get("eps", 0.0), name=d.get("name", ""))

    def digest(self) -> str:
        payload = json.dumps(
            {k: v for k, v in self.to_dict().items() if k != "name"}, sort_keys=True
        ).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    @classmethod
    def one_dof(cls, omega0: float, eps: float = 0.0, a: float = 1.0, b: float = 0.0):
        """``u'' + omega0^2 u + eps a (u - b)_+ = 0`` for ``a > 0``."""
        if a <= 0:
            raise ValidationError("the one-degree-of-freedom form needs a > 0")
        return cls([omega0], [[a]], [a * b], eps)


def z_independence_pairs(lambdas, ref: int | None = None, q_max: int = 64, delta: float = 1e-6):
    """Return the ``(k, j, p, q)`` tuples with ``|q lam_k - p lam_j| <= delta lam_j``.

    With ``ref`` given only pairs against that mode are screened, otherwise
    every ordered pair ``k != j``.  An empty list means the screen passed.
    """
    lam = np.asarray(lambdas, dtype=float)
    q = np.arange(1, q_max + 1)
    refs = range(lam.size) if ref is None else [ref]
    bad = []
    for j in refs:
        for k in range(lam.size):
            if k == j:
                continue
            # best p for each q, then check it is within 1..q_max
            p = np.rint(q * lam[k] / lam[j])
            ok = (p >= 1) & (p <= q_max)
            hit = ok & (np.abs(q * lam[k] - p * lam[j]) <= delta * lam[j])
            if np.any(hit):
                i = int(np.argmax(hit))
                bad.append((k, j, int(p[i]), int(q[i])))
    return bad


def jacobi_eigh(S, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ascending eigenvalues and orthonormal columns.
    """
    S = np.array(S, dtype=float)
    n = S.shape[0]
    if S.shape != (n, n) or not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValidationError("matrix must be square and symmetric")
    V = np.eye(n)
    scale = max(np.abs(S).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(S, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = S[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Sp, Sq = S[:, p].copy(), S[:, q].copy()
                S[:, p] = c * Sp - s * Sq
                S[:, q] = s * Sp + c * Sq
                Rp, Rq = S[p, :].copy(), S[q, :].copy()
                S[p, :] = c * Rp - s * Rq
                S[q, :] = s * Rp + c * Rq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    else:
        raise RuntimeError("Jacobi sweeps did not converge")
    w = np.diag(S).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def modal_from_physical(M, K, phi_defect: int = 0, beta1: float = 0.0, eps: float = 0.0, name: str = ""):
    """Diagonalise ``M X'' + K X + eps M phi_d (X_1 - beta1)_+ = 0``.

    Solves ``K phi_j = lambda_j^2 M phi_j`` with ``phi_k^T M phi_j = delta_kj``
    (each eigenvector signed so that its first non-zero entry is positive),
    then places the defect on modal row ``phi_defect``:
    ``a_{d j} = phi_j[0]`` and ``b_d = beta1``.  Indices are 0-based.
    """
    M = np.asarray(M, dtype=float)
    K = np.asarray(K, dtype=float)
    if M.ndim == 1:
        M = np.diag(M)
    n = K.shape[0]
    if M.shape != (n, n) or K.shape != (n, n):
        raise ValidationError("M and K must be square and of the same size")
    m = np.diag(M)
    if np.any(M - np.diag(m)) or np.any(m <= 0):
        raise ValidationError("M must be diagonal with positive entries")
    if not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValidationError("K must be symmetric")
    r = 1.0 / np.sqrt(m)
    w, Y = jacobi_eigh(r[:, None] * K * r[None, :])
    if np.any(w <= 0):
        raise ValidationError("K must be positive definite")
    phi = r[:, None] * Y
    for j in range(n):
        nz = np.flatnonzero(np.abs(phi[:, j]) > 1e-12)
        if nz.size and phi[nz[0], j] < 0:
            phi[:, j] = -phi[:, j]
    if not 0 <= phi_defect < n:
        raise ValidationError(f"defect mode index {phi_defect} out of range")
    A = np.zeros((n, n))
    A[phi_defect, :] = phi[0, :]
    B = np.zeros(n)
    B[phi_defect] = beta1
    return OscillatorSystem(np.sqrt(w), A, B, eps, phi=phi, name=name)


def chain_matrices(n: int):
    """Unit masses joined by unit springs, both ends attached to walls."""
    K = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return np.eye(n), K


def _modal3(eps=0.0):
    w = np.ones(3) / np.sqrt(3.0)
    return OscillatorSystem([1.0, np.sqrt(2.0), np.sqrt(5.0)], np.outer(w, w), np.zeros(3), eps, name="modal3")


PRESETS = {
    "1dof-homogeneous": lambda eps=0.0: OscillatorSystem.one_dof(1.0, eps, 1.0, 0.0),
    "1dof-offset": lambda eps=0.0: OscillatorSystem.one_dof(1.0, eps, 1.0, 0.5),
    "1dof-critical": lambda eps=0.0: OscillatorSystem.one_dof(1.0, eps, 1.0, 1.0),
    "modal3": _modal3,
    "chain2": lambda eps=0.0: modal_from_physical(*chain_matrices(2), 0, 0.0, eps, name="chain2"),
    "chain3": lambda eps=0.0: modal_from_physical(*chain_matrices(3), 0, 0.0, eps, name="chain3"),
    "chain5": lambda eps=0.0: modal_from_physical(*chain_matrices(5), 0, 0.0, eps, name="chain5"),
    "chain20": lambda eps=0.0: modal_from_physical(*chain_matrices(20), 0, 0.0, eps, name="chain20"),
}


def preset(name: str, eps: float = 0.0) -> OscillatorSystem:
    """Named reference system.

    ``modal3`` has frequencies ``(1, sqrt 2, sqrt 5)`` and the rank-one
    contact ``A = w w^T`` with ``w = (1, 1, 1)/sqrt 3``, no gap.  The
    ``chainN`` presets are fixed-fixed chains of unit masses and springs
    with the defect on the lowest mode, seen through the first mass, and
    zero gap.
    """
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    sys_ = factory(eps)
    if not sys_.name:
        sys_ = replace(sys_, name=name)
    return sys_
