"""One degree of freedom: exact frequency and strained-coordinate expansions.

The model is ``u'' + omega0^2 u + eps a (u - b)_+ = 0`` with ``u(0) = a0 + eps a1``
and ``u'(0) = 0``.  In the strained time ``s = omega_eps t`` the solution is
``a0 cos s + eps v1(s) + O(eps^2)`` with
``omega_eps = omega0 + eps omega1 + eps^2 omega2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fourier_kernels import CosineSeries, positive_part_series
from .system import ValidationError


class DegenerateAmplitudeError(ValueError):
    pass


class CriticalCaseError(ValueError):
    """``|a0| == |b|``: use :func:`expand_critical`."""


class QuadratureWarning(UserWarning):
    pass


CASES = ("homogeneous", "offset", "critical", "no_contact", "full_contact")


@dataclass(frozen=True)
class Expansion1Dof:
    omega0: float
    omega1: float
    omega2: float
    a0: float
    a1: float
    v1_series: CosineSeries
    case_tag: str
    alpha1: float
    alpha2: float
    a: float = 1.0
    b: float = 0.0
    tail_bound: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def alpha0(self) -> float:
        return self.omega0**2

    @property
    def d1(self) -> float:
        return float(self.v1_series.coefficients[1]) if self.v1_series.n_max >= 1 else 0.0

    def omega(self, eps: float) -> float:
        return self.omega0 + eps * self.omega1 + eps**2 * self.omega2

    def v0(self, s):
        return self.a0 * np.cos(s)

    def v1(self, s):
        return self.v1_series(s)

    def reconstruct(self, t, eps: float):
        """``v0(omega_eps t) + eps v1(omega_eps t)``."""
        s = self.omega(eps) * np.asarray(t, dtype=float)
        return self.v0(s) + eps * self.v1(s)

    def validity_horizon(self, eps: float, gamma: float = 1.0) -> float:
        """Time horizon ``gamma / eps`` (``gamma / sqrt(eps)`` when grazing).

        The constant ``gamma`` is not known; the order in ``eps`` is.
        """
        if self.case_tag == "no_contact":
            return math.inf
        if self.case_tag == "critical":
            reaches = self.b > 0 and abs(self.a0 + eps * self.a1) > abs(self.b)
            return gamma / math.sqrt(eps) if reaches else math.inf
        return gamma / eps


def exact_frequency(omega0: float, eps: float) -> float:
    """Angular frequency of ``u'' + omega0^2 u + eps u_+ = 0`` (any amplitude).

    One half ellipse is run at ``omega0``, the other at
    ``sqrt(omega0^2 + eps)``.
    """
    if omega0 <= 0:
        raise ValidationError("omega0 must be positive")
    if eps <= -omega0**2:
        raise ValidationError("eps <= -omega0^2: the contact side no longer oscillates")
    return 2.0 * omega0 / (1.0 + (1.0 + eps / omega0**2) ** -0.5)


def exact_period(omega0: float, eps: float) -> float:
    return 2.0 * math.pi / exact_frequency(omega0, eps)


def _abs_cos_v1_tail(omega0, a0, n_max):
    # 2|a0|/(pi w0^2) sum_{k>K} (4k^2-1)^-2, K = n_max // 2
    K = n_max // 2
    k = np.arange(K + 1, K + 200_001, dtype=float)
    s = np.sum(1.0 / (4 * k * k - 1) ** 2) + 1.0 / (48.0 * (K + 200_000) ** 3)
    return 2.0 * abs(a0) / (math.pi * omega0**2) * s


def expand_homogeneous(omega0: float, a0: float, a1: float = 0.0, n_max: int = 400) -> Expansion1Dof:
    """Expansion for ``b = 0``: frequency independent of amplitude.

    ``omega1 = 1/(4 omega0)``, ``omega2 = -1/(2 omega0)^3`` and
    ``v1 = -|a0|/(pi omega0^2) (1 + 2 sum (-1)^k cos(2ks)/(4k^2-1)^2) + (a1 - A) cos s``
    where ``A`` is the value of the even part at ``s = 0``.
    """
    if omega0 <= 0:
        raise ValidationError("omega0 must be positive")
    if a0 == 0:
        raise DegenerateAmplitudeError("a0 = 0: no oscillation to expand")
    coef = np.zeros(n_max + 1)
    pref = -abs(a0) / (math.pi * omega0**2)
    coef[0] = pref
    k = np.arange(1, n_max // 2 + 1, dtype=float)
    coef[2 * k.astype(int)] = pref * 2.0 * (-1.0) ** k / (4 * k * k - 1) ** 2
    A = coef.sum()
    if n_max >= 1:
        coef[1] = a1 - A
    tail = _abs_cos_v1_tail(omega0, a0, n_max)
    w1 = 1.0 / (4.0 * omega0)
    w2 = -1.0 / (2.0 * omega0) ** 3
    return Expansion1Dof(
        omega0, w1, w2, float(a0), float(a1), CosineSeries(coef, tail), "homogeneous",
        alpha1=2 * omega0 * w1, alpha2=w1 * w1 + 2 * omega0 * w2, a=1.0, b=0.0,
        tail_bound=tail, meta={"A": A},
    )


def first_order_correction(omega0: float, forcing: CosineSeries, a0: float, a1: float):
    """Solve ``-omega0^2 (v'' + v) = f - alpha1 a0 cos s`` for an even ``v``.

    ``alpha1`` removes the secular first harmonic; the free first harmonic
    of ``v`` is fixed by ``v(0) = a1``.  Returns ``(alpha1, series, A)``.
    """
    f = forcing.coefficients
    n_max = f.size - 1
    alpha1 = f[1] / a0 if n_max >= 1 else 0.0
    l = np.arange(n_max + 1, dtype=float)
    d = np.zeros(n_max + 1)
    mask = l != 1
    d[mask] = -f[mask] / (omega0**2 * (1.0 - l[mask] ** 2))
    A = d.sum()
    if n_max >= 1:
        d[1] = a1 - A
    tail = forcing.tail_bound / (omega0**2 * max((n_max + 1) ** 2 - 1, 1))
    return alpha1, CosineSeries(d, tail), A


def expand_offset(omega0: float, a: float, b: float, a0: float, a1: float = 0.0, n_max: int = 400,
                  n_quad: int | None = None) -> Expansion1Dof:
    """Expansion of ``u'' + omega0^2 u + eps a (u - b)_+ = 0``.

    ``omega2`` has no closed form here and is obtained from the
    second-order solvability condition by panel quadrature.
    """
    if omega0 <= 0:
        raise ValidationError("omega0 must be positive")
    if abs(a0) == abs(b):
        if b == 0:
            raise DegenerateAmplitudeError("a0 = b = 0: no oscillation to expand")
        raise CriticalCaseError("|a0| == |b|: grazing contact, use expand_critical")
    if abs(a0) < b:
        # never reaches the spring: the linear solution is exact
        coef = np.zeros(max(n_max, 1) + 1)
        coef[1] = a1
        return Expansion1Dof(omega0, 0.0, 0.0, float(a0), float(a1), CosineSeries(coef, 0.0),
                             "no_contact", 0.0, 0.0, a=a, b=b)
    if a0 == 0:
        raise DegenerateAmplitudeError("a0 = 0: no oscillation to expand")
    forcing = positive_part_series(a0, b, n_max).scaled(a)
    alpha1, v1, A = first_order_correction(omega0, forcing, a0, a1)
    tag = "full_contact" if abs(a0) < -b else "offset"
    exp = Expansion1Dof(omega0, alpha1 / (2 * omega0), 0.0, float(a0), float(a1), v1, tag,
                        alpha1, 0.0, a=a, b=b, tail_bound=v1.tail_bound,
                        meta={"A": A, "beta": forcing.meta.get("beta")})
    alpha2 = alpha2_quadrature(exp, n_quad if n_quad is not None else 4 * n_max + 64)
    w1 = exp.omega1
    return Expansion1Dof(omega0, w1, (alpha2 - w1 * w1) / (2 * omega0), float(a0), float(a1), v1, tag,
                         alpha1, alpha2, a=a, b=b, tail_bound=v1.tail_bound, meta=exp.meta)


def expand_critical(omega0: float, a: float, b: float, a0: float, a1: float = 0.0) -> Expansion1Dof:
    """Grazing case ``|a0| == |b|``: the linearised solution, valid up to ``gamma/sqrt(eps)``.

    Only ``b > 0`` (spring detached at rest) is a grazing orbit; with
    ``b < 0`` the spring stays engaged and the linear approximation at
    ``omega0`` does not apply.
    """
    if b == 0:
        raise ValidationError("b = 0 is the homogeneous case, not a critical one")
    if abs(a0) != abs(b):
        raise ValidationError("expand_critical needs |a0| == |b|")
    if b < 0:
        raise ValidationError("b < 0 with |a0| == |b| keeps the spring engaged; not a grazing orbit")
    coef = np.array([0.0, a1])
    return Expansion1Dof(omega0, 0.0, 0.0, float(a0), float(a1), CosineSeries(coef, 0.0), "critical",
                         0.0, 0.0, a=a, b=b)


def _contact_interval(a0, b):
    """Sub-interval of ``[0, pi]`` on which ``a0 cos s > b``, or ``None``."""
    if a0 == 0:
        return (0.0, math.pi) if b < 0 else None
    c = b / abs(a0)
    if c >= 1:
        return None
    if c <= -1:
        return (0.0, math.pi)
    beta = math.acos(c)
    return (0.0, beta) if a0 > 0 else (math.pi - beta, math.pi)


def gauss_panels(edges, n_nodes):
    """Gauss-Legendre nodes and weights on consecutive panels ``edges``."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def alpha2_quadrature(expansion: Expansion1Dof, n_quad: int = 1664) -> float:
    """Second-order squared-frequency coefficient from the solvability condition.

    ``alpha2 = (2/(pi a0)) int_0^pi a H(a0 cos s - b) v1(s) cos s ds - alpha1 d1 / a0``,
    integrated with Gauss-Legendre on the contact arc, where the integrand
    is smooth.
    """
    e = expansion
    n_max = e.v1_series.n_max
    if n_quad < 4 * n_max:
        warnings.warn(f"n_quad={n_quad} < 4*n_max={4 * n_max}: series not resolved", QuadratureWarning,
                      stacklevel=2)
    if e.case_tag in ("no_contact", "critical"):
        return 0.0
    arc = _contact_interval(e.a0, e.b)
    integral = 0.0
    if arc is not None:
        # split the arc again to keep the panels short
        edges = np.linspace(arc[0], arc[1], 5)
        s, w = gauss_panels(edges, max(n_quad // 4, 8))
        integral = float(np.sum(w * e.v1_series(s) * np.cos(s)))
    return (2.0 * e.a / (math.pi * e.a0)) * integral - e.alpha1 * e.d1 / e.a0


def expand(omega0: float, a: float, b: float, a0: float, a1: float = 0.0, n_max: int = 400) -> Expansion1Dof:
    """Dispatch to the homogeneous, offset or critical expansion."""
    if b == 0 and a == 1:
        return expand_homogeneous(omega0, a0, a1, n_max)
    if b != 0 and abs(a0) == abs(b):
        return expand_critical(omega0, a, b, a0, a1)
    return expand_offset(omega0, a, b, a0, a1, n_max)
