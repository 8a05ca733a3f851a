"""Closed-form cosine coefficients of rectified cosines.

Every expansion in this package is driven by the positive part of a shifted
cosine, ``(p cos s - b)_+``.  Its Fourier series only contains cosines, with
coefficients decaying like ``k**-2`` because of the kink at the contact
boundary ``s = +-beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when a rectified cosine is requested outside ``|c| <= 1``."""


@dataclass(frozen=True)
class CosineSeries:
    """Finite even series ``sum_k c_k cos(k s)`` for ``k = 0..n_max``.

    ``tail_bound`` is a sup-norm bound on the discarded terms ``k > n_max``
    when one is known (``nan`` otherwise).
    """

    coefficients: np.ndarray
    tail_bound: float = float("nan")
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d array")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def n_max(self) -> int:
        return self.coefficients.size - 1

    def __call__(self, s, derivative: int = 0):
        return eval_series(self, s, derivative=derivative)

    def __len__(self):
        return self.coefficients.size

    def __getitem__(self, k):
        return self.coefficients[k]

    def scaled(self, factor: float) -> "CosineSeries":
        return CosineSeries(factor * self.coefficients, abs(factor) * self.tail_bound, dict(self.meta))

    def padded(self, n_max: int) -> "CosineSeries":
        """Same series, zero-extended (or truncated) to ``n_max``."""
        c = np.zeros(n_max + 1)
        m = min(n_max, self.n_max) + 1
        c[:m] = self.coefficients[:m]
        return CosineSeries(c, self.tail_bound, dict(self.meta))

    def __add__(self, other: "CosineSeries") -> "CosineSeries":
        n = max(self.n_max, other.n_max)
        a, b = self.padded(n), other.padded(n)
        return CosineSeries(a.coefficients + b.coefficients, self.tail_bound + other.tail_bound)


def zero_series(n_max: int) -> CosineSeries:
    return CosineSeries(np.zeros(n_max + 1), 0.0)


def eval_series(series: CosineSeries, s, derivative: int = 0):
    """Evaluate ``sum_k c_k cos(k s)`` (or its ``derivative``-th derivative) at ``s``.

    ``s`` may be a scalar or an array; the result has the same shape.
    """
    c = series.coefficients
    k = np.arange(c.size, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    flat = s_arr.reshape(-1)
    out = np.empty(flat.shape)
    # d^m/ds^m cos(ks) = k^m cos(ks + m pi/2)
    weights = c * k**derivative if derivative else c
    phase = derivative * np.pi / 2.0
    chunk = max(1, 2_000_000 // max(c.size, 1))
    for i in range(0, flat.size, chunk):
        block = flat[i:i + chunk]
        out[i:i + chunk] = np.cos(np.outer(block, k) + phase) @ weights
    if s_arr.ndim == 0:
        return float(out[0])
    return out.reshape(s_arr.shape)


def abs_cos_coeffs(n_max: int) -> CosineSeries:
    """Cosine series of ``|cos s|`` up to frequency ``n_max``.

    Only the constant ``2/pi`` and even frequencies ``2k`` carry weight
    ``-(4/pi) (-1)**k / (4k**2 - 1)``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    c = np.zeros(n_max + 1)
    c[0] = 2.0 / np.pi
    kk = np.arange(1, n_max // 2 + 1)
    c[2 * kk] = -(4.0 / np.pi) * (-1.0) ** kk / (4.0 * kk**2 - 1.0)
    # sum_{k>K} 4/(pi(4k^2-1)) = 2/(pi(2K+1)) with K = n_max//2
    tail = 2.0 / (np.pi * (2 * (n_max // 2) + 1))
    return CosineSeries(c, tail)


def _rectified_tail(beta: float, n_max: int) -> float:
    # |c_k| <= (2/pi)(|cos b| + k sin b) / (k(k^2-1)); both sums telescope.
    n = max(n_max, 1)
    return (2.0 / np.pi) * (
        np.sin(beta) * 0.5 * (1.0 / n + 1.0 / (n + 1)) + abs(np.cos(beta)) / (2.0 * n * (n + 1))
    )


def rectified_cos_coeffs(c: float, n_max: int) -> tuple[float, CosineSeries]:
    """Coefficients of ``(cos s - c)_+`` for ``|c| <= 1``.

    Returns ``(beta, series)`` with ``beta = arccos(c)``, the half-width of
    the contact arc.  The first harmonic has its own formula; the generic one
    is only used for ``k >= 2``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if not abs(c) <= 1.0:
        raise DomainError(f"|c| = {abs(c)!r} > 1: (cos s - c)_+ has no contact arc")
    beta = float(np.arccos(c))
    coef = np.zeros(n_max + 1)
    sb = np.sin(beta)
    coef[0] = (sb - c * beta) / np.pi
    if n_max >= 1:
        coef[1] = (np.sin(2 * beta) / 2.0 + beta - 2.0 * c * sb) / np.pi
    if n_max >= 2:
        k = np.arange(2, n_max + 1, dtype=float)
        coef[2:] = (
            np.sin((k + 1) * beta) / (k + 1)
            + np.sin((k - 1) * beta) / (k - 1)
            - 2.0 * c * np.sin(k * beta) / k
        ) / np.pi
    return beta, CosineSeries(coef, _rectified_tail(beta, n_max), {"beta": beta, "c": float(c)})


def rectified_neg_cos_coeffs(c: float, n_max: int) -> tuple[float, CosineSeries]:
    """Coefficients of ``(-cos s - c)_+``; the shift ``s -> s + pi`` of the above."""
    beta, base = rectified_cos_coeffs(c, n_max)
    sign = (-1.0) ** np.arange(n_max + 1)
    return beta, CosineSeries(sign * base.coefficients, base.tail_bound, {"beta": beta, "c": float(c)})


def positive_part_series(p: float, b: float, n_max: int) -> CosineSeries:
    """Cosine series of ``(p cos s - b)_+`` for any real ``p`` and ``b``.

    Dispatches to the rectified kernels when the orbit crosses the gap,
    and returns the exact zero / affine series when it never / always does.
    ``meta['contact']`` is one of ``none``, ``partial``, ``full``.
    """
    if p == 0.0:
        coef = np.zeros(n_max + 1)
        coef[0] = max(-b, 0.0)
        return CosineSeries(coef, 0.0, {"contact": "full" if b < 0 else "none"})
    amp = abs(p)
    c = b / amp
    if c >= 1.0:
        return CosineSeries(np.zeros(n_max + 1), 0.0, {"contact": "none", "c": c})
    if c <= -1.0:
        coef = np.zeros(n_max + 1)
        coef[0] = -b
        if n_max >= 1:
            coef[1] = p
        return CosineSeries(coef, 0.0, {"contact": "full", "c": c})
    kernel = rectified_cos_coeffs if p > 0 else rectified_neg_cos_coeffs
    beta, ser = kernel(c, n_max)
    out = ser.scaled(amp)
    out.meta.update({"contact": "partial", "beta": beta, "c": c})
    return out
