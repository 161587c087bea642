"""Closed-form scalar functions of the imitative monomer-dimer mean-field model.

Everything here is a pure function of ``(m, J, h)``.  Functions accept floats
or numpy arrays and broadcast.  Exponentials of ``tau`` are always evaluated
with the larger of ``0`` and ``2 tau`` factored out, so that nothing overflows
for ``|tau| <= 300``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError, NotAMaximizerError, NumericalError, UsageError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ModelParams:
    """Imitation coefficient ``J >= 0`` and monomer field ``h``."""

    J: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.J) and math.isfinite(self.h)):
            raise DomainError(f"non-finite parameters J={self.J}, h={self.h}")
        if self.J < 0:
            raise DomainError(f"J must be >= 0, got {self.J}")

    @property
    def a(self) -> float:
        return self.J

    def b(self, N: int) -> float:
        """Linear coefficient of the Hamiltonian at system size ``N``."""
        return 0.5 * math.log(N) + self.h - self.J


@dataclass(frozen=True)
class TricriticalPoint:
    J_c: float
    h_c: float
    m_c: float
    lambda_c: float

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.J_c, self.h_c)


# 1 / (4(3 - 2 sqrt2)) written without the cancellation
J_C = (3.0 + 2.0 * SQRT2) / 4.0
H_C = 0.5 * math.log(2.0 * SQRT2 - 2.0) - 0.25
M_C = 2.0 - SQRT2
# -p''''(m_c) = 24 * (1/2 + 17 sqrt(2) / 48)
LAMBDA_C_EXACT = 24.0 * (0.5 + 17.0 * SQRT2 / 48.0)
L1_THIRD_AT_MC = 6.0 + 17.0 * SQRT2 / 4.0


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("g is only defined for finite arguments")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def g_of(x):
    """Positive root ``g`` of ``g**2 / (1 - g) = exp(2x)``.

    Equal to ``(sqrt(e^{4x} + 4 e^{2x}) - e^{2x}) / 2``; evaluated as
    ``2 / (1 + sqrt(1 + 4 e^{-2x}))`` for ``x >= 0`` and
    ``2 e^x / (e^x + sqrt(e^{2x} + 4))`` for ``x < 0``.
    """
    x = _check_finite(x)
    pos = x >= 0
    ep = np.exp(-2.0 * np.where(pos, x, 0.0))
    en = np.exp(np.where(pos, 0.0, x))
    out = np.where(pos, 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * ep)), 2.0 * en / (en + np.sqrt(en * en + 4.0)))
    return _out(out)


def one_minus_g(x):
    """``1 - g(x)`` without cancellation for large ``x``."""
    x = _check_finite(x)
    pos = x >= 0
    ep = 4.0 * np.exp(-2.0 * np.where(pos, x, 0.0))
    s = np.sqrt(1.0 + ep)
    out = np.where(pos, ep / (1.0 + s) ** 2, 1.0 - np.asarray(g_of(np.where(pos, -1.0, x))))
    return _out(out)


def g_prime(x):
    """Derivative of :func:`g_of`, ``2 g (1 - g) / (2 - g)``."""
    g = np.asarray(g_of(x))
    return _out(2.0 * g * np.asarray(one_minus_g(x)) / (2.0 - g))


def _g_second(x):
    # g'' = phi'(g) * g' with phi(g) = 2g(1-g)/(2-g)
    g = np.asarray(g_of(x))
    dphi = 2.0 * (2.0 - 4.0 * g + g * g) / (2.0 - g) ** 2
    return dphi * np.asarray(g_prime(x))


def tau(m, p: ModelParams):
    return _out((2.0 * np.asarray(m, dtype=float) - 1.0) * p.J + p.h)


def p_tilde(m, p: ModelParams):
    """Variational free energy ``-J m^2 - (1 - G + log(1 - G)) / 2`` with ``G = g(tau(m))``."""
    m = np.asarray(m, dtype=float)
    t = np.asarray(tau(m, p))
    omg = np.asarray(one_minus_g(t))
    if np.any(omg <= 0):
        raise NumericalError("g(tau(m)) >= 1; g_of is broken")
    return _out(-p.J * m * m - 0.5 * (omg + np.log(omg)))


def richardson(f, x, order: int, h0: float = 1e-3, levels: int = 2):
    """Central-difference derivative of ``f`` at ``x`` with Richardson extrapolation.

    ``order`` is 1 or 2; each level removes the next even power of the step.
    """
    if order not in (1, 2):
        raise UsageError("richardson supports order 1 or 2")
    x = np.asarray(x, dtype=float)

    def central(h):
        if order == 1:
            return (np.asarray(f(x + h)) - np.asarray(f(x - h))) / (2.0 * h)
        return (np.asarray(f(x + h)) - 2.0 * np.asarray(f(x)) + np.asarray(f(x - h))) / (h * h)

    table = [central(h0 / 2**i) for i in range(levels + 1)]
    for lev in range(1, levels + 1):
        fac = 4.0**lev
        table = [(fac * table[i + 1] - table[i]) / (fac - 1.0) for i in range(len(table) - 1)]
    return _out(table[0])


def p_tilde_deriv(m, p: ModelParams, order: int):
    """Derivative of :func:`p_tilde` of order 1 to 4.

    Orders 1 and 2 are closed forms, ``2J(g - m)`` and ``2J(2J g' - 1)``.
    Orders 3 and 4 are Richardson-extrapolated central differences of the
    closed-form second derivative.
    """
    if order == 1:
        return _out(2.0 * p.J * (np.asarray(g_of(tau(m, p))) - np.asarray(m, dtype=float)))
    if order == 2:
        return _out(2.0 * p.J * (2.0 * p.J * np.asarray(g_prime(tau(m, p))) - 1.0))
    if order in (3, 4):
        return richardson(lambda x: p_tilde_deriv(x, p, 2), m, order - 2)
    raise UsageError(f"unsupported derivative order {order}")


def fixed_point_residual(m, p: ModelParams):
    """``m - g(tau(m))``; zero exactly at stationary points of p_tilde (J > 0)."""
    return _out(np.asarray(m, dtype=float) - np.asarray(g_of(tau(m, p))))


def _scaled_exp(s):
    """Return ``(e^{s - c}, e^{-c})`` with ``c = max(0, s)``."""
    s = np.asarray(s, dtype=float)
    c = np.maximum(s, 0.0)
    return np.exp(s - c), np.exp(-c)


def _lk(m, p: ModelParams, sign: float):
    m = np.asarray(m, dtype=float)
    E, one = _scaled_exp(2.0 * np.asarray(tau(m, p)))
    num = m * m * one + sign * (1.0 - m) * E
    return 2.0 * (1.0 - m) * num / ((1.0 - m) * one + E)


def L1(m, p: ModelParams):
    """Leading drift ``2(1-m)(m^2 - (1-m)e^{2tau}) / ((1-m) + e^{2tau})``."""
    return _out(_lk(m, p, -1.0))


def L2(m, p: ModelParams):
    """Leading second moment ``4(1-m)(m^2 + (1-m)e^{2tau}) / ((1-m) + e^{2tau})``."""
    return _out(2.0 * _lk(m, p, 1.0))


def L1_prime(m, p: ModelParams):
    m = np.asarray(m, dtype=float)
    E, one = _scaled_exp(2.0 * np.asarray(tau(m, p)))
    # numerator/denominator share the scale factor e^{-c}
    num = m * m * one - (1.0 - m) * E
    den = (1.0 - m) * one + E
    dnum = 2.0 * m * one + E - 4.0 * p.J * (1.0 - m) * E
    dden = -one + 4.0 * p.J * E
    return _out(2.0 * (-num / den + (1.0 - m) * (dnum * den - num * dden) / den**2))


def L1_deriv(m, p: ModelParams, order: int):
    """Derivative of L1 of order 0..3; orders 2 and 3 differentiate ``L1_prime`` numerically."""
    if order == 0:
        return L1(m, p)
    if order == 1:
        return L1_prime(m, p)
    if order in (2, 3):
        return richardson(lambda x: L1_prime(x, p), m, order - 1)
    raise UsageError(f"unsupported derivative order {order}")


def U_k(m, t, k: int, p: ModelParams):
    """Exact conditional moment ``E[(M - M')^k | m]`` written as a function of ``t = 1/N``.

    ``U_k(m, 0)`` reduces to ``L_k(m)``.
    """
    if k not in (1, 2):
        raise UsageError("k must be 1 or 2")
    t = float(t)
    if not 0.0 <= t < 1.0:
        raise UsageError("U_k requires 0 <= t < 1")
    m = np.asarray(m, dtype=float)
    tw = np.asarray(tau(m, p))
    # first term: x / (1 + x) with x = (1 - m + t) e^{-2tau + 4Jt}
    a = 1.0 - m + t
    with np.errstate(divide="ignore"):
        la = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)
    s1 = la - 2.0 * tw + 4.0 * p.J * t
    frac1 = expit(s1)
    first = 2.0**k / (1.0 - t) * m * (m - t) * frac1
    # second term: c e / (c + e) with c = 1 - m - t, e = e^{2tau + 4Jt}
    c = 1.0 - m - t
    E, one = _scaled_exp(2.0 * tw + 4.0 * p.J * t)
    den = c * one + E
    safe = np.where(den != 0, den, 1.0)
    second = np.where(den != 0, (-2.0) ** k / (1.0 - t) * (1.0 - m) * c * E / safe, 0.0)
    return _out(first + second)


def lambda_forms(m0: float, p: ModelParams) -> dict:
    """Limiting variance at a maximizer in its three algebraically equal forms.

    ``stable`` is ``g'/(1 - 2J g')`` at ``tau(m0)``; ``definitional`` is
    ``-1/p''(m0) - 1/(2J)`` (NaN for ``J = 0``); ``explicit`` is the rational
    form in ``m0`` and ``e^{2 tau(m0)}``.
    """
    gp = float(g_prime(tau(m0, p)))
    if 2.0 * p.J * gp >= 1.0:
        raise NotAMaximizerError(f"2J g'(tau(m0)) = {2 * p.J * gp} >= 1; p'' >= 0 at m0={m0}")
    stable = gp / (1.0 - 2.0 * p.J * gp)
    if p.J > 0:
        definitional = -1.0 / float(p_tilde_deriv(m0, p, 2)) - 1.0 / (2.0 * p.J)
    else:
        definitional = math.nan
    e2 = math.exp(2.0 * float(tau(m0, p)))
    explicit = 2.0 * (1.0 - m0) * e2 / (2.0 * m0 + (4.0 * p.J * (m0 - 1.0) + 1.0) * e2)
    return {"stable": stable, "definitional": definitional, "explicit": explicit}


def lambda_variance(m0: float, p: ModelParams) -> float:
    return lambda_forms(m0, p)["stable"]


def tricritical_point() -> TricriticalPoint:
    lam = -float(p_tilde_deriv(M_C, ModelParams(J_C, H_C), 4))
    return TricriticalPoint(J_C, H_C, M_C, lam)
