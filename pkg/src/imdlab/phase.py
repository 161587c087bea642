"""Global maximization of the variational free energy and phase classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import model
from .errors import NumericalError, UsageError, WindowError
from .model import H_C, J_C, M_C, ModelParams

SCAN_POINTS = 4096
RESIDUAL_TOL = 1e-12
TOL_EQUAL = 1e-12
TOL_TRI = 1e-6
TOL_PARAM = 1e-6
CRITICAL_MARGIN = 1e-4


class Kind(str, enum.Enum):
    UNIQUE = "UNIQUE"
    CRITICAL_PAIR = "CRITICAL_PAIR"
    TRICRITICAL = "TRICRITICAL"


@dataclass(frozen=True)
class Maximizer:
    m: float
    value: float
    lam: float


@dataclass(frozen=True)
class PhasePortrait:
    kind: Kind
    maximizers: tuple[Maximizer, ...]
    params: ModelParams
    snapped: bool = False
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> list[float]:
        return [x.m for x in self.maximizers]

    def to_dict(self) -> dict:
        return {
            "J": self.params.J,
            "h": self.params.h,
            "kind": self.kind.value,
            "snapped_to_tricritical": self.snapped,
            "maximizers": [{"m": x.m, "p_tilde": x.value, "lambda": x.lam} for x in self.maximizers],
        }


def _polish(m: float, p: ModelParams) -> float:
    """Newton steps on the fixed-point residual, kept only if they do not worsen it."""
    best, rbest = m, abs(model.fixed_point_residual(m, p))
    for _ in range(3):
        slope = 1.0 - 2.0 * p.J * model.g_prime(model.tau(best, p))
        if abs(slope) < 1e-8:
            break
        cand = best - model.fixed_point_residual(best, p) / slope
        if not 0.0 < cand < 1.0:
            break
        r = abs(model.fixed_point_residual(cand, p))
        if r >= rbest:
            break
        best, rbest = cand, r
    return best


def _center_flat_root(m: float, p: ModelParams) -> float:
    """Move a root of a numerically flat residual to the zero of the third derivative.

    Near a triple root, float64 only pins the root of ``p'`` to about
    ``eps**(1/3)``.  If the zero of ``p'''`` nearby is still a root of ``p'`` to
    working precision it is the better estimate.
    """
    if abs(model.p_tilde_deriv(m, p, 2)) > TOL_TRI:
        return m
    lo, hi = max(m - 1e-3, 1e-9), min(m + 1e-3, 1 - 1e-9)
    f = lambda x: model.p_tilde_deriv(x, p, 3)
    if f(lo) * f(hi) >= 0:
        return m
    m3 = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if abs(model.fixed_point_residual(m3, p)) <= RESIDUAL_TOL:
        return m3
    return m


def local_maximizers(p: ModelParams, points: int = SCAN_POINTS) -> list[float]:
    """All local maximizers of p_tilde on (0, 1), sorted ascending."""
    if p.J == 0:
        # p_tilde is constant in m; the density concentrates at the fixed point g(h)
        return [float(model.g_of(p.h))]
    grid = np.linspace(0.0, 1.0, points)
    r = model.fixed_point_residual(grid, p)
    # p' = -2J r, so a maximum is where r crosses from negative to non-negative
    idx = np.nonzero((r[:-1] < 0) & (r[1:] >= 0))[0]
    roots = []
    for i in idx:
        a, b = grid[i], grid[i + 1]
        if r[i + 1] == 0:
            m = b
        else:
            m = brentq(model.fixed_point_residual, a, b, args=(p,), xtol=1e-15, rtol=4 * np.finfo(float).eps)
        m = _center_flat_root(_polish(m, p), p)
        if abs(model.fixed_point_residual(m, p)) > RESIDUAL_TOL:
            raise NumericalError(f"maximizer refinement failed at m={m}")
        if not roots or abs(m - roots[-1]) > 1e-9:
            roots.append(m)
    return roots


def find_maximizers(p: ModelParams, tol: float = TOL_EQUAL, points: int = SCAN_POINTS) -> list[tuple[float, float]]:
    """Global maximizers of p_tilde on [0, 1] as ``(m, p_tilde(m))`` pairs.

    Every local maximum whose value is within ``tol`` of the supremum is
    returned.  Raises NumericalError if more than two survive.
    """
    if tol <= 0:
        raise UsageError("tol must be positive")
    cands = [(m, float(model.p_tilde(m, p))) for m in local_maximizers(p, points)]
    top = max(v for _, v in cands)
    out = [(m, v) for m, v in cands if top - v <= tol]
    if len(out) > 2:
        raise NumericalError(f"{len(out)} global maximizers found for {p}")
    return out


def _is_tricritical_params(p: ModelParams, tol_param: float) -> bool:
    return abs(p.J - J_C) <= tol_param and abs(p.h - H_C) <= tol_param


def classify(p: ModelParams, tol_equal: float = TOL_EQUAL, tol_tri: float = TOL_TRI,
             tol_param: float = TOL_PARAM, points: int = SCAN_POINTS) -> PhasePortrait:
    """Phase of ``(J, h)``.

    Parameters within ``tol_param`` of the tricritical point are snapped to it
    (``snapped=True``) so that rounded inputs classify as TRICRITICAL.
    """
    if tol_equal <= 0 or tol_tri <= 0:
        raise UsageError("tolerances must be positive")
    if _is_tricritical_params(p, tol_param):
        tp = model.tricritical_point()
        mx = Maximizer(M_C, float(model.p_tilde(M_C, tp.params)), tp.lambda_c)
        snapped = (p.J, p.h) != (J_C, H_C)
        return PhasePortrait(Kind.TRICRITICAL, (mx,), p, snapped=snapped)
    maxima = find_maximizers(p, tol_equal, points)
    if len(maxima) == 2:
        mxs = tuple(Maximizer(m, v, model.lambda_variance(m, p)) for m, v in maxima)
        return PhasePortrait(Kind.CRITICAL_PAIR, mxs, p)
    m, v = maxima[0]
    if p.J > 0:
        d2 = model.p_tilde_deriv(m, p, 2)
        d3 = model.p_tilde_deriv(m, p, 3)
        if abs(d2) <= tol_tri and abs(d3) <= tol_tri:
            lam = -float(model.p_tilde_deriv(m, p, 4))
            return PhasePortrait(Kind.TRICRITICAL, (Maximizer(m, v, lam),), p)
    return PhasePortrait(Kind.UNIQUE, (Maximizer(m, v, model.lambda_variance(m, p)),), p)


def _fixed_point_h(m, J: float):
    """Field ``h`` for which ``m`` is a fixed point: ``log(m^2/(1-m))/2 - (2m-1)J``."""
    return np.log(m) - 0.5 * np.log1p(-m) - (2.0 * m - 1.0) * J


def coexistence_window(J: float) -> tuple[float, float, float, float]:
    """Range of ``h`` with three fixed points, and the turning points ``m_a < m_b``.

    The fixed-point field is increasing, decreasing, increasing in ``m`` when
    ``J > J_c``; its turning points solve ``4J m^2 - (4J + 1) m + 2 = 0``.
    Returns ``(h_lo, h_hi, m_a, m_b)``.
    """
    disc = (4 * J + 1) ** 2 - 32 * J
    if J <= J_C or disc <= 0:
        raise UsageError(f"no coexistence window for J={J} <= J_c")
    root = math.sqrt(disc)
    m_a = ((4 * J + 1) - root) / (8 * J)
    m_b = ((4 * J + 1) + root) / (8 * J)
    return float(_fixed_point_h(m_b, J)), float(_fixed_point_h(m_a, J)), m_a, m_b


def branch_maxima(J: float, h: float) -> tuple[float, float]:
    """Lower and upper local maximizers for ``h`` inside the coexistence window."""
    h_lo, h_hi, m_a, m_b = coexistence_window(J)
    if not h_lo < h < h_hi:
        raise WindowError(f"h={h} outside coexistence window ({h_lo}, {h_hi}) for J={J}")
    p = ModelParams(J, h)
    f = lambda m: _fixed_point_h(m, J) - h
    eps = 1e-300
    m1 = brentq(f, eps, m_a, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    m2 = brentq(f, m_b, 1.0 - 1e-16, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return _polish(m1, p), _polish(m2, p)


def branch_gap(J: float, h: float) -> float:
    """``p(m2) - p(m1)``; increasing in ``h`` with slope ``m2 - m1``."""
    m1, m2 = branch_maxima(J, h)
    p = ModelParams(J, h)
    return float(model.p_tilde(m2, p) - model.p_tilde(m1, p))


def critical_h(J: float, tol: float = TOL_EQUAL, margin: float = CRITICAL_MARGIN, scan: int = 64) -> float:
    """Field ``gamma(J)`` at which the two local maxima of p_tilde have equal value.

    Scans ``h`` across the coexistence window until the global maximizer jumps
    from the lower to the upper branch, then bisects on the value gap.  Above
    the returned field the upper branch ``m2`` is the global maximizer.
    """
    if J <= J_C + margin:
        raise UsageError(f"critical_h requires J > J_c + {margin}; got J={J}")
    h_lo, h_hi, _, _ = coexistence_window(J)
    width = h_hi - h_lo
    hs = np.linspace(h_lo + 1e-9 * width, h_hi - 1e-9 * width, scan)
    gaps = np.array([branch_gap(J, h) for h in hs])
    jump = np.nonzero((gaps[:-1] < 0) & (gaps[1:] >= 0))[0]
    if len(jump) != 1:
        raise WindowError(f"no single branch jump in h-window ({h_lo}, {h_hi}) for J={J}; gaps {gaps[[0, -1]]}")
    a, b = hs[jump[0]], hs[jump[0] + 1]
    if gaps[jump[0] + 1] == 0:
        return float(b)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        gm = branch_gap(J, mid)
        if gm == 0:
            return float(mid)
        if gm < 0:
            a = mid
        else:
            b = mid
    h = a if abs(branch_gap(J, a)) <= abs(branch_gap(J, b)) else b
    if abs(branch_gap(J, h)) > tol:
        raise NumericalError(f"critical_h bisection stalled with gap {branch_gap(J, h)}")
    return float(h)


def critical_line(j_min: float, j_max: float, steps: int, tol: float = TOL_EQUAL) -> list[dict]:
    """Rows ``(J, gamma, m1, m2, lambda1, lambda2)`` on an even grid of J."""
    rows = []
    for J in np.linspace(j_min, j_max, steps):
        J = float(J)
        h = critical_h(J, tol)
        m1, m2 = branch_maxima(J, h)
        p = ModelParams(J, h)
        rows.append({"J": J, "gamma": h, "m1": m1, "m2": m2,
                     "lambda1": model.lambda_variance(m1, p), "lambda2": model.lambda_variance(m2, p)})
    return rows
