"""Limit laws, rate fitting across N, and verification reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, gamma

from . import exact, model, phase
from .errors import NotAMaximizerError, UsageError
from .io import SCHEMA_VERSION
from .model import ModelParams

GAUSSIAN = "GAUSSIAN"
QUARTIC = "QUARTIC"
TAIL_TOL = 1e-12
QUAD_EPSABS = 1e-13


@dataclass(frozen=True)
class LimitLaw:
    """Mean-zero Gaussian with variance ``param`` or quartic law ``c exp(-param z^4 / 24)``."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, QUARTIC):
            raise UsageError(f"unknown law {self.kind}")
        if not self.param > 0:
            raise UsageError(f"{self.kind} parameter must be positive, got {self.param}")

    @classmethod
    def gaussian(cls, variance: float) -> "LimitLaw":
        return cls(GAUSSIAN, float(variance))

    @classmethod
    def quartic(cls, lambda_c: float) -> "LimitLaw":
        return cls(QUARTIC, float(lambda_c))

    @property
    def beta(self) -> float:
        return self.param / 24.0

    @property
    def norm_const(self) -> float:
        """Density prefactor; ``int exp(-beta z^4) dz = 2 Gamma(5/4) beta^{-1/4}``."""
        if self.kind == GAUSSIAN:
            return 1.0 / math.sqrt(2.0 * math.pi * self.param)
        return self.beta**0.25 / (2.0 * gamma(1.25))

    @property
    def cutoff(self) -> float:
        """``Z*`` with ``exp(-beta Z^4) / (4 beta Z^3) <= TAIL_TOL``."""
        z = (math.log(1.0 / TAIL_TOL) / self.beta) ** 0.25
        while math.exp(-self.beta * z**4) / (4 * self.beta * z**3) > TAIL_TOL:
            z *= 1.05
        return z

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == GAUSSIAN:
            return self.norm_const * np.exp(-0.5 * z * z / self.param)
        return self.norm_const * np.exp(-self.beta * z**4)

    def cdf(self, z):
        return limit_cdf(self, z)

    def to_dict(self) -> dict:
        key = "variance" if self.kind == GAUSSIAN else "lambda_c"
        return {"kind": self.kind, key: self.param}


def _quartic_cdf(law: LimitLaw, z: np.ndarray) -> np.ndarray:
    beta, c, zmax = law.beta, law.norm_const, law.cutoff
    f = lambda s: math.exp(-beta * s**4)
    a = np.minimum(np.abs(z), zmax)
    order = np.argsort(a)
    nodes = np.concatenate([[0.0], a[order]])
    pieces = np.empty(len(a))
    for i in range(len(a)):
        lo, hi = nodes[i], nodes[i + 1]
        pieces[i] = quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=1e-13)[0] if hi > lo else 0.0
    half = np.empty(len(a))
    half[order] = np.cumsum(pieces)
    return 0.5 + np.sign(z) * c * half


def limit_cdf(law: LimitLaw, z):
    """CDF of ``law``; the quartic case integrates the density adaptively on ``[0, |z|]``."""
    z = np.asarray(z, dtype=float)
    flat = np.atleast_1d(z).ravel()
    if law.kind == GAUSSIAN:
        out = 0.5 * erfc(-flat / math.sqrt(2.0 * law.param))
    else:
        out = _quartic_cdf(law, flat)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if z.ndim == 0 else out.reshape(z.shape)


def quartic_mass(law: LimitLaw, R: float | None = None) -> float:
    """Quadrature of the quartic density over ``[-R, R]`` (``R`` defaults to the cutoff)."""
    R = law.cutoff if R is None else R
    return 2.0 * law.norm_const * quad(lambda s: math.exp(-law.beta * s**4), 0.0, R,
                                       epsabs=QUAD_EPSABS, epsrel=1e-13, limit=200)[0]


def quartic_coefficient_check(m0: float, p: ModelParams) -> float:
    """``2 L1'''(m0) / (4! L2(m0))``, which equals ``lambda_c / 24`` at the tricritical point."""
    if phase.classify(p).kind is not phase.Kind.TRICRITICAL:
        raise UsageError(f"{p} is not tricritical")
    return 2.0 * float(model.L1_deriv(m0, p, 3)) / (24.0 * float(model.L2(m0, p)))


def gaussian_coefficient_check(m0: float, p: ModelParams) -> float:
    """``2 L1'(m0) / (2! L2(m0))``, which equals ``1 / (2 lambda)`` at a non-degenerate maximizer."""
    if abs(model.fixed_point_residual(m0, p)) > 1e-9:
        raise UsageError(f"m0={m0} is not a fixed point for {p}")
    if 2.0 * p.J * model.g_prime(model.tau(m0, p)) >= 1.0:
        raise NotAMaximizerError(f"m0={m0} is degenerate for {p}")
    return 2.0 * float(model.L1_prime(m0, p)) / (2.0 * float(model.L2(m0, p)))


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log N, log ks)``."""

    points: tuple
    slope: float
    intercept: float
    residual: float
    scaled: dict = field(default_factory=dict)

    def scaled_ratio(self, nominal: float) -> float:
        vals = [ks * N**nominal for N, ks in self.points]
        return max(vals) / min(vals)

    def to_dict(self) -> dict:
        return {"points": [{"N": N, "ks": ks} for N, ks in self.points], "slope": self.slope,
                "intercept": self.intercept, "residual": self.residual,
                "scaled": self.scaled, "label": "empirical"}


def rate_fit(points) -> RateFit:
    pts = tuple((int(N), float(ks)) for N, ks in points)
    if len(pts) < 4:
        raise UsageError("rate_fit needs at least 4 points")
    if any(ks <= 0 for _, ks in pts):
        raise UsageError("all KS values must be positive")
    x = np.log([N for N, _ in pts])
    y = np.log([ks for _, ks in pts])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ np.array([slope, intercept]) - y)))
    scaled = {}
    for nominal in (0.5, 0.25):
        vals = [ks * N**nominal for N, ks in pts]
        scaled[str(nominal)] = {"max": max(vals), "min": min(vals), "ratio": max(vals) / min(vals)}
    return RateFit(pts, float(slope), float(intercept), resid, scaled)


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "mode", "J", "h", "portrait", "studies"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "mode": {"enum": ["clt", "critical", "conditional"]},
        "J": {"type": "number"},
        "h": {"type": "number"},
        "portrait": {"type": "object", "required": ["kind", "maximizers"]},
        "coefficient_checks": {"type": "object"},
        "studies": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "center", "scale_exponent", "law", "table", "rate_fit"],
                "properties": {
                    "label": {"type": "string"},
                    "center": {"type": "number"},
                    "scale_exponent": {"type": "number"},
                    "law": {"type": "object", "required": ["kind"],
                            "properties": {"kind": {"enum": [GAUSSIAN, QUARTIC]}}},
                    "table": {"type": "array", "items": {
                        "type": "object", "required": ["N", "ks", "scaled_ks"],
                        "properties": {"N": {"type": "integer"}, "ks": {"type": "number"},
                                       "scaled_ks": {"type": "number"}}}},
                    "rate_fit": {"type": ["object", "null"]},
                    "nominal_exponent": {"type": "number"},
                },
            },
        },
        "stein": {"type": "array"},
    },
}


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, REPORT_SCHEMA)


def ks_study(dists, center: float, scale_exponent: float, law: LimitLaw, nominal: float, label: str,
             moment_orders=(2, 4)) -> dict:
    """KS table and rate fit of one sequence of (possibly conditional) distributions."""
    table = []
    for d in dists:
        ks = exact.ks_distance(d, center, scale_exponent, law)
        row = {"N": d.N, "ks": ks, "scaled_ks": ks * d.N**nominal,
               "moments": {str(k): exact.moments(d, center, scale_exponent, k) for k in moment_orders}}
        if d.condition:
            row["condition"] = dict(d.condition)
        table.append(row)
    fit = rate_fit([(r["N"], r["ks"]) for r in table]) if len(table) >= 4 else None
    return {"label": label, "center": center, "scale_exponent": scale_exponent, "law": law.to_dict(),
            "nominal_exponent": -nominal, "table": table, "rate_fit": fit.to_dict() if fit else None}


def build_report(portrait: phase.PhasePortrait, mode: str, studies: list[dict],
                 coefficient_checks: dict | None = None, stein: list | None = None) -> dict:
    report = {"schema_version": SCHEMA_VERSION, "mode": mode, "J": portrait.params.J,
              "h": portrait.params.h, "portrait": portrait.to_dict(),
              "coefficient_checks": coefficient_checks or {}, "studies": studies}
    if stein is not None:
        report["stein"] = stein
    return report


def verify_clt(p: ModelParams, N_list, with_stein: bool = False) -> dict:
    """Off-critical CLT study: KS of ``(t - N m0)/sqrt(N)`` against ``N(0, lambda)``."""
    portrait = phase.classify(p)
    if portrait.kind is not phase.Kind.UNIQUE:
        raise UsageError(f"clt mode needs a UNIQUE portrait, got {portrait.kind.value}")
    mx = portrait.maximizers[0]
    law = LimitLaw.gaussian(mx.lam)
    dists = [exact.exact_distribution(p, N) for N in N_list]
    study = ks_study(dists, mx.m, 0.5, law, 0.5, "unconditional")
    checks = {"gaussian": {"value": gaussian_coefficient_check(mx.m, p), "target": 1.0 / (2.0 * mx.lam)}}
    stein = [exact.stein_terms(p, N, 0, mx.m, check=False).to_dict() for N in N_list] if with_stein else None
    return build_report(portrait, "clt", [study], checks, stein)


def verify_critical(N_list, with_stein: bool = False) -> dict:
    """Tricritical study: KS of ``(t - N m_c)/N^{3/4}`` against the quartic law."""
    tp = model.tricritical_point()
    p = tp.params
    portrait = phase.classify(p)
    law = LimitLaw.quartic(tp.lambda_c)
    dists = [exact.exact_distribution(p, N) for N in N_list]
    study = ks_study(dists, tp.m_c, 0.75, law, 0.25, "unconditional")
    q = quartic_coefficient_check(tp.m_c, p)
    checks = {"quartic": {"value": q, "target": tp.lambda_c / 24.0}}
    stein = [exact.stein_terms(p, N, 1, tp.m_c, check=False).to_dict() for N in N_list] if with_stein else None
    return build_report(portrait, "critical", [study], checks, stein)


def verify_conditional(J: float, N_list, h: float | None = None, xi: float | None = None) -> dict:
    """Conditional CLTs on the critical line, one study per side of ``xi``."""
    if h is None:
        h = phase.critical_h(J)
    p = ModelParams(J, h)
    portrait = phase.classify(p)
    if portrait.kind is not phase.Kind.CRITICAL_PAIR:
        raise UsageError(f"conditional mode needs a CRITICAL_PAIR portrait, got {portrait.kind.value}")
    m1, m2 = portrait.maximizers
    if xi is None:
        xi = 0.5 * (m1.m + m2.m)
    full = [exact.exact_distribution(p, N) for N in N_list]
    studies, checks = [], {}
    for ell, (mx, side) in enumerate(((m1, exact.Side.BELOW), (m2, exact.Side.ABOVE)), start=1):
        dists = [exact.conditional(d, xi, side) for d in full]
        law = LimitLaw.gaussian(mx.lam)
        studies.append(ks_study(dists, mx.m, 0.5, law, 0.5, f"side_{ell}"))
        checks[f"gaussian_{ell}"] = {"value": gaussian_coefficient_check(mx.m, p), "target": 1.0 / (2.0 * mx.lam)}
    report = build_report(portrait, "conditional", studies, checks)
    report["xi"] = xi
    return report

