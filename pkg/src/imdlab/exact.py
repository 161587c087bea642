"""Exact finite-N computations on the monomer-count lattice.

The Gibbs weight of a spin configuration depends only on its number of ones
``t`` (the monomer count), so every distribution here lives on the admissible
counts ``t = N mod 2, N mod 2 + 2, ..., N``.  All mass functions are kept in
log-space; binomials and factorials go through ``gammaln``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, log_expit, logsumexp

from . import io, model
from .errors import ClassificationMismatch, EmptyConditionError, ParityError, UsageError
from .model import ModelParams

# Beyond this the O(N) arrays are still cheap, but float64 resolution of t/N
# near a conditioning threshold is no longer trustworthy.
MAX_EXACT_N = 10**6


class Side(str, enum.Enum):
    BELOW = "BELOW"
    ABOVE = "ABOVE"


def _frozen(a):
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ExactDistribution:
    """Normalized law of the monomer count ``t`` for fixed ``(J, h, N)``."""

    N: int
    params: ModelParams
    support: np.ndarray
    log_probs: np.ndarray
    log_partition: float
    condition: dict = field(default_factory=dict, compare=False)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def m(self) -> np.ndarray:
        return self.support / self.N

    def mean(self) -> float:
        return float(np.dot(self.probs, self.support))

    def prob_of(self, t: int) -> float:
        i = np.searchsorted(self.support, t)
        if i < len(self.support) and self.support[i] == t:
            return float(np.exp(self.log_probs[i]))
        return 0.0

    def rows(self):
        p = self.probs
        for t, lp, q in zip(self.support, self.log_probs, p):
            yield int(t), t / self.N, float(lp), float(q)

    def to_csv(self, path):
        return io.write_csv(path, ["t", "m", "log_prob", "prob"], self.rows())


def dimer_count_log_weight(L: int) -> float:
    """Log of the number of perfect matchings of the complete graph on ``L`` vertices.

    ``L! / (L/2)! * 2^{-L/2}``; only defined for even ``L``.
    """
    if L < 0 or L % 2:
        raise ParityError(f"dimer count needs an even L >= 0, got {L}")
    return float(gammaln(L + 1) - gammaln(L // 2 + 1) - (L // 2) * math.log(2.0))


def admissible_counts(N: int) -> np.ndarray:
    return np.arange(N % 2, N + 1, 2, dtype=np.int64)


def lumped_log_weights(p: ModelParams, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized ``log w(t) = log C(N,t) + log D(N-t) + J t^2/N + b t`` on admissible t."""
    if N < 2:
        raise UsageError("N must be >= 2")
    t = admissible_counts(N)
    L = N - t
    log_binom = gammaln(N + 1) - gammaln(t + 1) - gammaln(L + 1)
    log_dimers = gammaln(L + 1) - gammaln(L // 2 + 1) - (L // 2) * math.log(2.0)
    lw = log_binom + log_dimers + p.a * t.astype(float) ** 2 / N + p.b(N) * t
    return t, lw


def exact_distribution(p: ModelParams, N: int) -> ExactDistribution:
    t, lw = lumped_log_weights(p, N)
    # normalize relative to the peak; log Z itself can be large enough to lose digits
    shifted = lw - lw.max()
    ls = float(logsumexp(shifted))
    return ExactDistribution(N, p, _frozen(t), _frozen(shifted - ls), float(lw.max()) + ls)


def free_energy(p: ModelParams, N: int) -> float:
    """``p_N = (1/N) log sum_D e^{-H(D)}`` exactly as defined on dimer configurations.

    This grows like ``log(N)/2``; see :func:`normalized_free_energy` for the
    quantity that converges to ``sup p_tilde``.
    """
    _, lw = lumped_log_weights(p, N)
    return float(logsumexp(lw)) / N


def normalized_free_energy(p: ModelParams, N: int) -> float:
    """``p_N - log(N)/2``, which converges to ``sup_m p_tilde(m)``."""
    return free_energy(p, N) - 0.5 * math.log(N)


def conditional(dist: ExactDistribution, xi: float, side: Side | str) -> ExactDistribution:
    """Restrict to ``t/N < xi`` (BELOW) or ``t/N > xi`` (ABOVE) and renormalize.

    A count with ``t/N == xi`` belongs to neither side.  The mass of that atom
    is recorded in ``condition["boundary_mass"]``.
    """
    side = Side(side)
    m = dist.support / dist.N
    keep = m < xi if side is Side.BELOW else m > xi
    if not keep.any():
        raise EmptyConditionError(f"no admissible counts {side.value} xi={xi} at N={dist.N}")
    lp = dist.log_probs[keep]
    lmass = float(logsumexp(lp))
    if not math.isfinite(lmass):
        raise EmptyConditionError(f"side {side.value} of xi={xi} has zero mass")
    boundary = float(np.exp(dist.log_probs[m == xi]).sum())
    cond = {"xi": xi, "side": side.value, "side_mass": math.exp(lmass), "boundary_mass": boundary}
    return ExactDistribution(dist.N, dist.params, _frozen(dist.support[keep]), _frozen(lp - lmass),
                             dist.log_partition + lmass, cond)


def scaled_statistic(dist: ExactDistribution, center: float, scale_exponent: float) -> np.ndarray:
    """``W = (t - N center) / N^scale_exponent`` on the support."""
    return (dist.support - dist.N * center) / dist.N**scale_exponent


def moments(dist: ExactDistribution, center: float, scale_exponent: float, order: int) -> float:
    """``E[W^order]`` with ``W`` from :func:`scaled_statistic`."""
    if order < 1:
        raise UsageError("order must be >= 1")
    w = scaled_statistic(dist, center, scale_exponent)
    return float(np.dot(dist.probs, w**order))


def ks_distance(dist: ExactDistribution, center: float, scale_exponent: float, law) -> float:
    """Kolmogorov-Smirnov distance between the law of ``W`` and ``law``.

    The sup is attained at a jump of the discrete CDF, so it is enough to
    compare both one-sided limits there against ``law.cdf``.
    """
    z = scaled_statistic(dist, center, scale_exponent)
    p = dist.probs
    right = np.cumsum(p)
    right = np.minimum(right / right[-1], 1.0)
    left = right - p
    F = np.asarray(law.cdf(z), dtype=float)
    return float(max(np.max(np.abs(right - F)), np.max(np.abs(left - F))))


def tail_mass(dist: ExactDistribution, m_ref: float, delta: float, m_ref2: float | None = None) -> float:
    """``P(d(m) >= delta)`` where ``d`` is the distance to ``m_ref`` (or to the nearer of two points)."""
    if delta < 0:
        raise UsageError("delta must be >= 0")
    m = dist.m
    d = np.abs(m - m_ref)
    if m_ref2 is not None:
        d = np.minimum(d, np.abs(m - m_ref2))
    sel = d >= delta
    if not sel.any():
        return 0.0
    return float(np.exp(logsumexp(dist.log_probs[sel])))


@dataclass(frozen=True)
class PairKernel:
    """Transition law of the monomer count under one pair update.

    ``down[i]`` is the probability of ``t -> t - 2`` from ``support[i]``, ``up[i]``
    of ``t -> t + 2``.
    """

    N: int
    params: ModelParams
    support: np.ndarray
    log_down: np.ndarray
    log_up: np.ndarray
    log_accept_down: np.ndarray
    log_accept_up: np.ndarray

    @property
    def down(self) -> np.ndarray:
        return np.exp(self.log_down)

    @property
    def up(self) -> np.ndarray:
        return np.exp(self.log_up)

    @property
    def stay(self) -> np.ndarray:
        return 1.0 - self.down - self.up

    def index(self, t: int) -> int:
        i = int(np.searchsorted(self.support, t))
        if i >= len(self.support) or self.support[i] != t:
            raise ParityError(f"count t={t} is not admissible for N={self.N}")
        return i

    def row(self, t: int) -> tuple[float, float, float]:
        """``(down, stay, up)`` probabilities from count ``t``."""
        i = self.index(t)
        d, u = math.exp(self.log_down[i]), math.exp(self.log_up[i])
        return d, 1.0 - d - u, u


def lumped_kernel(p: ModelParams, N: int) -> PairKernel:
    """Pair-update kernel lumped onto monomer counts.

    A monomer pair (probability ``C(t,2)/C(N,2)``) becomes a dimer with
    probability ``(L+1)E_d / (1 + (L+1)E_d)``; an empty pair
    (``C(L,2)/C(N,2)``) becomes two monomers with ``E_u / ((L-1) + E_u)``,
    where ``L = N - t`` is the pre-update count of matched sites.  Mixed pairs
    never change the count.
    """
    if N < 2:
        raise UsageError("N must be >= 2")
    t = admissible_counts(N)
    L = N - t
    m = t / N
    b = p.b(N)
    log_pairs = math.log(N) + math.log(N - 1)
    with np.errstate(divide="ignore"):
        log_mono = np.log(t * (t - 1.0)) - log_pairs
        log_empty = np.log(L * (L - 1.0)) - log_pairs
    log_ed = -4.0 * p.a * m + 4.0 * p.a / N - 2.0 * b
    log_eu = 4.0 * p.a * m + 4.0 * p.a / N + 2.0 * b
    # acceptance given the pair type, using the pre-update L
    acc_down = log_expit(np.log(L + 1.0) + log_ed)
    acc_up = log_expit(log_eu - np.log(np.maximum(L - 1.0, 1.0)))
    log_down = np.where(t >= 2, log_mono + acc_down, -np.inf)
    log_up = np.where(L >= 2, log_empty + acc_up, -np.inf)
    return PairKernel(N, p, _frozen(t), _frozen(log_down), _frozen(log_up), _frozen(acc_down), _frozen(acc_up))


def kernel_conditional_moment(kernel: PairKernel, t, k: int):
    """``E[(M - M')^k | t] = 2^k down(t) + (-2)^k up(t)``; ``t`` may be an array."""
    if k not in (1, 2):
        raise UsageError("k must be 1 or 2")
    idx = np.searchsorted(kernel.support, t)
    if np.any(kernel.support[np.minimum(idx, len(kernel.support) - 1)] != t):
        raise ParityError("inadmissible count")
    val = 2.0**k * kernel.down[idx] + (-2.0) ** k * kernel.up[idx]
    return float(val) if np.ndim(val) == 0 else val


def log_detailed_balance_gap(dist: ExactDistribution, kernel: PairKernel) -> float:
    """Max over t of ``|log pi(t) down(t) - log pi(t-2) up(t-2)|``."""
    a = dist.log_probs[1:] + kernel.log_down[1:]
    b = dist.log_probs[:-1] + kernel.log_up[:-1]
    return float(np.max(np.abs(a - b)))


@dataclass(frozen=True)
class SteinDiagnostics:
    N: int
    k: int
    m0: float
    c0: float
    g_coefficient: float
    term_variance: float
    term_remainder: float
    remainder_constant: float

    @property
    def scaled_variance(self) -> float:
        return self.term_variance * self.N ** (1.0 / (2 * self.k + 2))

    @property
    def scaled_remainder(self) -> float:
        return self.term_remainder * self.N ** (1.0 / (2 * self.k + 2))

    def to_dict(self) -> dict:
        return {"N": self.N, "k": self.k, "m0": self.m0, "c0": self.c0,
                "g_coefficient": self.g_coefficient, "term_variance": self.term_variance,
                "term_remainder": self.term_remainder, "scaled_variance": self.scaled_variance,
                "scaled_remainder": self.scaled_remainder, "remainder_constant": self.remainder_constant}


def stein_terms(p: ModelParams, N: int, k: int, m0: float | None = None, check: bool = True) -> SteinDiagnostics:
    """Evaluate the first two terms of the exchangeable-pair Berry-Esseen bound exactly.

    ``W = (t - N m0) / N^{(2k+1)/(2k+2)}``.  The conditional moments of
    ``Delta = W - W'`` come from the lumped kernel and the expectations from
    the exact distribution.  ``remainder_constant`` is the smallest ``C`` with
    ``|r(W)| <= C N^{-(4k+3)/(2k+2)} (W^{2k+2} + 1)`` on the whole support.
    """
    from .phase import Kind, classify

    if k not in (0, 1):
        raise UsageError("k must be 0 or 1")
    if check or m0 is None:
        portrait = classify(p)
        expected = {Kind.UNIQUE: 0, Kind.TRICRITICAL: 1}.get(portrait.kind)
        if expected != k:
            raise ClassificationMismatch(f"k={k} does not match phase {portrait.kind.value} of {p}")
        if m0 is None:
            m0 = portrait.maximizers[0].m
    dist = exact_distribution(p, N)
    kern = lumped_kernel(p, N)
    s = (2 * k + 1) / (2 * k + 2)
    w = scaled_statistic(dist, m0, s)
    down, up = kern.down, kern.up
    l2 = float(model.L2(m0, p))
    c0 = 2.0 * N ** (2 * s) / l2
    e_delta = (2.0 * down - 2.0 * up) / N**s
    e_delta2 = (4.0 * down + 4.0 * up) / N ** (2 * s)
    coef = float(model.L1_deriv(m0, p, 2 * k + 1)) / math.factorial(2 * k + 1) / N ** (2 * s)
    r = e_delta - coef * w ** (2 * k + 1)
    probs = dist.probs
    term_var = float(np.dot(probs, np.abs(1.0 - 0.5 * c0 * e_delta2)))
    term_rem = float(np.dot(probs, np.abs(r)))
    const = float(np.max(np.abs(r) * N ** ((4 * k + 3) / (2 * k + 2)) / (w ** (2 * k + 2) + 1.0)))
    return SteinDiagnostics(N, k, float(m0), c0, coef, term_var, term_rem, const)
