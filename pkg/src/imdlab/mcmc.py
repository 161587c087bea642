"""Pair-update Markov dynamics on spin configurations and on monomer counts.

One step picks an unordered pair ``{u, v}`` uniformly and resamples
``(sigma_u, sigma_v)`` from its conditional Gibbs law given the other sites.
Two monomers may become a dimer, two matched sites may become monomers, and a
mixed pair is swapped with probability 1/2.  The count chain uses the same
probabilities through :class:`imdlab.exact.PairKernel`.

Random streams: chain ``i`` of a run with master seed ``s`` draws from
``Generator(PCG64(SeedSequence(s).spawn(chains)[i]))``, so results do not
depend on how chains are scheduled.  A LUMPED step consumes one uniform; a
FULL step consumes two bounded integers (the pair) and one uniform.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import exact, io
from .errors import EmptyConditionError, ParityError, UsageError
from .exact import Side
from .model import ModelParams

BLOCK = 1 << 16


class Mode(str, enum.Enum):
    FULL = "FULL"
    LUMPED = "LUMPED"


@dataclass
class ChainState:
    """Monomer count ``t`` and, in FULL mode, the indicator vector ``sigma``."""

    N: int
    t: int
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if (self.N - self.t) % 2:
            raise ParityError(f"N - t must be even (N={self.N}, t={self.t})")
        if self.sigma is not None and int(self.sigma.sum()) != self.t:
            raise UsageError("sigma does not match t")


@dataclass(frozen=True)
class SamplerConfig:
    params: ModelParams
    N: int
    steps: int
    mode: Mode = Mode.LUMPED
    burn_in: int = 0
    thinning: int = 1
    chains: int = 1
    seed: int = 0
    xi: float | None = None
    side: Side | None = None
    init: int | None = None
    workers: int = 1
    debug: bool = False

    def __post_init__(self):
        if not self.steps > self.burn_in >= 0:
            raise UsageError("need steps > burn_in >= 0")
        if self.chains < 1 or self.thinning < 1:
            raise UsageError("chains and thinning must be >= 1")
        if (self.xi is None) != (self.side is None):
            raise UsageError("xi and side must be given together")
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.side is not None:
            object.__setattr__(self, "side", Side(self.side))


def chain_generators(seed: int, chains: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(chains)]


class PairDynamics:
    """Transition mechanism for fixed ``(J, h, N)``, optionally confined to one side of ``xi``.

    Confinement rejects (stays put on) any move whose target count lies on the
    wrong side; that kernel is reversible for the conditional measure and
    agrees with the free kernel away from the threshold.
    """

    def __init__(self, params: ModelParams, N: int, xi: float | None = None, side: Side | str | None = None,
                 debug: bool = False):
        self.params, self.N, self.debug = params, N, debug
        self.kernel = exact.lumped_kernel(params, N)
        self.support = self.kernel.support
        self.xi = xi
        self.side = None if side is None else Side(side)
        if self.side is None:
            self.allowed = np.ones(len(self.support), dtype=bool)
        else:
            m = self.support / N
            self.allowed = m < xi if self.side is Side.BELOW else m > xi
            if not self.allowed.any():
                raise EmptyConditionError(f"no admissible counts {self.side.value} xi={xi}")
        self._down = self.kernel.down.tolist()
        self._up = self.kernel.up.tolist()
        self._acc_down = np.exp(self.kernel.log_accept_down).tolist()
        self._acc_up = np.exp(self.kernel.log_accept_up).tolist()
        self._allowed = self.allowed.tolist()

    def default_init(self) -> int:
        """Most probable admissible count on the allowed side."""
        d = exact.exact_distribution(self.params, self.N)
        lp = np.where(self.allowed, d.log_probs, -np.inf)
        return int(self.support[int(np.argmax(lp))])

    def initial_state(self, mode: Mode, rng: np.random.Generator, t0: int | None = None) -> ChainState:
        t0 = self.default_init() if t0 is None else int(t0)
        i = int(np.searchsorted(self.support, t0))
        if i >= len(self.support) or self.support[i] != t0:
            raise ParityError(f"initial count {t0} is not admissible for N={self.N}")
        if not self.allowed[i]:
            raise UsageError(f"initial count {t0} is outside the conditioning side")
        if Mode(mode) is Mode.LUMPED:
            return ChainState(self.N, t0)
        sigma = np.zeros(self.N, dtype=np.int8)
        sigma[:t0] = 1
        rng.shuffle(sigma)
        return ChainState(self.N, t0, sigma)

    def step(self, state: ChainState, rng: np.random.Generator) -> ChainState:
        """One pair update; returns a new state and leaves ``state`` untouched."""
        i = (state.t - self.support[0]) // 2
        if state.sigma is None:
            u = rng.random()
            d = self._down[i]
            if u < d:
                j = i - 1
            elif u >= 1.0 - self._up[i]:
                j = i + 1
            else:
                j = i
            if j != i and not self._allowed[j]:
                j = i
            return ChainState(self.N, int(self.support[j]))
        N = self.N
        a = int(rng.integers(N))
        b = int(rng.integers(N - 1))
        if b >= a:
            b += 1
        r = rng.random()
        sigma = state.sigma.copy()
        su, sv = sigma[a], sigma[b]
        t = state.t
        if su == 1 and sv == 1:
            if r < self._acc_down[i] and self._allowed[i - 1]:
                sigma[a] = sigma[b] = 0
                t -= 2
        elif su == 0 and sv == 0:
            if r < self._acc_up[i] and self._allowed[i + 1]:
                sigma[a] = sigma[b] = 1
                t += 2
        elif r < 0.5:
            sigma[a], sigma[b] = sv, su
        return ChainState(N, t, sigma)


@dataclass
class ChainResult:
    index: int
    counts: np.ndarray
    trace: np.ndarray
    moves: int
    rejected: int
    steps: int


def _run_lumped(dyn: PairDynamics, t0: int, cfg: SamplerConfig, rng: np.random.Generator, index: int) -> ChainResult:
    down, up, allowed = dyn._down, dyn._up, dyn._allowed
    stay_hi = [1.0 - x for x in up]
    i = (t0 - int(dyn.support[0])) // 2
    n = len(down)
    counts = [0] * n
    trace = []
    moves = rejected = 0
    done = 0
    while done < cfg.steps:
        block = rng.random(min(BLOCK, cfg.steps - done)).tolist()
        for u in block:
            if u < down[i]:
                j = i - 1
            elif u >= stay_hi[i]:
                j = i + 1
            else:
                j = i
            if j != i:
                if allowed[j]:
                    i = j
                    moves += 1
                else:
                    rejected += 1
            done += 1
            if done > cfg.burn_in and (done - cfg.burn_in) % cfg.thinning == 0:
                counts[i] += 1
                trace.append(i)
    t_trace = dyn.support[np.asarray(trace, dtype=np.int64)] if trace else np.zeros(0, dtype=np.int64)
    return ChainResult(index, np.asarray(counts, dtype=np.int64), t_trace, moves, rejected, cfg.steps)


def _run_full(dyn: PairDynamics, state: ChainState, cfg: SamplerConfig, rng: np.random.Generator, index: int) -> ChainResult:
    N = dyn.N
    acc_down, acc_up, allowed = dyn._acc_down, dyn._acc_up, dyn._allowed
    sigma = state.sigma.tolist()
    t = state.t
    t_min = int(dyn.support[0])
    i = (t - t_min) // 2
    counts = [0] * len(acc_down)
    trace = []
    moves = rejected = 0
    done = 0
    debug = cfg.debug
    while done < cfg.steps:
        size = min(BLOCK, cfg.steps - done)
        us = rng.integers(N, size=size).tolist()
        vs = rng.integers(N - 1, size=size).tolist()
        rs = rng.random(size).tolist()
        for a, b, r in zip(us, vs, rs):
            if b >= a:
                b += 1
            su, sv = sigma[a], sigma[b]
            if su and sv:
                if r < acc_down[i]:
                    if allowed[i - 1]:
                        sigma[a] = sigma[b] = 0
                        i -= 1
                        moves += 1
                    else:
                        rejected += 1
            elif not su and not sv:
                if r < acc_up[i]:
                    if allowed[i + 1]:
                        sigma[a] = sigma[b] = 1
                        i += 1
                        moves += 1
                    else:
                        rejected += 1
            elif r < 0.5:
                sigma[a], sigma[b] = sv, su
                if debug:
                    assert sum(sigma) == t_min + 2 * i, "mixed-pair update changed the count"
            done += 1
            if done > cfg.burn_in and (done - cfg.burn_in) % cfg.thinning == 0:
                counts[i] += 1
                trace.append(i)
    t_trace = dyn.support[np.asarray(trace, dtype=np.int64)] if trace else np.zeros(0, dtype=np.int64)
    return ChainResult(index, np.asarray(counts, dtype=np.int64), t_trace, moves, rejected, cfg.steps)


def _run_chain(cfg: SamplerConfig, index: int) -> ChainResult:
    rng = chain_generators(cfg.seed, cfg.chains)[index]
    dyn = PairDynamics(cfg.params, cfg.N, cfg.xi, cfg.side, cfg.debug)
    state = dyn.initial_state(cfg.mode, rng, cfg.init)
    if cfg.mode is Mode.LUMPED:
        return _run_lumped(dyn, state.t, cfg, rng, index)
    return _run_full(dyn, state, cfg, rng, index)


@dataclass
class TraceSummary:
    config: SamplerConfig
    support: np.ndarray
    counts: np.ndarray
    chains: list[ChainResult] = field(repr=False)

    @property
    def empirical(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def acceptance_fractions(self) -> list[float]:
        return [c.moves / c.steps for c in self.chains]

    @property
    def rejection_fractions(self) -> list[float]:
        return [c.rejected / c.steps for c in self.chains]

    def scaled_samples(self, center: float, scale_exponent: float) -> np.ndarray:
        N = self.config.N
        t = np.concatenate([c.trace for c in self.chains])
        return (t - N * center) / N**scale_exponent

    def summary(self, exact_dist: exact.ExactDistribution | None = None) -> dict:
        cfg = self.config
        out = {"N": cfg.N, "J": cfg.params.J, "h": cfg.params.h, "mode": cfg.mode.value, "steps": cfg.steps,
               "burn_in": cfg.burn_in, "thinning": cfg.thinning, "chains": cfg.chains, "seed": cfg.seed,
               "tv_vs_exact": tv_distance(self, exact_dist) if exact_dist is not None else None,
               "acceptance_fractions": self.acceptance_fractions}
        if cfg.xi is not None:
            out.update({"xi": cfg.xi, "side": cfg.side.value, "rejection_fractions": self.rejection_fractions})
        return out

    def write_traces(self, directory) -> list:
        paths = []
        for c in self.chains:
            name = "trace.csv" if len(self.chains) == 1 else f"trace_chain{c.index}.csv"
            start = self.config.burn_in
            rows = ((start + (k + 1) * self.config.thinning, int(t)) for k, t in enumerate(c.trace))
            paths.append(io.write_csv(f"{directory}/{name}", ["step", "t"], rows))
        return paths


def run(cfg: SamplerConfig) -> TraceSummary:
    """Run ``cfg.chains`` independent chains and merge them by chain index."""
    if cfg.workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_chain, [cfg] * cfg.chains, range(cfg.chains)))
    else:
        results = [_run_chain(cfg, i) for i in range(cfg.chains)]
    results.sort(key=lambda r: r.index)
    support = exact.admissible_counts(cfg.N)
    counts = np.sum([r.counts for r in results], axis=0)
    return TraceSummary(cfg, support, counts, results)


def conditional_run(cfg: SamplerConfig) -> TraceSummary:
    if cfg.xi is None:
        raise UsageError("conditional_run needs xi and side")
    return run(cfg)


def tv_distance(empirical, reference: exact.ExactDistribution) -> float:
    """Total variation ``sum |p_hat - pi| / 2`` over the admissible counts.

    ``empirical`` is a TraceSummary, an ExactDistribution, or a probability
    vector over ``admissible_counts(N)``.
    """
    N = reference.N
    full = exact.admissible_counts(N)
    ref = np.zeros(len(full))
    ref[np.searchsorted(full, reference.support)] = reference.probs
    if isinstance(empirical, TraceSummary):
        if empirical.config.N != N:
            raise UsageError("N mismatch")
        emp = empirical.empirical
    elif isinstance(empirical, exact.ExactDistribution):
        if empirical.N != N:
            raise UsageError("N mismatch")
        emp = np.zeros(len(full))
        emp[np.searchsorted(full, empirical.support)] = empirical.probs
    else:
        emp = np.asarray(empirical, dtype=float)
        if emp.shape != full.shape:
            raise ParityError("empirical vector does not match the admissible counts")
    return float(0.5 * np.abs(emp - ref).sum())


def transition_symmetry(trace: np.ndarray) -> tuple[float, int, float]:
    """Chi-square test that ``n(t -> t+2) == n(t+2 -> t)`` for every band.

    Returns ``(statistic, degrees_of_freedom, p_value)``.
    """
    trace = np.asarray(trace)
    a, b = trace[:-1], trace[1:]
    up = a[b == a + 2]
    down = b[a == b + 2]
    keys = np.union1d(up, down)
    n_up = np.array([np.sum(up == k) for k in keys], dtype=float)
    n_dn = np.array([np.sum(down == k) for k in keys], dtype=float)
    tot = n_up + n_dn
    mask = tot > 0
    stat = float(np.sum((n_up[mask] - n_dn[mask]) ** 2 / tot[mask]))
    df = int(mask.sum())
    return stat, df, float(stats.chi2.sf(stat, df)) if df else 1.0

