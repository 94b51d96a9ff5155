"""MASKED-PARITY: concepts, the two-round adaptive SQ learner, Fourier pieces of
a query, the a-hiding adversarial oracle, and the nonadaptive separation
experiment.

Points are packed integers ``p = x | i << d | b << (d + log d)`` and labeled
examples append the label bit ``ybit`` (1 for y = -1) above the point bits.
Every query function receives an array of packed labeled examples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sq import Discrete, SQOracle, SQQuery, drive

MAX_D = 8


@dataclass(frozen=True)
class MaskedParityDomain:
    d: int

    def __post_init__(self):
        if self.d < 2 or self.d & (self.d - 1):
            raise ValueError(f"d must be a power of two >= 2, got {self.d}")

    @property
    def log_d(self) -> int:
        return self.d.bit_length() - 1

    @property
    def point_bits(self) -> int:
        return self.d + self.log_d + 1

    @property
    def size(self) -> int:
        return 1 << self.point_bits

    def points(self) -> np.ndarray:
        if self.d > MAX_D:
            raise ValueError(f"enumeration limited to d <= {MAX_D}, got {self.d}")
        return np.arange(self.size, dtype=np.int64)

    def pack(self, x, i, b, ybit=0):
        return (np.asarray(x, dtype=np.int64) | (np.asarray(i, dtype=np.int64) << self.d)
                | (np.asarray(b, dtype=np.int64) << (self.d + self.log_d))
                | (np.asarray(ybit, dtype=np.int64) << self.point_bits))

    def fields(self, z):
        """Split packed (labeled) examples into ``x, i, b, y`` with y in {+1,-1}."""
        z = np.asarray(z, dtype=np.int64)
        x = z & ((1 << self.d) - 1)
        i = (z >> self.d) & (self.d - 1)
        b = (z >> (self.d + self.log_d)) & 1
        y = 1 - 2 * ((z >> self.point_bits) & 1)
        return x, i, b, y

    def point_of(self, z):
        return np.asarray(z, dtype=np.int64) & (self.size - 1)


def _parity(r: int, x) -> np.ndarray:
    return (np.bitwise_count(np.asarray(x, dtype=np.uint64) & np.uint64(r)) & 1).astype(np.int64)


@dataclass(frozen=True)
class MaskedParityConcept:
    d: int
    r: int
    a: int

    def __post_init__(self):
        if not 0 <= self.r < (1 << self.d) or self.a not in (0, 1):
            raise ValueError(f"invalid concept r={self.r}, a={self.a} for d={self.d}")

    def bit(self, j: int) -> int:
        return (self.r >> j) & 1

    def __call__(self, dom: MaskedParityDomain, p) -> np.ndarray:
        return evaluate(self, dom, p)

    def __str__(self):
        return f"c[r={self.r:0{self.d}b}, a={self.a}]"


def evaluate(c: MaskedParityConcept, dom: MaskedParityDomain, p) -> np.ndarray:
    """+-1 labels of packed points ``p``."""
    x, i, b, _ = dom.fields(dom.point_of(p))
    e0 = _parity(c.r, x) ^ c.a
    e1 = (c.r >> i) & 1
    return np.where(b == 0, 1 - 2 * e0, 1 - 2 * e1).astype(np.int8)


def all_concepts(d: int) -> list[MaskedParityConcept]:
    return [MaskedParityConcept(d, r, a) for r in range(1 << d) for a in (0, 1)]


def labeled_distribution(c: MaskedParityConcept, dom: MaskedParityDomain) -> Discrete:
    """Uniform distribution over the domain, labeled by ``c``."""
    p = dom.points()
    ybit = (evaluate(c, dom, p) < 0).astype(np.int64)
    return Discrete.uniform(p | (ybit << dom.point_bits))


def sample_database(c: MaskedParityConcept, dom: MaskedParityDomain, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    p = rng.integers(0, dom.size, size=n, dtype=np.int64)
    ybit = (evaluate(c, dom, p) < 0).astype(np.int64)
    return p | (ybit << dom.point_bits)


def concept_error(h: MaskedParityConcept, c: MaskedParityConcept) -> float:
    """err(h, c) under the uniform distribution, in closed form."""
    if h.r == c.r:
        half0 = float(h.a != c.a)
    else:
        half0 = 0.5
    half1 = (h.r ^ c.r).bit_count() / h.d
    return 0.5 * half0 + 0.5 * half1


def table_error(h: np.ndarray, c: MaskedParityConcept, dom: MaskedParityDomain) -> float:
    return float(np.mean(np.asarray(h) != evaluate(c, dom, dom.points())))


# -- the adaptive learner -----------------------------------------------------

def round1_query(dom: MaskedParityDomain, j: int, tau: float | None = None) -> SQQuery:
    """g_j = [i = j and b = 1 and y = -1]."""
    def g(z):
        _, i, b, y = dom.fields(z)
        return ((i == j) & (b == 1) & (y == -1)).astype(float)
    return SQQuery(g, tau if tau is not None else 1 / (4 * dom.d + 1), key=("g", j))


def round2_query(dom: MaskedParityDomain, r_hat: int, tau: float = 0.2) -> SQQuery:
    """g_{d+1} = [b = 0 and y != (-1)^(r_hat . x)]."""
    def g(z):
        x, _, b, y = dom.fields(z)
        return ((b == 0) & (y != 1 - 2 * _parity(r_hat, x))).astype(float)
    return SQQuery(g, tau, key=("mask", r_hat))


class AdaptiveMaskedParityLearner:
    """Two rounds, d + 1 queries: read r off the b=1 half, then a off the b=0 half."""

    def __init__(self, d: int, tau1: float | None = None, tau2: float = 0.2):
        self.dom = MaskedParityDomain(d)
        self.tau1 = tau1 if tau1 is not None else 1 / (4 * d + 1)
        self.tau2 = tau2

    @property
    def t(self) -> int:
        return self.dom.d + 1

    def run(self):
        d = self.dom.d
        answers = yield [round1_query(self.dom, j, self.tau1) for j in range(d)]
        r_hat = sum(1 << j for j, v in enumerate(answers) if v > 1 / (4 * d))
        (v,) = yield [round2_query(self.dom, r_hat, self.tau2)]
        return MaskedParityConcept(d, r_hat, int(v > 0.25))


# -- Fourier pieces -----------------------------------------------------------

def query_table(g: Callable | SQQuery, dom: MaskedParityDomain) -> np.ndarray:
    """Values of ``g`` at every point, column 0 for y=+1 and column 1 for y=-1."""
    fn = g.values if isinstance(g, SQQuery) else g
    p = dom.points()
    return np.stack([np.asarray(fn(p), dtype=float),
                     np.asarray(fn(p | (1 << dom.point_bits)), dtype=float)], axis=1)


@dataclass
class FourierPieces:
    C_g: float
    f: np.ndarray
    f0: np.ndarray
    f1: np.ndarray


def fourier_decompose(g, dom: MaskedParityDomain) -> FourierPieces:
    """Split E[g(., c(.))] = C_g + <f_g, c> into label-free and label-dependent parts."""
    table = g if isinstance(g, np.ndarray) else query_table(g, dom)
    f = (table[:, 0] - table[:, 1]) / 2
    C = 0.5 * float(np.mean(table[:, 0] + table[:, 1]))
    b = dom.fields(dom.points())[2]
    return FourierPieces(C, f, np.where(b == 0, f, 0.0), np.where(b == 1, f, 0.0))


def inner_product_uniform(f: np.ndarray, h: np.ndarray) -> float:
    return float(np.mean(np.asarray(f, dtype=float) * np.asarray(h, dtype=float)))


def concept_half(c: MaskedParityConcept, dom: MaskedParityDomain, s: int) -> np.ndarray:
    """c^s: the concept on the b=s half, zero elsewhere."""
    p = dom.points()
    b = dom.fields(p)[2]
    return np.where(b == s, evaluate(c, dom, p), 0).astype(float)


def true_expectation(table: np.ndarray, c: MaskedParityConcept, dom: MaskedParityDomain) -> float:
    ybit = (evaluate(c, dom, dom.points()) < 0).astype(np.int64)
    return float(np.mean(table[np.arange(len(ybit)), ybit]))


def _hadamard(d: int) -> np.ndarray:
    k = np.arange(1 << d, dtype=np.uint64)
    return 1 - 2 * (np.bitwise_count(k[:, None] & k[None, :]) & 1).astype(np.int64)


@dataclass
class QuerySpectrum:
    """Everything the adversarial oracle needs about one query, for every concept:
    ``ip0[r] = <f^0, c^0_{r,0}>`` (a=1 flips the sign) and ``ip1[r] = <f^1, c^1_r>``."""

    C_g: float
    ip0: np.ndarray
    ip1: np.ndarray

    def expectation(self, r, a):
        return self.C_g + (1 - 2 * np.asarray(a)) * self.ip0[r] + self.ip1[r]


def query_spectrum(g, dom: MaskedParityDomain) -> QuerySpectrum:
    pieces = fourier_decompose(g, dom)
    d, N = dom.d, dom.size
    half = 1 << (d + dom.log_d)
    # f^0 summed over i at each x, then transformed over x
    F0 = pieces.f[:half].reshape(d, 1 << d).sum(axis=0)
    ip0 = _hadamard(d) @ F0 / N
    # f^1 summed over x at each i; c^1_r(x,i,1) = (-1)^{r_i}
    H1 = pieces.f[half:].reshape(d, 1 << d).sum(axis=1)
    r = np.arange(1 << d)
    signs = 1 - 2 * ((r[:, None] >> np.arange(d)[None, :]) & 1)
    ip1 = signs @ H1 / N
    return QuerySpectrum(pieces.C_g, ip0, ip1)


def parseval_sum(g, dom: MaskedParityDomain) -> float:
    """sum over (r, a) of 2 <f^0_g, c^0_{r,a}>^2 (at most 1)."""
    spec = g if isinstance(g, QuerySpectrum) else query_spectrum(g, dom)
    return float(4 * np.sum(spec.ip0 ** 2))


def parseval_check(g, dom: MaskedParityDomain) -> float:
    """Slack ``1 - sum``; negative means the bound is violated."""
    return 1.0 - parseval_sum(g, dom)


def bad_concept_fraction(g, dom: MaskedParityDomain, threshold: float | None = None) -> float:
    """Fraction of concepts with |<f^0_g, c^0_{r,a}>| >= threshold (default 2^{-d/3})."""
    spec = g if isinstance(g, QuerySpectrum) else query_spectrum(g, dom)
    thr = 2 ** (-dom.d / 3) if threshold is None else threshold
    return float(np.mean(np.abs(spec.ip0) >= thr))


# -- the adversarial oracle ---------------------------------------------------

MASKED, TRUTHFUL = "masked", "truthful"


def adversarial_oracle_answer(c: MaskedParityConcept, g, tau: float, dom: MaskedParityDomain):
    """Answer ``(v, branch)``. When the a-dependent term is below ``tau`` it is
    dropped, so the answer does not depend on a."""
    pieces = fourier_decompose(g, dom)
    ip0 = inner_product_uniform(pieces.f0, concept_half(c, dom, 0))
    ip1 = inner_product_uniform(pieces.f1, concept_half(c, dom, 1))
    exact = pieces.C_g + ip0 + ip1
    if abs(ip0) < tau:
        return pieces.C_g + ip1, MASKED
    return exact, TRUTHFUL


class MaskingOracle(SQOracle):
    """SQ oracle over the uniform distribution labeled by a hidden concept that
    hides the mask bit whenever it can. Branches are recorded per query."""

    variant = "masking"
    deterministic = True

    def __init__(self, concept: MaskedParityConcept, dom: MaskedParityDomain | None = None):
        super().__init__()
        self.concept = concept
        self.dom = dom or MaskedParityDomain(concept.d)
        self.branches: list[str] = []

    def _respond(self, dist, q, exact):
        v, branch = adversarial_oracle_answer(self.concept, q, q.tau, self.dom)
        assert abs(v - exact) <= q.tau + 1e-12, "masking oracle left its tolerance"
        self.branches.append(branch)
        return v

    @property
    def good(self) -> bool:
        return all(b == MASKED for b in self.branches)


def learn_with_oracle(learner, oracle: SQOracle, c: MaskedParityConcept):
    dist = labeled_distribution(c, MaskedParityDomain(c.d))

    def answer_round(batch, r):
        oracle.round = r
        return [oracle.answer(dist, q) for q in batch]
    return drive(learner, answer_round)


# -- nonadaptive strategies ---------------------------------------------------

class NonadaptiveStrategy:
    """Fixed query list plus a hypothesis rule applied to the answers."""

    name = "strategy"

    def __init__(self, d: int):
        self.dom = MaskedParityDomain(d)
        self.queries: list[SQQuery] = []

    @property
    def t(self) -> int:
        return len(self.queries)

    def hypothesis(self, answers: Sequence[float]) -> MaskedParityConcept:
        raise NotImplementedError

    def run(self):
        answers = yield list(self.queries)
        return self.hypothesis(answers)


class RandomBattery(NonadaptiveStrategy):
    """t random +-1 queries; output the concept whose exact answers fit best."""

    name = "random-battery"

    def __init__(self, d: int, t: int, tau: float, rng: np.random.Generator):
        super().__init__(d)
        self.tables = []
        for j in range(t):
            table = rng.choice([-1.0, 1.0], size=(self.dom.size, 2))
            self.tables.append(table)
            self.queries.append(_table_query(self.dom, table, tau, ("random", j)))
        specs = [query_spectrum(tb, self.dom) for tb in self.tables]
        r = np.repeat(np.arange(1 << d), 2)
        a = np.tile([0, 1], 1 << d)
        self._pred = np.stack([s.expectation(r, a) for s in specs], axis=1) if specs else None
        self._r, self._a = r, a

    def hypothesis(self, answers):
        if self._pred is None:
            return MaskedParityConcept(self.dom.d, 0, 0)
        k = int(np.argmin(np.max(np.abs(self._pred - np.asarray(answers)), axis=1)))
        return MaskedParityConcept(self.dom.d, int(self._r[k]), int(self._a[k]))


class RoundOneGuess(NonadaptiveStrategy):
    """Round 1 of the adaptive learner, then a fixed guess for the mask bit."""

    name = "round-one-guess"

    def __init__(self, d: int, tau: float, guess: int = 0):
        super().__init__(d)
        self.guess = guess
        self.queries = [round1_query(self.dom, j, tau) for j in range(d)]

    def hypothesis(self, answers):
        d = self.dom.d
        r_hat = sum(1 << j for j, v in enumerate(answers[:d]) if v > 1 / (4 * d))
        return MaskedParityConcept(d, r_hat, self.guess)


class MajorityVote(RoundOneGuess):
    """Round 1 plus fixed correlation queries y(-1)^{s.x} on the b=0 half; the
    mask is the majority sign among those answers."""

    name = "majority-vote"

    def __init__(self, d: int, t: int, tau: float, rng: np.random.Generator):
        super().__init__(d, tau)
        dom = self.dom
        for j in range(max(0, t - d)):
            s = int(rng.integers(0, 1 << d))

            def g(z, s=s):
                x, _, b, y = dom.fields(z)
                return np.where(b == 0, y * (1 - 2 * _parity(s, x)), 0).astype(float)
            self.queries.append(SQQuery(g, tau, key=("corr", s, j)))

    def hypothesis(self, answers):
        base = super().hypothesis(answers)
        extra = np.asarray(answers[self.dom.d:], dtype=float)
        votes = int(np.sum(extra < 0)) - int(np.sum(extra > 0))
        return MaskedParityConcept(base.d, base.r, int(votes > 0))


def _table_query(dom, table, tau, key) -> SQQuery:
    def g(z):
        z = np.asarray(z, dtype=np.int64)
        return table[dom.point_of(z), (z >> dom.point_bits) & 1]
    return SQQuery(g, tau, key=key)


# -- separation experiment ----------------------------------------------------

@dataclass
class SeparationTrial:
    trial: int
    r: int
    a: int
    err: float
    good_event: bool
    adaptive_err: float | None = None


@dataclass
class SeparationResult:
    d: int
    t: int
    trials: list = field(default_factory=list)

    @property
    def good_rate(self) -> float:
        return float(np.mean([tr.good_event for tr in self.trials]))

    @property
    def failure_rate(self) -> float:
        """Empirical Pr[err >= 1/4]."""
        return float(np.mean([tr.err >= 0.25 for tr in self.trials]))

    @property
    def failure_rate_given_good(self) -> float:
        sel = [tr.err >= 0.25 for tr in self.trials if tr.good_event]
        return float(np.mean(sel)) if sel else float("nan")

    @property
    def good_bound(self) -> float:
        return 1 - self.t / 2 ** (self.d / 3 + 2)

    @property
    def failure_bound(self) -> float:
        return 0.5 * self.good_bound

    def rows(self):
        for tr in self.trials:
            yield {"trial": tr.trial, "r": format(tr.r, f"0{self.d}b"), "a": tr.a,
                   "err": tr.err, "good_event": int(tr.good_event)}


def separation_experiment(strategy: NonadaptiveStrategy, trials: int, rng: np.random.Generator,
                          adaptive: bool = False) -> SeparationResult:
    """Draw concepts uniformly, answer the strategy's fixed queries with the masking
    oracle, and score its hypothesis. With ``adaptive`` the two-round learner is
    also run against the same oracle on each concept."""
    dom = strategy.dom
    d = dom.d
    floor = 2 ** (-d / 3)
    for q in strategy.queries:
        if q.tau < floor - 1e-15:
            raise ValueError(f"query {q.key!r} has tolerance {q.tau} below 2^(-d/3) = {floor}")
    specs = [query_spectrum(q, dom) for q in strategy.queries]
    taus = np.array([q.tau for q in strategy.queries])
    result = SeparationResult(d, strategy.t)
    amp = AdaptiveMaskedParityLearner(d) if adaptive else None
    for k in range(trials):
        r = int(rng.integers(0, 1 << d))
        a = int(rng.integers(0, 2))
        c = MaskedParityConcept(d, r, a)
        masked = [abs(s.ip0[r]) < tau for s, tau in zip(specs, taus)]

        def answer_round(batch, rnd):
            out = []
            for s, m in zip(specs, masked):
                out.append(s.C_g + s.ip1[r] if m else float(s.expectation(r, a)))
            return out
        h = drive(strategy, answer_round, nonadaptive=True).output
        trial = SeparationTrial(k, r, a, concept_error(h, c), all(masked))
        if amp is not None:
            trial.adaptive_err = concept_error(learn_with_oracle(amp, MaskingOracle(c, dom), c).output, c)
        result.trials.append(trial)
    return result
