"""Private PARITY learners: the basic learner (subsample, solve, pick uniformly,
forced failure) and the amplified learner with noisy hold-out selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dp import laplace_sample
from .gf2 import AffineSubspace, BitVector, sample_uniform, solve_packed, subspace_size
from .learning import Database, Hypothesis, LabelConvention, parity, training_error


class _Bottom:
    """The failure output."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "⊥"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class ParityConfig:
    epsilon: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.5:
            raise ValueError(f"parity learner needs 0 < epsilon <= 1/2, got {self.epsilon}")

    @property
    def inclusion_prob(self) -> float:
        return self.epsilon / 4


@dataclass(frozen=True)
class AmplifiedConfig:
    """Parameters of the amplified learner. ``c`` and ``c_prime`` scale the
    training-slice and hold-out sizes."""

    d: int
    epsilon: float
    alpha: float
    beta: float
    c: float = 20.0
    c_prime: float = 48.0

    def __post_init__(self):
        ParityConfig(self.epsilon)
        if not 0 < self.alpha <= 0.5:
            raise ValueError(f"alpha must be in (0, 1/2], got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        if not (self.c > 0 and self.c_prime > 0):
            raise ValueError("constants c and c_prime must be positive")

    @property
    def beta_prime(self) -> float:
        return self.beta / 2

    @property
    def alpha_prime(self) -> float:
        return self.alpha / 5

    @property
    def k(self) -> int:
        # smallest k with (3/4)^k <= beta'
        return max(1, math.ceil(math.log(1 / self.beta_prime) / math.log(4 / 3) - 1e-12))

    @property
    def n_prime(self) -> int:
        return math.ceil(self.c * self.d / (self.epsilon * self.alpha_prime))

    @property
    def s(self) -> int:
        k = self.k
        return math.ceil(self.c_prime * k / (self.alpha_prime * self.epsilon) * math.log(k / self.beta_prime))

    @property
    def noise_scale(self) -> float:
        return self.k / (self.s * self.epsilon)

    def required_n(self) -> int:
        return self.k * self.n_prime + self.s + 1


def required_sample_size_amplified(d: int, epsilon: float, alpha: float, beta: float,
                                   c: float = 20.0, c_prime: float = 48.0) -> int:
    return AmplifiedConfig(d, epsilon, alpha, beta, c, c_prime).required_n()


def lemma_sample_size(d: int, epsilon: float, alpha: float) -> int:
    """Size at which one run of the basic learner succeeds with probability >= 1/4."""
    return math.ceil(8 / (epsilon * alpha) * (d * math.log(2) + math.log(4)))


@dataclass
class LearnOutcome:
    result: object  # Hypothesis or BOTTOM
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.result is BOTTOM


def _require_bits(z: Database) -> None:
    if z.convention is not LabelConvention.BIT:
        raise ValueError("parity learner expects {0,1} labels")


def solution_space(z: Database, subset) -> AffineSubspace:
    idx = np.asarray(list(subset) if not isinstance(subset, np.ndarray) else subset, dtype=np.int64)
    return solve_packed(z.d, z.x[idx].tolist(), z.y[idx].tolist())


def learn_once(z: Database, cfg: ParityConfig, rng: np.random.Generator) -> LearnOutcome:
    _require_bits(z)
    if rng.random() < 0.5:
        return LearnOutcome(BOTTOM, {"stage": "coin"})
    chosen = np.flatnonzero(rng.random(z.n) < cfg.inclusion_prob)
    space = solution_space(z, chosen)
    diag = {"stage": "solve", "subsample_size": len(chosen), "subspace_size": subspace_size(space)}
    if space.empty:
        return LearnOutcome(BOTTOM, diag)
    r = sample_uniform(space, rng)
    return LearnOutcome(Hypothesis.of(parity(r), "parity-A"), diag)


def conditional_output(z: Database, subset) -> dict:
    """Output distribution of step 4 for a fixed subsample: uniform over V_S, or ⊥."""
    space = solution_space(z, subset)
    if space.empty:
        return {BOTTOM: 1.0}
    mass = 1.0 / subspace_size(space)
    return {v: mass for v in space.members()}


def exact_output_distribution_A(z: Database, cfg: ParityConfig, limit: int = 12) -> dict:
    """Exact output law of the basic learner, by enumerating all subsamples.

    Keys are every parity vector ``r`` (BitVector) plus ``BOTTOM``.
    """
    _require_bits(z)
    if z.n > limit or z.d > 10:
        raise ValueError(f"instance too large for enumeration (n={z.n} > {limit} or d={z.d} > 10)")
    p = cfg.inclusion_prob
    dist = {BitVector(k, z.d): 0.0 for k in range(1 << z.d)}
    dist[BOTTOM] = 0.5
    for size in range(z.n + 1):
        weight = 0.5 * p ** size * (1 - p) ** (z.n - size)
        for subset in combinations(range(z.n), size):
            for out, mass in conditional_output(z, subset).items():
                dist[out] += weight * mass
    return dist


def learn_amplified(z: Database, cfg: AmplifiedConfig, rng: np.random.Generator) -> LearnOutcome:
    """Run the basic learner on k disjoint slices and keep the candidate with the
    smallest Laplace-perturbed hold-out error."""
    _require_bits(z)
    if z.d != cfg.d:
        raise ValueError(f"database dimension {z.d} != configured {cfg.d}")
    k, n1, s = cfg.k, cfg.n_prime, cfg.s
    if z.n <= k * n1 + s:
        raise InsufficientSamples(f"need more than {k * n1 + s} examples, got {z.n}")
    base = ParityConfig(cfg.epsilon)
    test = z[k * n1: k * n1 + s]
    candidates, noisy = [], np.full(k, np.inf)
    for j in range(k):
        out = learn_once(z[j * n1: (j + 1) * n1], base, rng)
        candidates.append(out.result)
        noise = laplace_sample(cfg.noise_scale, rng)
        if not out.failed:
            noisy[j] = training_error(out.result, test) + noise
    diag = {"k": k, "n_prime": n1, "s": s, "perturbed_errors": noisy.tolist(),
            "bottoms": sum(c is BOTTOM for c in candidates)}
    if np.all(np.isinf(noisy)):
        return LearnOutcome(BOTTOM, diag)
    j_star = int(np.argmin(noisy))  # first minimum on ties
    diag["selected"] = j_star
    return LearnOutcome(Hypothesis.of(candidates[j_star], "parity-A*"), diag)
