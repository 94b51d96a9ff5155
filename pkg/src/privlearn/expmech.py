"""Generic private agnostic learner built on the exponential mechanism."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .learning import Concept, Database, Hypothesis, distinct_labelings, restrict_to_domain


def score(z: Database, h: Concept) -> int:
    """Minus the number of examples ``h`` misclassifies."""
    if z.n == 0:
        return 0
    return -int(np.count_nonzero(h(z.x) != z.y))


@dataclass
class ExpMechInstance:
    hypotheses: Sequence[Concept]
    epsilon: float
    database: Database

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError("hypothesis list is empty")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")

    def scores(self) -> np.ndarray:
        return np.array([score(self.database, h) for h in self.hypotheses], dtype=float)


def output_distribution_from_scores(scores: np.ndarray, epsilon: float) -> np.ndarray:
    logits = 0.5 * epsilon * np.asarray(scores, dtype=float)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def exact_output_distribution(inst: ExpMechInstance) -> np.ndarray:
    """Probability of each hypothesis, proportional to exp(eps * score / 2)."""
    return output_distribution_from_scores(inst.scores(), inst.epsilon)


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, len(probs) - 1)


def sample(inst: ExpMechInstance, rng: np.random.Generator) -> Concept:
    return inst.hypotheses[sample_index(exact_output_distribution(inst), rng)]


def required_sample_size(h_size: int, epsilon: float, alpha: float, beta: float) -> int:
    """Examples sufficient for the agnostic guarantee (explicit constant 6)."""
    if not (0 < alpha < 0.5 and 0 < beta < 0.5):
        raise ValueError(f"alpha and beta must lie in (0, 1/2), got {alpha}, {beta}")
    if not epsilon > 0 or h_size < 1:
        raise ValueError(f"need epsilon > 0 and |H| >= 1, got {epsilon}, {h_size}")
    bound = 6 * (math.log(h_size) + math.log(1 / beta)) * max(1 / (epsilon * alpha), 1 / alpha ** 2)
    return math.ceil(bound)


def agnostic_learn(z: Database, hypotheses: Sequence[Concept], epsilon: float,
                   rng: np.random.Generator) -> Hypothesis:
    if not hypotheses:
        raise ValueError("hypothesis list is empty")
    h = sample(ExpMechInstance(hypotheses, epsilon, z), rng)
    return Hypothesis.of(h, "exponential-mechanism")


def labeling_hypotheses(concepts: Sequence[Concept], domain, d: int) -> list[Concept]:
    """One representative hypothesis per distinct labeling of a finite domain."""
    return [restrict_to_domain(lab, domain, d) for lab, _ in distinct_labelings(concepts, domain)]


def vc_learn(z: Database, concepts: Sequence[Concept], domain, epsilon: float,
             rng: np.random.Generator) -> Hypothesis:
    """Run the generic learner over the distinct labelings of ``domain``."""
    hyps = labeling_hypotheses(concepts, domain, z.d)
    return Hypothesis.of(sample(ExpMechInstance(hyps, epsilon, z), rng), "vc-labelings")
