"""Differential-privacy primitives: Laplace noise, composition, budget ledgers,
exact and Monte-Carlo privacy-ratio checks, and tail bounds used as test oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np


class BudgetExceeded(RuntimeError):
    pass


def _check_scale(scale: float) -> None:
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")


def laplace_sample(scale: float, rng: np.random.Generator, size=None):
    """Draw from Lap(scale) by inverting the CDF at one uniform per sample."""
    _check_scale(scale)
    u = rng.random(size) - 0.5
    # rng.random() == 0 gives |u| == 0.5 and log(0); nudge it inward
    mag = np.minimum(np.abs(u), np.nextafter(0.5, 0.0))
    x = -scale * np.sign(u) * np.log1p(-2.0 * mag)
    return float(x) if size is None else x


def laplace_cdf(x, scale: float):
    _check_scale(scale)
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / scale), 1.0 - 0.5 * np.exp(-x / scale))


def laplace_interval_probs(center: float, scale: float, edges: Sequence[float]) -> np.ndarray:
    """Probability mass of ``center + Lap(scale)`` in each cell of a partition of the line.

    ``edges`` are the interior cut points; the outer cells are unbounded.
    """
    cdf = laplace_cdf(np.asarray(edges, dtype=float) - center, scale)
    return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


def laplace_mechanism(value: float, global_sensitivity: float, epsilon: float,
                      rng: np.random.Generator) -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if global_sensitivity < 0:
        raise ValueError(f"global sensitivity must be nonnegative, got {global_sensitivity}")
    if global_sensitivity == 0:
        return value
    return value + laplace_sample(global_sensitivity / epsilon, rng)


def compose(budgets: Iterable[float]) -> float:
    """Basic sequential composition."""
    total = 0.0
    for eps in budgets:
        if not eps > 0:
            raise ValueError(f"budgets must be positive, got {eps}")
        total += eps
    return total


class BudgetLedger:
    """Per-index accumulated epsilon with a hard cap.

    Mutation is not thread safe; guard a shared ledger externally.
    """

    def __init__(self, size: int, cap: float, slack: float = 1e-12):
        if not cap > 0:
            raise ValueError(f"cap must be positive, got {cap}")
        self.cap = float(cap)
        self.slack = slack
        self.spent = np.zeros(size, dtype=float)

    def __len__(self):
        return len(self.spent)

    def remaining(self, index: int) -> float:
        return self.cap - self.spent[index]

    def charge(self, indices, epsilon: float) -> None:
        """Charge ``epsilon`` to every index in ``indices``; all-or-nothing."""
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.spent)):
            raise IndexError(f"index out of range [0, {len(self.spent)})")
        if len(np.unique(idx)) != len(idx):
            counts = np.bincount(idx, minlength=len(self.spent))[idx]
        else:
            counts = 1
        after = self.spent[idx] + counts * epsilon
        if np.any(after > self.cap + self.slack):
            worst = int(idx[np.argmax(after)])
            raise BudgetExceeded(
                f"index {worst}: spent {self.spent[worst]:.6g} + {epsilon:.6g} exceeds cap {self.cap:.6g}")
        np.add.at(self.spent, idx, epsilon)


@dataclass
class PrivacyRatio:
    ratio: float
    mode: str
    trials: int = 0
    inconclusive: bool = False
    worst_outcome: Hashable = None
    note: str = ""

    @property
    def epsilon(self) -> float:
        return math.log(self.ratio) if self.ratio > 0 else float("nan")


def max_ratio(p: Mapping[Hashable, float], q: Mapping[Hashable, float]) -> tuple[float, Hashable]:
    """Symmetric max over outcomes of p/q and q/p. Zero against nonzero is infinite."""
    if set(p) != set(q):
        raise ValueError("outcome spaces differ between neighbours")
    worst, arg = 1.0, None
    for w in p:
        a, b = p[w], q[w]
        if a == 0 and b == 0:
            continue
        r = math.inf if min(a, b) == 0 else max(a / b, b / a)
        if r > worst:
            worst, arg = r, w
    return worst, arg


def empirical_privacy_ratio(mechanism: Callable, z, z_prime, mode: str = "exact", *,
                            outcomes: Sequence[Hashable] | None = None, trials: int = 10_000,
                            rng: np.random.Generator | None = None,
                            min_count: int = 25) -> PrivacyRatio:
    """Largest outcome-probability ratio of ``mechanism`` between two neighbours.

    In exact mode ``mechanism(db)`` returns a mapping outcome -> probability.
    In Monte-Carlo mode ``mechanism(db, rng)`` draws one outcome, which must lie
    in ``outcomes``; frequencies are add-one smoothed and the estimate is marked
    inconclusive when any count falls below ``min_count``.
    """
    if mode == "exact":
        ratio, arg = max_ratio(mechanism(z), mechanism(z_prime))
        return PrivacyRatio(ratio, "exact", worst_outcome=arg)
    if mode != "montecarlo":
        raise ValueError(f"unknown mode {mode!r}")
    if outcomes is None or rng is None:
        raise ValueError("Monte-Carlo mode needs outcomes and rng")
    pos = {w: k for k, w in enumerate(outcomes)}
    counts = np.zeros((2, len(outcomes)), dtype=np.int64)
    for row, db in enumerate((z, z_prime)):
        for _ in range(trials):
            w = mechanism(db, rng)
            if w not in pos:
                raise ValueError(f"outcome {w!r} outside the declared outcome space")
            counts[row, pos[w]] += 1
    smoothed = (counts + 1) / (trials + len(outcomes))
    ratio, arg = max_ratio(dict(zip(outcomes, smoothed[0])), dict(zip(outcomes, smoothed[1])))
    low = int(counts.min())
    return PrivacyRatio(ratio, "montecarlo", trials=trials, inconclusive=low < min_count,
                        worst_outcome=arg,
                        note=f"{trials} trials per database, add-one smoothing, min count {low}")


def bound_chernoff_mult(n: int, mu: float, phi: float) -> tuple[float, float]:
    """Upper- and lower-tail multiplicative Chernoff bounds for a Bernoulli(mu) mean."""
    if not 0 < phi <= 1:
        raise ValueError(f"phi must be in (0, 1], got {phi}")
    if not 0 < mu < 1:
        raise ValueError(f"mu must be in (0, 1), got {mu}")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    return math.exp(-phi * phi * mu * n / 3), math.exp(-phi * phi * mu * n / 2)


def bound_hoeffding(n: int, delta: float, a: float, b: float) -> float:
    """Two-sided additive Hoeffding bound, clamped to 1."""
    if not b > a:
        raise ValueError(f"need b > a, got a={a}, b={b}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    return min(1.0, 2 * math.exp(-2 * delta * delta * n / (b - a) ** 2))


def bound_laplace_sum(n: int, delta: float, scale: float) -> float:
    """Tail bound ``exp(-delta^2 n / (4 scale^2))`` on the mean of ``n`` Lap(scale) draws.

    The derivation only covers the regime delta < 1 < scale; the formula is
    returned as is elsewhere.
    """
    if delta < 0 or not scale > 0 or n < 0:
        raise ValueError(f"invalid parameters n={n}, delta={delta}, scale={scale}")
    return min(1.0, math.exp(-delta * delta * n / (4 * scale * scale)))
