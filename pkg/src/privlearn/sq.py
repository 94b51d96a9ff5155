"""Statistical-query oracles, the SQ-learner protocol, and simulation of
transparent local randomizers by rejection sampling against an SQ oracle."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

import numpy as np


class AdaptiveStrategyError(RuntimeError):
    """A learner declared nonadaptive asked for answers before issuing all queries."""


@dataclass
class SQQuery:
    """Query ``g`` with range [-b, b] and tolerance ``tau``.

    ``g`` is vectorised: it receives the whole support (or a batch of entries)
    and returns one value per point. ``key`` names the query for traces and for
    adversarial sign patterns.
    """

    g: Callable[[Any], np.ndarray]
    tau: float
    b: float = 1.0
    key: Hashable = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tolerance must be positive, got {self.tau}")
        if not self.b > 0:
            raise ValueError(f"range bound must be positive, got {self.b}")

    def values(self, points) -> np.ndarray:
        v = np.asarray(self.g(points), dtype=float)
        if np.any(np.abs(v) > self.b * (1 + 1e-9)):
            raise ValueError(f"query {self.key!r} leaves its range [-{self.b}, {self.b}]")
        return v


class Discrete:
    """Finite distribution over arbitrary points (any indexable support)."""

    def __init__(self, support, weights):
        self.support = support
        self.weights = np.asarray(weights, dtype=float)
        if len(self.weights) != len(support):
            raise ValueError("support and weights lengths differ")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, support) -> "Discrete":
        return cls(support, np.full(len(support), 1.0 / len(support)))

    def __len__(self):
        return len(self.weights)

    def expectation(self, f: Callable[[Any], np.ndarray]) -> float:
        return float(self.weights @ np.asarray(f(self.support), dtype=float))

    def sample(self, n: int, rng: np.random.Generator):
        idx = np.minimum(np.searchsorted(np.cumsum(self.weights), rng.random(n), side="right"),
                         len(self.weights) - 1)
        return self.support[idx]


# -- oracles ----------------------------------------------------------------

@dataclass
class TraceRecord:
    query_id: int
    key: Hashable
    tau: float
    answer: float
    round: int


class SQOracle:
    """Base oracle: subclasses decide how far from the truth to answer."""

    variant = "base"

    def __init__(self):
        self.trace: list[TraceRecord] = []
        self.round = 0

    def _respond(self, dist, q: SQQuery, exact: float) -> float:
        raise NotImplementedError

    def answer(self, dist, q: SQQuery) -> float:
        exact = dist.expectation(q.values)
        v = self._respond(dist, q, exact)
        self.trace.append(TraceRecord(len(self.trace), q.key, q.tau, v, self.round))
        return v

    @property
    def queries(self) -> int:
        return len(self.trace)

    def export_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps({"query_id": rec.query_id, "key": repr(rec.key), "tau": rec.tau,
                                     "answer": rec.answer, "round": rec.round}) + "\n")


class ExactSQOracle(SQOracle):
    variant = "exact"
    deterministic = True

    def _respond(self, dist, q, exact):
        return exact


class AdversarialSQOracle(SQOracle):
    """Answers ``E[g] + sign(q) * tau``; ``sign`` maps a query to +1 or -1 (or a
    value in [-1, 1])."""

    variant = "adversarial"
    deterministic = True

    def __init__(self, sign: Callable[[SQQuery], float]):
        super().__init__()
        self.sign = sign

    def _respond(self, dist, q, exact):
        s = float(self.sign(q))
        if abs(s) > 1:
            raise ValueError(f"perturbation sign {s} outside [-1, 1]")
        return exact + s * q.tau


class SampledSQOracle(SQOracle):
    """Empirical mean over ``samples`` fresh draws; within tolerance only with
    high probability."""

    variant = "sampled"
    deterministic = False

    def __init__(self, samples: int, rng: np.random.Generator):
        super().__init__()
        self.samples = samples
        self.rng = rng

    def _respond(self, dist, q, exact):
        return float(np.mean(q.values(dist.sample(self.samples, self.rng))))


def sq_answer(oracle: SQOracle, dist, q: SQQuery) -> float:
    return oracle.answer(dist, q)


# -- SQ learners --------------------------------------------------------------
#
# An SQ learner exposes ``t`` (maximum number of queries) and ``run()``, a
# generator that yields one list of SQQuery per round, receives the list of
# answers, and returns its output. A nonadaptive learner yields exactly once.

@dataclass
class LearnerRun:
    output: Any
    rounds: int
    queries: int
    answers: list = field(default_factory=list)

    @property
    def adaptive(self) -> bool:
        return self.rounds > 1


def drive(learner, answer_round: Callable[[list[SQQuery], int], list[float]],
          nonadaptive: bool = False) -> LearnerRun:
    """Run ``learner`` answering each round with ``answer_round(queries, round)``."""
    gen = learner.run()
    rounds = queries = 0
    answers_log = []
    try:
        batch = next(gen)
        while True:
            if nonadaptive and rounds >= 1:
                raise AdaptiveStrategyError("learner issued queries after seeing answers")
            answers = answer_round(list(batch), rounds)
            rounds += 1
            queries += len(batch)
            answers_log.append(answers)
            batch = gen.send(answers)
    except StopIteration as stop:
        return LearnerRun(stop.value, rounds, queries, answers_log)


def run_with_oracle(learner, oracle: SQOracle, dist, nonadaptive: bool = False) -> LearnerRun:
    def answer_round(batch, r):
        oracle.round = r
        return [oracle.answer(dist, q) for q in batch]
    return drive(learner, answer_round, nonadaptive)


# -- SQ simulation of transparent local randomizers ---------------------------

@dataclass
class Simulated:
    output: Hashable
    iterations: int
    sq_queries: int


def _check_transparent(R) -> None:
    if not getattr(R, "transparent", False):
        raise ValueError("rejection simulation needs a transparent randomizer with finite outputs")


def rejection_params(t: int, beta: float, epsilon: float) -> tuple[float, float]:
    """(phi, tau) for simulating one of ``t`` randomizers at total error ``beta``."""
    phi = beta / (3 * t)
    if phi > 1 / 3:
        raise ValueError(f"phi = beta/(3t) = {phi} exceeds 1/3")
    return phi, beta / (3 * math.exp(2 * epsilon) * t)


def _normalised_query(prob_fn, ref_prob: float, epsilon: float, tau: float, key) -> SQQuery:
    spread = math.exp(epsilon) - math.exp(-epsilon)
    return SQQuery(lambda u: (prob_fn(u) - ref_prob) / (ref_prob * spread), tau, 1.0, key)


def _estimate(v: float, ref_prob: float, epsilon: float) -> float:
    return v * ref_prob * (math.exp(epsilon) - math.exp(-epsilon)) + ref_prob


def _accept_prob(p_tilde: float, q_w: float, phi: float, epsilon: float) -> float:
    acc = p_tilde / (q_w * (1 + phi) * math.exp(epsilon))
    if not -1e-12 <= acc <= 1 + 1e-12:
        raise AssertionError(f"acceptance probability {acc} outside [0, 1]")
    return min(max(acc, 0.0), 1.0)


def rejection_simulate(R, dist: Discrete, t: int, beta: float, sq: SQOracle,
                       rng: np.random.Generator, max_iterations: int = 1_000_000) -> Simulated:
    """Sample (approximately) from ``w ~ R(u), u ~ dist`` using only SQ access to ``dist``."""
    _check_transparent(R)
    eps = R.epsilon
    phi, tau = rejection_params(t, beta, eps)
    ref = R.reference
    start = sq.queries
    for it in range(1, max_iterations + 1):
        w = R.sample_output(ref, rng)
        q_w = R.prob(ref, w)
        query = _normalised_query(lambda u, w=w: R.prob_batch(u, w), q_w, eps, tau, ("reject", R.name, w))
        p_tilde = _estimate(sq.answer(dist, query), q_w, eps)
        if rng.random() < _accept_prob(p_tilde, q_w, phi, eps):
            return Simulated(w, it, sq.queries - start)
    raise RuntimeError("rejection sampling did not terminate")


def rejection_simulate_batch(R, dist: Discrete, t: int, beta: float, sq: SQOracle,
                             rng: np.random.Generator, runs: int) -> tuple[np.ndarray, np.ndarray]:
    """``runs`` independent copies of :func:`rejection_simulate`, vectorised.

    Only valid for deterministic oracles: the answer to the query for a given
    candidate ``w`` is then the same in every iteration, so it is asked once per
    distinct candidate. Returns (output indices into ``R.outputs``, iteration counts).
    """
    _check_transparent(R)
    if not getattr(sq, "deterministic", False):
        raise ValueError("batched rejection sampling needs a deterministic oracle")
    eps = R.epsilon
    phi, tau = rejection_params(t, beta, eps)
    ref_row = R.matrix[R.index_of(R.reference)]
    accept = np.empty(len(R.outputs))
    for k, w in enumerate(R.outputs):
        if ref_row[k] == 0:
            accept[k] = 0.0
            continue
        query = _normalised_query(lambda u, w=w: R.prob_batch(u, w), ref_row[k], eps, tau, ("reject", R.name, w))
        accept[k] = _accept_prob(_estimate(sq.answer(dist, query), ref_row[k], eps), ref_row[k], phi, eps)
    out = np.full(runs, -1, dtype=np.int64)
    iters = np.zeros(runs, dtype=np.int64)
    pending = np.arange(runs)
    cdf = np.cumsum(ref_row)
    while pending.size:
        iters[pending] += 1
        cand = np.minimum(np.searchsorted(cdf, rng.random(pending.size) * cdf[-1], side="right"),
                          len(cdf) - 1)
        ok = rng.random(pending.size) < accept[cand]
        out[pending[ok]] = cand[ok]
        pending = pending[~ok]
    return out, iters


@dataclass
class RejectionState:
    """Bookkeeping for simulating the randomizers applied to one entry."""

    epsilon: float  # total budget of the entry
    t: int
    beta: float
    history: list = field(default_factory=list)  # (randomizer, answer) pairs

    def __post_init__(self):
        if self.phi > 1 / 3:
            raise ValueError(f"phi = beta/(3t) = {self.phi} exceeds 1/3")

    @property
    def phi(self) -> float:
        return self.beta / (3 * self.t)

    @property
    def tau(self) -> float:
        return self.beta / (3 * math.exp(2 * self.epsilon) * self.t)

    @property
    def conditioned_tau(self) -> float:
        # ratio of two (1 +- tau') estimates is within (1 +- 3 tau'); tau' = phi/3
        # keeps the combined estimate inside (1 +- phi)
        return self.phi / (3 * math.exp(2 * self.epsilon))

    @property
    def spent(self) -> float:
        return sum(R.epsilon for R, _ in self.history)


def _history_prob(history, u) -> np.ndarray:
    out = None
    for R_j, a_j in history:
        p = R_j.prob_batch(u, a_j)
        out = p if out is None else out * p
    return out


def rejection_simulate_conditioned(state: RejectionState, R, dist: Discrete, sq: SQOracle,
                                   rng: np.random.Generator, max_iterations: int = 1_000_000) -> Simulated:
    """Simulate ``R`` on an entry conditioned on the answers already produced for
    it (``state.history``), then append the new answer to the history."""
    _check_transparent(R)
    if state.spent + R.epsilon > state.epsilon + 1e-12:
        raise ValueError(f"entry budget {state.epsilon} exceeded")
    if not state.history:
        sim = rejection_simulate(R, dist, state.t, state.beta, sq, rng, max_iterations)
        state.history.append((R, sim.output))
        return sim
    for R_j, _ in state.history:
        _check_transparent(R_j)
    eps = state.epsilon
    phi, tau = state.phi, state.conditioned_tau
    ref = R.reference
    ref_arr = _reference_batch(R)
    r2 = lambda u: _history_prob(state.history, u)
    r2_ref = float(r2(ref_arr)[0])
    if r2_ref <= 0:
        raise ValueError("history has probability zero at the reference input")
    start = sq.queries
    for it in range(1, max_iterations + 1):
        w = R.sample_output(ref, rng)
        q_w = R.prob(ref, w)
        r1 = lambda u, w=w: R.prob_batch(u, w) * r2(u)
        r1_ref = q_w * r2_ref
        g1 = _normalised_query(r1, r1_ref, eps, tau, ("joint", R.name, w, len(state.history)))
        g2 = _normalised_query(r2, r2_ref, eps, tau, ("history", len(state.history)))
        p1 = _estimate(sq.answer(dist, g1), r1_ref, eps)
        p2 = _estimate(sq.answer(dist, g2), r2_ref, eps)
        if rng.random() < _accept_prob(p1 / p2, q_w, phi, eps):
            state.history.append((R, w))
            return Simulated(w, it, sq.queries - start)
    raise RuntimeError("rejection sampling did not terminate")


def _reference_batch(R):
    ref = R.reference
    dom = R.inputs
    if isinstance(dom, np.ndarray):
        return np.asarray([ref], dtype=dom.dtype)
    return [ref]


@dataclass
class LocalRunResult:
    output: Any
    sq_queries: int
    iterations: int
    rounds: int
    nonadaptive: bool
    per_invocation: list = field(default_factory=list)


def simulate_local_algorithm(local_alg, dist: Discrete, beta: float, sq: SQOracle,
                             rng: np.random.Generator, epsilon: float | None = None) -> LocalRunResult:
    """Run a local algorithm against SQ access only.

    ``local_alg`` has ``t`` (number of randomizer invocations) and ``run()``, a
    generator yielding rounds of (index, randomizer) requests and receiving the
    list of outputs; ``epsilon`` defaults to ``local_alg.epsilon``, the per-entry
    budget. Each entry's randomizers are simulated conditioned on the
    outputs already simulated for that entry. SQ queries are tagged with the
    local round they serve, so a one-round (noninteractive) algorithm yields a
    single-round (nonadaptive) SQ trace.
    """
    t = local_alg.t
    if epsilon is None:
        epsilon = local_alg.epsilon
    states: dict[int, RejectionState] = {}
    gen = local_alg.run()
    rounds = 0
    iterations = 0
    start = sq.queries
    per = []
    try:
        batch = next(gen)
        while True:
            sq.round = rounds
            outs = []
            for index, R in batch:
                st = states.get(index)
                if st is None:
                    st = states[index] = RejectionState(epsilon, t, beta)
                sim = rejection_simulate_conditioned(st, R, dist, sq, rng)
                outs.append(sim.output)
                iterations += sim.iterations
                per.append(sim)
            rounds += 1
            batch = gen.send(outs)
    except StopIteration as stop:
        rounds_seen = {rec.round for rec in sq.trace[start:]}
        return LocalRunResult(stop.value, sq.queries - start, iterations, rounds,
                              nonadaptive=len(rounds_seen) <= 1, per_invocation=per)
