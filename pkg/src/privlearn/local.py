"""Local model: epsilon-local randomizers, the LR oracle with per-entry budget
accounting, query plans, and local simulation of SQ algorithms."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .dp import BudgetLedger, laplace_sample
from .sq import SQQuery, drive

REAL = "real"
_ids = itertools.count()


class Randomizer:
    """An epsilon-local randomizer.

    Finite-output randomizers must be transparent: ``transition_prob(u, w)`` gives
    ``Pr[R(u) = w]`` exactly. Construction checks every row sums to one and every
    column ratio is at most ``e^epsilon``. Real-valued randomizers pass
    ``outputs=REAL`` with an ``apply_batch`` function instead.
    """

    def __init__(self, inputs, outputs, epsilon: float, transition_prob=None,
                 apply_batch: Callable | None = None, name: str | None = None, reference=None):
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self.inputs = inputs
        self.outputs = outputs
        self.name = name or f"R{next(_ids)}"
        self._apply_batch = apply_batch
        self.matrix = None
        if outputs is REAL:
            if apply_batch is None:
                raise ValueError("real-valued randomizer needs apply_batch")
        else:
            if transition_prob is None:
                raise ValueError("finite-output randomizers must supply transition_prob")
            self.outputs = list(outputs)
            self._in_pos = {u: k for k, u in enumerate(inputs)}
            self._out_pos = {w: k for k, w in enumerate(self.outputs)}
            self.matrix = np.array([[transition_prob(u, w) for w in self.outputs] for u in inputs], dtype=float)
            self._cdf = np.cumsum(self.matrix, axis=1)
            self._validate()
        if reference is None and inputs is not None and len(inputs):
            reference = inputs[0]
        self.reference = reference

    def _validate(self) -> None:
        m = self.matrix
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1) > 1e-9):
            raise ValueError(f"{self.name}: transition rows must be distributions")
        hi, lo = m.max(axis=0), m.min(axis=0)
        bound = math.exp(self.epsilon) * (1 + 1e-12)
        bad = (hi > 0) & ((lo == 0) | (hi > bound * lo))
        if np.any(bad):
            w = self.outputs[int(np.argmax(bad))]
            raise ValueError(f"{self.name}: not {self.epsilon}-private at output {w!r}")

    @property
    def transparent(self) -> bool:
        return self.matrix is not None

    def __repr__(self):
        return f"Randomizer({self.name}, eps={self.epsilon})"

    def index_of(self, u) -> int:
        return self._in_pos[u.item() if isinstance(u, np.generic) else u]

    def prob(self, u, w) -> float:
        return float(self.matrix[self.index_of(u), self._out_pos[w]])

    def prob_batch(self, us, w) -> np.ndarray:
        """``Pr[R(u) = w]`` for every ``u`` in ``us``."""
        col = self.matrix[:, self._out_pos[w]]
        return col[self._indices(us)]

    def _indices(self, us) -> np.ndarray:
        return np.fromiter((self.index_of(u) for u in us), dtype=np.int64, count=len(us))

    def sample_output(self, u, rng: np.random.Generator):
        row = self._cdf[self.index_of(u)]
        k = min(int(np.searchsorted(row, rng.random() * row[-1], side="right")), len(row) - 1)
        return self.outputs[k]

    def apply_batch(self, entries, rng: np.random.Generator):
        if self._apply_batch is not None:
            return self._apply_batch(entries, rng)
        cdf = self._cdf[self._indices(entries)]
        k = (cdf < rng.random(len(entries))[:, None] * cdf[:, -1:]).sum(axis=1)
        k = np.minimum(k, len(self.outputs) - 1)
        return [self.outputs[j] for j in k]

    def apply(self, u, rng: np.random.Generator):
        if self._apply_batch is not None:
            return self._apply_batch([u], rng)[0]
        return self.sample_output(u, rng)


def randomized_response(epsilon: float, domain: Sequence = (0, 1), name: str | None = None) -> Randomizer:
    """k-ary randomized response: keep the input with probability e^eps/(e^eps+k-1)."""
    k = len(domain)
    keep = math.exp(epsilon) / (math.exp(epsilon) + k - 1)
    other = (1 - keep) / (k - 1)
    return Randomizer(list(domain), list(domain), epsilon,
                      lambda u, w: keep if u == w else other, name=name or f"rr{k}")


def warner_response(truth_prob: float = 2 / 3) -> Randomizer:
    """Binary response telling the truth with probability ``truth_prob`` (> 1/2)."""
    eps = math.log(truth_prob / (1 - truth_prob))
    return Randomizer([0, 1], [0, 1], eps,
                      lambda u, w: truth_prob if u == w else 1 - truth_prob, name="warner")


def laplace_query_randomizer(g: Callable, b: float, epsilon: float, name: str | None = None) -> Randomizer:
    """``R(u) = g(u) + Lap(2b/epsilon)`` for ``g`` with range [-b, b]."""
    if not b > 0 or not epsilon > 0:
        raise ValueError(f"need b > 0 and epsilon > 0, got b={b}, epsilon={epsilon}")
    scale = 2 * b / epsilon

    def apply_batch(entries, rng):
        vals = np.asarray(g(entries), dtype=float)
        if np.any(np.abs(vals) > b * (1 + 1e-9)):
            raise ValueError(f"query value outside [-{b}, {b}]")
        return vals + laplace_sample(scale, rng, size=vals.shape)

    R = Randomizer(None, REAL, epsilon, apply_batch=apply_batch, name=name or "laplace-query")
    R.scale = scale
    R.b = b
    return R


# -- LR oracle ----------------------------------------------------------------

class LROracle:
    """Applies randomizers to indexed database entries, enforcing a per-entry cap.

    ``entries`` is anything supporting ``len`` and numpy-style fancy indexing
    (a numpy array, a Database, ...). Access must be serialised.
    """

    def __init__(self, entries, cap: float, record: bool = True):
        self.entries = entries
        self.ledger = BudgetLedger(len(entries), cap)
        self.record = record
        self._trace: list[tuple] = []

    @property
    def n(self) -> int:
        return len(self.ledger)

    @property
    def cap(self) -> float:
        return self.ledger.cap

    def invoke_batch(self, indices, R: Randomizer, rng: np.random.Generator):
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"index out of range [0, {self.n})")
        self.ledger.charge(idx, R.epsilon)
        out = R.apply_batch(self.entries[idx], rng)
        if self.record:
            self._trace.append((idx, R.name, R.epsilon, out))
        return out

    def invoke(self, i: int, R: Randomizer, rng: np.random.Generator):
        return self.invoke_batch([i], R, rng)[0]

    def trace(self):
        for idx, name, eps, out in self._trace:
            for i, w in zip(idx, out):
                yield {"index": int(i), "randomizer": name, "epsilon": eps,
                       "output": w.item() if isinstance(w, np.generic) else w}

    def export_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace():
                fh.write(json.dumps(rec) + "\n")


class QueryPlan:
    """Sequence of LR requests.

    A noninteractive plan collects every request first and runs them in one
    shot; once executed it cannot grow. An interactive plan answers each request
    as it is asked.
    """

    def __init__(self, mode: str = "noninteractive"):
        if mode not in ("noninteractive", "interactive"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.requests: list[tuple[np.ndarray, Randomizer]] = []
        self.executed = False

    def add(self, indices, R: Randomizer) -> "QueryPlan":
        if self.mode != "noninteractive":
            raise RuntimeError("interactive plans answer requests immediately; use ask()")
        if self.executed:
            raise RuntimeError("noninteractive plan already executed")
        self.requests.append((np.atleast_1d(np.asarray(indices, dtype=np.int64)), R))
        return self

    def execute(self, oracle: LROracle, rng: np.random.Generator) -> list:
        if self.mode != "noninteractive":
            raise RuntimeError("execute() is for noninteractive plans")
        if self.executed:
            raise RuntimeError("noninteractive plan already executed")
        self.executed = True
        return [oracle.invoke_batch(idx, R, rng) for idx, R in self.requests]

    def ask(self, oracle: LROracle, indices, R: Randomizer, rng: np.random.Generator):
        if self.mode != "interactive":
            raise RuntimeError("noninteractive plans cannot answer before execute()")
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        self.requests.append((idx, R))
        return oracle.invoke_batch(idx, R, rng)


# -- SQ queries answered by local algorithms ---------------------------------

def sq_sample_size(tau: float, beta: float, epsilon: float, b: float = 1.0, c: float = 32.0) -> int:
    """Entries needed to answer one query within ``tau`` w.p. ``1 - beta``."""
    if not (tau > 0 and 0 < beta < 1 and epsilon > 0 and b > 0):
        raise ValueError("invalid parameters")
    return math.ceil(c * math.log(1 / beta) * b * b / (epsilon * epsilon * tau * tau))


def simulate_sq_query(oracle: LROracle, indices, g: Callable, b: float, epsilon: float,
                      rng: np.random.Generator, plan: QueryPlan | None = None) -> float:
    """Average of ``g(z_i) + Lap(2b/epsilon)`` over fresh entries ``indices``."""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        raise ValueError("need at least one entry")
    if np.any(oracle.ledger.spent[idx] > 0):
        raise ValueError("entries for an SQ query must be previously uncharged")
    R = laplace_query_randomizer(g, b, epsilon)
    if plan is None:
        out = oracle.invoke_batch(idx, R, rng)
    else:
        out = plan.ask(oracle, idx, R, rng)
    return float(np.mean(out))


class InsufficientData(ValueError):
    pass


@dataclass
class LocalSimulation:
    output: Any
    mode: str
    rounds: int
    queries: int
    entries_used: int
    answers: list = field(default_factory=list)
    slices: list = field(default_factory=list)


def simulate_sq_learner(learner, entries, epsilon: float, beta: float, rng: np.random.Generator,
                        *, c: float = 32.0, record: bool = False) -> LocalSimulation:
    """Answer each SQ query of ``learner`` with :func:`simulate_sq_query` on a fresh
    slice of ``entries``, taken in order from the front.

    Each query is given failure probability ``beta / learner.t``. A learner that
    issues all its queries in one round is run through a noninteractive plan.
    """
    t = learner.t
    oracle = LROracle(entries, epsilon, record=record)
    cursor = 0
    state = {"plan": None, "mode": None}
    slices = []

    def answer_round(batch: list[SQQuery], r: int):
        nonlocal cursor
        if r == 0:
            state["mode"] = "noninteractive"
            state["plan"] = QueryPlan("noninteractive")
        elif state["mode"] == "noninteractive":
            # a second round means the learner is adaptive after all
            state["mode"] = "interactive"
        ranges = []
        for q in batch:
            m = sq_sample_size(q.tau, beta / t, epsilon, q.b, c)
            if cursor + m > oracle.n:
                raise InsufficientData(f"need {cursor + m} entries, have {oracle.n}")
            ranges.append(np.arange(cursor, cursor + m))
            slices.append((cursor, cursor + m))
            cursor += m
        if state["mode"] == "noninteractive":
            plan = QueryPlan("noninteractive")
            for q, idx in zip(batch, ranges):
                plan.add(idx, laplace_query_randomizer(q.g, q.b, epsilon))
            outs = plan.execute(oracle, rng)
            state["plan"] = plan
            return [float(np.mean(o)) for o in outs]
        plan = QueryPlan("interactive")
        return [simulate_sq_query(oracle, idx, q.g, q.b, epsilon, rng, plan) for q, idx in zip(batch, ranges)]

    run = drive(learner, answer_round)
    return LocalSimulation(run.output, state["mode"], run.rounds, run.queries, cursor,
                           run.answers, slices)
