"""Labeled examples, databases, distributions, concepts and error measurement.

Inputs ``x`` are packed into ``uint64`` words (coordinate k in bit k), so
databases handle dimensions up to 64. Labels follow one of two conventions:
bits {0, 1} (parity learners) or signs {+1, -1} (masked parity).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .gf2 import BitVector, parity_of_words

MAX_DIM = 64
ENUMERATION_LIMIT = 1 << 20


class LabelConvention(enum.Enum):
    BIT = "bit"
    SIGN = "sign"

    def valid(self, y: np.ndarray) -> bool:
        allowed = (0, 1) if self is LabelConvention.BIT else (-1, 1)
        return bool(np.isin(y, allowed).all())


def bit_to_sign(y):
    """0 -> +1, 1 -> -1."""
    return (1 - 2 * np.asarray(y)).astype(np.int8)


def sign_to_bit(y):
    return ((1 - np.asarray(y)) // 2).astype(np.int8)


@dataclass(frozen=True)
class Example:
    x: BitVector
    y: int
    convention: LabelConvention = LabelConvention.BIT

    def __post_init__(self):
        if not self.convention.valid(np.array([self.y])):
            raise ValueError(f"label {self.y} invalid for {self.convention.value} convention")


class Database:
    """Ordered vector of labeled examples, stored column-wise."""

    def __init__(self, x, y, d: int, convention: LabelConvention = LabelConvention.BIT):
        if not 0 < d <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {d}")
        self.x = np.asarray(x, dtype=np.uint64).reshape(-1)
        self.y = np.asarray(y, dtype=np.int8).reshape(-1)
        if self.x.shape != self.y.shape:
            raise ValueError("x and y lengths differ")
        if d < 64 and self.x.size and int(self.x.max()) >> d:
            raise ValueError(f"some x does not fit in {d} bits")
        if not convention.valid(self.y):
            raise ValueError(f"labels invalid for {convention.value} convention")
        self.d = d
        self.convention = convention

    @classmethod
    def from_examples(cls, examples: Sequence[Example], d: int | None = None) -> "Database":
        if not examples and d is None:
            raise ValueError("need d for an empty database")
        d = d if d is not None else examples[0].x.length
        conv = examples[0].convention if examples else LabelConvention.BIT
        for e in examples:
            if e.x.length != d or e.convention is not conv:
                raise ValueError("examples must share dimension and label convention")
        return cls([e.x.bits for e in examples], [e.y for e in examples], d, conv)

    @classmethod
    def empty(cls, d: int, convention: LabelConvention = LabelConvention.BIT) -> "Database":
        return cls([], [], d, convention)

    @property
    def n(self) -> int:
        return len(self.y)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Example(BitVector(int(self.x[idx]), self.d), int(self.y[idx]), self.convention)
        return Database(self.x[idx], self.y[idx], self.d, self.convention)

    def __iter__(self) -> Iterator[Example]:
        for k in range(self.n):
            yield self[k]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Database) and self.d == other.d
                and self.convention is other.convention
                and np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y))

    def __repr__(self) -> str:
        return f"Database(n={self.n}, d={self.d}, convention={self.convention.value})"

    def replace(self, i: int, example: Example) -> "Database":
        """Neighbouring database with entry ``i`` swapped for ``example``."""
        if example.x.length != self.d or example.convention is not self.convention:
            raise ValueError("replacement example does not match the database")
        x, y = self.x.copy(), self.y.copy()
        x[i], y[i] = example.x.bits, example.y
        return Database(x, y, self.d, self.convention)

    def hamming(self, other: "Database") -> int:
        if self.n != other.n or self.d != other.d:
            raise ValueError("databases have different shapes")
        return int(np.count_nonzero((self.x != other.x) | (self.y != other.y)))

    def to_sign(self) -> "Database":
        if self.convention is LabelConvention.SIGN:
            return self
        return Database(self.x, bit_to_sign(self.y), self.d, LabelConvention.SIGN)

    def to_bit(self) -> "Database":
        if self.convention is LabelConvention.BIT:
            return self
        return Database(self.x, sign_to_bit(self.y), self.d, LabelConvention.BIT)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for xv, yv in zip(self.x, self.y):
                w.writerow([str(BitVector(int(xv), self.d)), int(yv)])

    @classmethod
    def from_csv(cls, path, convention: LabelConvention | None = None) -> "Database":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows; dimension unknown")
        xs = [BitVector.from_string(r["x"]) for r in rows]
        ys = [int(r["y"]) for r in rows]
        if convention is None:
            convention = LabelConvention.SIGN if -1 in ys else LabelConvention.BIT
        return cls([v.bits for v in xs], ys, xs[0].length, convention)


# -- distributions ----------------------------------------------------------

class UniformCube:
    """Uniform distribution over {0,1}^d."""

    kind = "uniform"

    def __init__(self, d: int):
        if not 0 < d <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {d}")
        self.d = d

    @property
    def support_size(self) -> int:
        return 1 << self.d

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.d == 64:
            return rng.integers(0, 1 << 63, size=n, dtype=np.uint64) * 2 + rng.integers(0, 2, size=n, dtype=np.uint64)
        return rng.integers(0, 1 << self.d, size=n, dtype=np.uint64)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        if self.support_size > ENUMERATION_LIMIT:
            raise ValueError(f"support of size 2^{self.d} too large to enumerate")
        pts = np.arange(self.support_size, dtype=np.uint64)
        return pts, np.full(len(pts), 1.0 / len(pts))


class FiniteDistribution:
    """Explicit finite support with weights; optionally labeled.

    ``labels`` turns it into a distribution over labeled examples.
    """

    kind = "finite"

    def __init__(self, points, weights, d: int, labels=None,
                 convention: LabelConvention = LabelConvention.BIT):
        self.points = np.asarray(points, dtype=np.uint64).reshape(-1)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if self.points.shape != self.weights.shape:
            raise ValueError("points and weights lengths differ")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        self.d = d
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int8).reshape(-1)
        if self.labels is not None:
            if self.labels.shape != self.points.shape:
                raise ValueError("labels and points lengths differ")
            if not convention.valid(self.labels):
                raise ValueError("labels invalid for convention")
        self.convention = convention
        self._cdf = np.cumsum(self.weights)

    @classmethod
    def uniform_over(cls, points, d: int, labels=None, convention=LabelConvention.BIT):
        points = np.asarray(points, dtype=np.uint64).reshape(-1)
        return cls(points, np.full(len(points), 1.0 / len(points)), d, labels, convention)

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    @property
    def support_size(self) -> int:
        return len(self.points)

    def _draw(self, n, rng):
        idx = np.searchsorted(self._cdf, rng.random(n) * self._cdf[-1], side="right")
        return np.minimum(idx, len(self.points) - 1)

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.points[self._draw(n, rng)]

    def sample_labeled(self, n: int, rng: np.random.Generator) -> Database:
        if not self.labeled:
            raise ValueError("distribution is unlabeled")
        idx = self._draw(n, rng)
        return Database(self.points[idx], self.labels[idx], self.d, self.convention)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points, self.weights


# -- concepts ---------------------------------------------------------------

@dataclass(frozen=True)
class Concept:
    """Labeling rule on packed inputs.

    ``fn`` maps an array of packed words to labels; ``key`` identifies the
    concept (its representation) for hashing and equality.
    """

    name: str
    key: tuple
    d: int
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, hash=False, repr=False)
    convention: LabelConvention = LabelConvention.BIT
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=np.uint64)), dtype=np.int8)

    def label(self, x: BitVector) -> int:
        return int(self(np.array([x.bits], dtype=np.uint64))[0])


@dataclass(frozen=True)
class Hypothesis(Concept):
    provenance: str = field(default="", compare=False, hash=False)

    @classmethod
    def of(cls, c: Concept, provenance: str) -> "Hypothesis":
        return cls(c.name, c.key, c.d, c.fn, c.convention, c.params, provenance)


def parity(r: BitVector) -> Concept:
    """The parity concept ``x -> r . x mod 2``."""
    bits = r.bits
    return Concept("parity", ("parity", bits), r.length,
                   lambda x: parity_of_words(x, bits), LabelConvention.BIT, {"r": str(r)})


def parity_class(d: int) -> list[Concept]:
    return [parity(BitVector(k, d)) for k in range(1 << d)]


def table_concept(labels: Sequence[int], d: int, name: str = "table") -> Concept:
    """Concept given by its full truth table over {0,1}^d (index = packed x)."""
    table = np.asarray(labels, dtype=np.int8)
    if table.shape != (1 << d,):
        raise ValueError(f"truth table must have 2^{d} entries")
    return Concept(name, (name, table.tobytes()), d, lambda x: table[x.astype(np.int64)],
                   LabelConvention.BIT)


def complement(c: Concept) -> Concept:
    return Concept("not-" + c.name, ("not",) + c.key, c.d, lambda x: 1 - c(x), c.convention)


# -- data generation and error ---------------------------------------------

def generate_database(dist, c: Concept, n: int, rng: np.random.Generator) -> Database:
    """``n`` i.i.d. inputs from ``dist`` labeled by ``c``."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    x = dist.sample_x(n, rng)
    return Database(x, c(x), dist.d, c.convention)


def _target_labels(dist, points, target):
    if target is not None:
        return target(points)
    if getattr(dist, "labeled", False):
        return dist.labels
    raise ValueError("need a target concept or a labeled distribution")


def true_error(h: Concept, dist, target: Concept | None = None, *,
               mc_samples: int | None = None, rng: np.random.Generator | None = None) -> float:
    """``Pr[h(x) != y]`` under ``dist``.

    Exact by enumeration when the support has at most 2^20 points; otherwise
    ``mc_samples`` and ``rng`` must be supplied for a Monte-Carlo estimate.
    """
    if dist.support_size <= ENUMERATION_LIMIT:
        pts, w = dist.support()
        y = _target_labels(dist, pts, target)
        return float(w @ (h(pts) != y))
    if mc_samples is None or rng is None:
        raise ValueError("support too large for enumeration; pass mc_samples and rng")
    if target is None:
        z = dist.sample_labeled(mc_samples, rng)
        return float(np.mean(h(z.x) != z.y))
    x = dist.sample_x(mc_samples, rng)
    return float(np.mean(h(x) != target(x)))


def training_error(h: Concept, z: Database) -> float:
    if z.n == 0:
        raise ValueError("training error of an empty database is undefined")
    return float(np.count_nonzero(h(z.x) != z.y)) / z.n


def opt_error(concepts: Sequence[Concept], dist, target: Concept | None = None) -> float:
    if not concepts:
        raise ValueError("empty concept class")
    return min(true_error(c, dist, target) for c in concepts)


def distinct_labelings(concepts: Sequence[Concept], domain) -> list[tuple[tuple[int, ...], Concept]]:
    """Distinct labelings of ``domain`` (packed points) induced by the class,
    each with the first concept that realises it."""
    domain = np.asarray(domain, dtype=np.uint64).reshape(-1)
    if len(domain) > 1 << 16:
        raise ValueError("domain too large to enumerate labelings")
    seen: dict[tuple[int, ...], Concept] = {}
    for c in concepts:
        seen.setdefault(tuple(int(v) for v in c(domain)), c)
    return list(seen.items())


def restrict_to_domain(labeling: Sequence[int], domain, d: int, default: int = 0) -> Concept:
    """Concept agreeing with ``labeling`` on ``domain`` and ``default`` elsewhere."""
    table = np.full(1 << d, default, dtype=np.int8)
    table[np.asarray(domain, dtype=np.int64)] = labeling
    return table_concept(table, d, name="labeling")
