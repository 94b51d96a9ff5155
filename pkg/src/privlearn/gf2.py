"""Linear algebra over GF(2) with rows packed into Python ints.

Bit ``k`` of a packed word is coordinate ``k`` of the vector. String forms list
coordinate 0 first, so ``BitVector.from_string("10")`` has only coordinate 0 set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class BitVector:
    bits: int
    length: int

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"BitVector length must be positive, got {self.length}")
        if self.bits < 0 or self.bits >> self.length:
            raise ValueError(f"bits {self.bits:#x} do not fit in length {self.length}")

    @classmethod
    def from_string(cls, s: str) -> "BitVector":
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"not a bit string: {s!r}")
        return cls(sum(1 << k for k, ch in enumerate(s) if ch == "1"), len(s))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BitVector":
        return cls(sum((int(b) & 1) << k for k, b in enumerate(bits)), len(bits))

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(0, length)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "BitVector":
        return cls.from_bits(rng.integers(0, 2, size=length))

    def __getitem__(self, k: int) -> int:
        if not 0 <= k < self.length:
            raise IndexError(k)
        return (self.bits >> k) & 1

    def __xor__(self, other: "BitVector") -> "BitVector":
        _check_lengths(self, other)
        return BitVector(self.bits ^ other.bits, self.length)

    def __str__(self) -> str:
        return "".join(str((self.bits >> k) & 1) for k in range(self.length))

    def to_list(self) -> list[int]:
        return [(self.bits >> k) & 1 for k in range(self.length)]

    def weight(self) -> int:
        return self.bits.bit_count()


def _check_lengths(x: BitVector, r: BitVector) -> None:
    if x.length != r.length:
        raise ValueError(f"length mismatch: {x.length} != {r.length}")


def inner_product(x: BitVector, r: BitVector) -> int:
    """Inner product of ``x`` and ``r`` modulo 2."""
    _check_lengths(x, r)
    return (x.bits & r.bits).bit_count() & 1


@dataclass
class LinearSystem:
    """Equations ``coeffs . r = rhs`` over GF(2) in ``dimension`` unknowns."""

    dimension: int
    rows: list[tuple[BitVector, int]] = field(default_factory=list)

    def __post_init__(self):
        for coeffs, rhs in self.rows:
            self._validate(coeffs, rhs)

    def _validate(self, coeffs: BitVector, rhs: int) -> None:
        if coeffs.length != self.dimension:
            raise ValueError(f"row length {coeffs.length} != dimension {self.dimension}")
        if rhs not in (0, 1):
            raise ValueError(f"rhs must be a bit, got {rhs}")

    def add_row(self, coeffs: BitVector, rhs: int) -> "LinearSystem":
        self._validate(coeffs, rhs)
        self.rows.append((coeffs, int(rhs)))
        return self

    @classmethod
    def from_packed(cls, dimension: int, coeffs: Sequence[int], rhs: Sequence[int]) -> "LinearSystem":
        return cls(dimension, [(BitVector(int(c), dimension), int(b)) for c, b in zip(coeffs, rhs)])


@dataclass(frozen=True)
class AffineSubspace:
    """Solution set of a GF(2) linear system.

    Stored as ``particular`` plus the span of ``null_basis``, together with the
    reduced pivot rows (``constraints``) used for membership tests.
    """

    dimension: int
    empty: bool
    particular: BitVector | None
    null_basis: tuple[BitVector, ...] = ()
    constraints: tuple[tuple[int, int], ...] = ()

    @property
    def size(self) -> int:
        return subspace_size(self)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, v: BitVector) -> bool:
        return contains(self, v)

    def members(self) -> Iterator[BitVector]:
        """Enumerate every member. Only sensible for small null spaces."""
        if self.empty:
            return
        basis = [b.bits for b in self.null_basis]
        for mask in range(1 << len(basis)):
            v = self.particular.bits
            for j, b in enumerate(basis):
                if (mask >> j) & 1:
                    v ^= b
            yield BitVector(v, self.dimension)


def full_space(dimension: int) -> AffineSubspace:
    basis = tuple(BitVector(1 << k, dimension) for k in range(dimension))
    return AffineSubspace(dimension, False, BitVector.zeros(dimension), basis, ())


def empty_space(dimension: int) -> AffineSubspace:
    return AffineSubspace(dimension, True, None, (), ())


def _eliminate_packed(dimension: int, rows: Sequence[int]) -> tuple[list[int], list[int]] | None:
    """Reduce augmented rows (rhs in bit ``dimension``) to reduced echelon form.

    Returns (pivot rows, pivot columns) or None when the system is inconsistent.
    Pivots are taken lowest column first.
    """
    rhs_bit = 1 << dimension
    coeff_mask = rhs_bit - 1
    # pivot column -> reduced row
    pivots: dict[int, int] = {}
    for row in rows:
        for col, prow in pivots.items():
            if (row >> col) & 1:
                row ^= prow
        coeffs = row & coeff_mask
        if coeffs == 0:
            if row & rhs_bit:
                return None
            continue
        col = (coeffs & -coeffs).bit_length() - 1
        for other in pivots:
            if (pivots[other] >> col) & 1:
                pivots[other] ^= row
        pivots[col] = row
    cols = sorted(pivots)
    return [pivots[c] for c in cols], cols


def solve_packed(dimension: int, coeffs: Sequence[int], rhs: Sequence[int]) -> AffineSubspace:
    """Like :func:`gaussian_eliminate`, on raw packed coefficient words."""
    rhs_bit = 1 << dimension
    augmented = [int(c) | (rhs_bit if b else 0) for c, b in zip(coeffs, rhs)]
    reduced = _eliminate_packed(dimension, augmented)
    if reduced is None:
        return empty_space(dimension)
    prows, pcols = reduced
    particular = 0
    for row, col in zip(prows, pcols):
        if row & rhs_bit:
            particular |= 1 << col
    pivot_set = set(pcols)
    basis = []
    for free in range(dimension):
        if free in pivot_set:
            continue
        v = 1 << free
        for row, col in zip(prows, pcols):
            if (row >> free) & 1:
                v |= 1 << col
        basis.append(BitVector(v, dimension))
    constraints = tuple((row & (rhs_bit - 1), (row >> dimension) & 1) for row in prows)
    return AffineSubspace(dimension, False, BitVector(particular, dimension), tuple(basis), constraints)


def gaussian_eliminate(system: LinearSystem) -> AffineSubspace:
    return solve_packed(
        system.dimension,
        [c.bits for c, _ in system.rows],
        [b for _, b in system.rows],
    )


def subspace_size(space: AffineSubspace) -> int:
    return 0 if space.empty else 1 << len(space.null_basis)


def contains(space: AffineSubspace, v: BitVector) -> bool:
    if v.length != space.dimension:
        raise ValueError(f"length mismatch: {v.length} != {space.dimension}")
    if space.empty:
        return False
    return all((c & v.bits).bit_count() & 1 == b for c, b in space.constraints)


def sample_uniform(space: AffineSubspace, rng: np.random.Generator) -> BitVector:
    """Uniform member: particular solution plus a random combination of the null basis."""
    if space.empty:
        raise ValueError("cannot sample from an empty subspace")
    v = space.particular.bits
    if space.null_basis:
        coins = rng.integers(0, 2, size=len(space.null_basis))
        for coin, b in zip(coins, space.null_basis):
            if coin:
                v ^= b.bits
    return BitVector(v, space.dimension)


def rank(vectors: Sequence[BitVector]) -> int:
    """GF(2) rank of a list of vectors."""
    if not vectors:
        return 0
    d = vectors[0].length
    reduced = _eliminate_packed(d, [v.bits for v in vectors])
    return len(reduced[0])


def parity_of_words(words: np.ndarray, r: int) -> np.ndarray:
    """Vectorised ``r . x mod 2`` for an array of packed words ``x`` (d <= 64)."""
    return (np.bitwise_count(np.asarray(words, dtype=np.uint64) & np.uint64(r)) & 1).astype(np.int8)
