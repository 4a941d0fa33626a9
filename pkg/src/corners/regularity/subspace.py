"""Subspaces of F_2^n, their cosets and local coordinates.

Elements of F_2^n are n-bit integers.  A subspace keeps a reduced row
echelon basis (each basis vector owns a pivot bit that no other basis
vector has), which gives three things cheaply:

* the canonical coset representative of ``x`` is ``x`` with every pivot
  bit cleared, and it is the numerically smallest element of ``x + W``;
* the coordinate of ``w in W`` is the vector of its pivot bits;
* both maps are linear, so ``coord(x ^ y) = coord(x) ^ coord(y)``.
"""
from __future__ import annotations

from typing import Iterable, List, Sequence

import numpy as np

from ..errors import ValidationError


def _reduce_basis(vectors: Iterable[int]) -> List[int]:
    basis: List[int] = []
    for v in vectors:
        v = int(v)
        for b in basis:
            if v >> (b.bit_length() - 1) & 1:
                v ^= b
        if v:
            p = v.bit_length() - 1
            basis = [b ^ v if b >> p & 1 else b for b in basis]
            basis.append(v)
    return sorted(basis, key=lambda b: b.bit_length())


class Subspace:
    """A subgroup ``W`` of F_2^n with precomputed coset tables over all of G."""

    def __init__(self, n: int, vectors: Iterable[int] = ()):
        if n < 0:
            raise ValidationError("ambient dimension must be >= 0")
        self.n = n
        vecs = [int(v) for v in vectors]
        if any(v < 0 or v >= 1 << n for v in vecs):
            raise ValidationError(f"basis vector outside F_2^{n}")
        self.basis = _reduce_basis(vecs)
        self.pivots = [b.bit_length() - 1 for b in self.basis]
        self.dim = len(self.basis)
        self.codim = n - self.dim
        self.size = 1 << self.dim

        elements = np.arange(1 << n, dtype=np.int64)
        rep = elements.copy()
        local = np.zeros_like(elements)
        for i, (b, p) in enumerate(zip(self.basis, self.pivots)):
            bit = (elements >> p) & 1
            rep ^= bit * b
            local |= bit << i
        self.rep = rep
        self.local = local
        self.reps = np.unique(rep)
        self.coset_id = np.searchsorted(self.reps, rep)
        span = np.zeros(self.size, dtype=np.int64)
        for i, b in enumerate(self.basis):
            span[1 << i:2 << i] = span[:1 << i] ^ b
        self.span = span
        # elements[c, l] is the element of coset c with coordinate l
        self.elements = self.reps[:, None] ^ span[None, :]

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(n, [1 << i for i in range(n)])

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(n, [])

    @property
    def num_cosets(self) -> int:
        return 1 << self.codim

    def contains(self, x) -> np.ndarray:
        return self.rep[np.asarray(x, dtype=np.int64)] == 0

    def kernel(self, characters: Sequence[int]) -> "Subspace":
        """Common kernel of characters of ``W``, given as coordinate masks."""
        rows = _reduce_basis(characters)
        pivots = {r.bit_length() - 1: r for r in rows}
        free = [i for i in range(self.dim) if i not in pivots]
        out = []
        for f in free:
            v = 1 << f
            for p, r in pivots.items():
                if r >> f & 1:
                    v |= 1 << p
            out.append(v)
        ambient = []
        for coords in out:
            e = 0
            for i in range(self.dim):
                if coords >> i & 1:
                    e ^= self.basis[i]
            ambient.append(e)
        return Subspace(self.n, ambient)

    def is_subspace_of(self, other: "Subspace") -> bool:
        return bool(np.all(other.contains(self.basis))) if self.basis else True

    def __eq__(self, other):
        return isinstance(other, Subspace) and self.n == other.n and self.basis == other.basis

    def __repr__(self):
        return f"Subspace(n={self.n}, dim={self.dim}, basis={[bin(b) for b in self.basis]})"
