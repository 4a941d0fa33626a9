"""Finite abelian groups, subsets of the plane x+y+z=0, and corner censuses.

Elements are identified with a canonical index in ``[0, N)``: the group is
stored as a list of cyclic factors and the index is the mixed-radix number
whose least significant digit belongs to the first factor.  For ``F_2^n``
this makes the index an n-bit mask and addition a bitwise XOR.

A :class:`PlaneSet` keeps the subset ``A`` of ``P = {x+y+z = 0}`` as an
``N x N`` boolean matrix over ``(x, y)``.  The census counts, for every
``d``, the pairs ``(x, y)`` with ``(x,y), (x+d,y), (x,y+d)`` all in ``A``.
"""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ResourceError, ValidationError

ORACLE_MAX_ORDER = 64
CENSUS_MAX_ORDER = 4096


class FiniteAbelianGroup:
    """A finite abelian group given as ``cyclic(N)``, ``vector(p, n)`` or a product."""

    def __init__(self, descriptor):
        self.descriptor = descriptor
        self.moduli = tuple(self._flatten(descriptor))
        if not self.moduli or any(m < 1 for m in self.moduli):
            raise ValidationError(f"bad group descriptor {descriptor!r}")
        self.order = int(np.prod(self.moduli, dtype=object))
        self._radix = np.cumprod((1,) + self.moduli[:-1]).astype(np.int64)
        self.is_binary = all(m == 2 for m in self.moduli)
        self.is_cyclic = len(self.moduli) == 1

    @staticmethod
    def _flatten(desc):
        kind = desc[0]
        if kind == "cyclic":
            return [int(desc[1])]
        if kind == "vector":
            p, n = int(desc[1]), int(desc[2])
            if p < 2 or n < 0:
                raise ValidationError(f"bad vector space descriptor {desc!r}")
            return [p] * n if n else [1]
        if kind == "product":
            out = []
            for child in desc[1]:
                out.extend(FiniteAbelianGroup._flatten(child))
            return out
        raise ValidationError(f"unknown group kind {kind!r}")

    @classmethod
    def cyclic(cls, n: int) -> "FiniteAbelianGroup":
        return cls(("cyclic", int(n)))

    @classmethod
    def vector(cls, p: int, n: int) -> "FiniteAbelianGroup":
        return cls(("vector", int(p), int(n)))

    @classmethod
    def product(cls, *groups: "FiniteAbelianGroup") -> "FiniteAbelianGroup":
        return cls(("product", tuple(g.descriptor for g in groups)))

    # -- text form ---------------------------------------------------------

    def describe(self) -> str:
        return _describe(self.descriptor)

    @classmethod
    def parse(cls, text: str) -> "FiniteAbelianGroup":
        """Inverse of :meth:`describe`: ``cyclic 256``, ``vector 2 8``,
        ``product cyclic 4 x vector 2 3``."""
        words = text.split()
        if not words:
            raise ValidationError("empty group description")
        if words[0] == "product":
            parts = " ".join(words[1:]).split(" x ")
            return cls(("product", tuple(cls.parse(p).descriptor for p in parts)))
        try:
            if words[0] == "cyclic" and len(words) == 2:
                return cls.cyclic(int(words[1]))
            if words[0] == "vector" and len(words) == 3:
                return cls.vector(int(words[1]), int(words[2]))
        except ValueError:
            pass
        raise ValidationError(f"cannot parse group description {text!r}")

    def __repr__(self):
        return f"FiniteAbelianGroup({self.describe()!r})"

    def __eq__(self, other):
        return isinstance(other, FiniteAbelianGroup) and self.descriptor == other.descriptor

    def __hash__(self):
        return hash(self.descriptor)

    # -- arithmetic on canonical indices ------------------------------------

    def _check(self, *xs):
        for x in xs:
            a = np.asarray(x)
            if a.size and (a.min() < 0 or a.max() >= self.order):
                raise DomainError(f"element index out of range for group of order {self.order}")

    def add(self, a, b):
        self._check(a, b)
        return self._add(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))

    def _add(self, a, b):
        if self.is_cyclic:
            out = (a + b) % self.order
        elif self.is_binary:
            out = a ^ b
        else:
            out = np.zeros(np.broadcast(a, b).shape, dtype=np.int64)
            for m, rad in zip(self.moduli, self._radix):
                out += ((a // rad % m + b // rad % m) % m) * rad
        return out if out.ndim else int(out)

    def neg(self, a):
        self._check(a)
        a = np.asarray(a, dtype=np.int64)
        if self.is_binary:
            out = a.copy()
        else:
            out = np.zeros(a.shape, dtype=np.int64)
            for m, rad in zip(self.moduli, self._radix):
                out += ((-(a // rad % m)) % m) * rad
        return out if out.ndim else int(out)

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def unindex(self, i: int) -> Tuple[int, ...]:
        """Digits of element ``i``, one per cyclic factor."""
        if not 0 <= i < self.order:
            raise DomainError(f"index {i} out of range [0, {self.order})")
        return tuple(int(i // int(rad) % m) for m, rad in zip(self.moduli, self._radix))

    def index(self, digits: Sequence[int]) -> int:
        if len(digits) != len(self.moduli) or any(
                not 0 <= d < m for d, m in zip(digits, self.moduli)):
            raise DomainError(f"digits {tuple(digits)} do not name an element")
        return int(sum(int(d) * int(rad) for d, rad in zip(digits, self._radix)))

    def shift_table(self, d: int) -> np.ndarray:
        """``x -> x + d`` for every x, as an index array."""
        return self._add(np.arange(self.order, dtype=np.int64), np.int64(d))


def _describe(desc) -> str:
    if desc[0] == "cyclic":
        return f"cyclic {desc[1]}"
    if desc[0] == "vector":
        return f"vector {desc[1]} {desc[2]}"
    return "product " + " x ".join(_describe(c) for c in desc[1])


@dataclass
class PlaneSet:
    """``indicator[x, y]`` is True when ``(x, y, -x-y)`` belongs to A."""

    group: FiniteAbelianGroup
    indicator: np.ndarray

    def __post_init__(self):
        self.indicator = np.asarray(self.indicator, dtype=bool)
        n = self.group.order
        if self.indicator.shape != (n, n):
            raise ValidationError(
                f"indicator has shape {self.indicator.shape}, expected {(n, n)}")

    @property
    def size(self) -> int:
        return int(self.indicator.sum())

    @property
    def density(self) -> float:
        return self.size / self.group.order**2

    def translate(self, a: int, b: int) -> "PlaneSet":
        """The set shifted by ``(a, b, -a-b)``."""
        g = self.group
        src_x = g.sub(np.arange(g.order), a)
        src_y = g.sub(np.arange(g.order), b)
        return PlaneSet(g, self.indicator[np.ix_(src_x, src_y)])

    def to_text(self) -> str:
        rows = ("".join("1" if v else "0" for v in row) for row in self.indicator)
        return f"group: {self.group.describe()}\n" + "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PlaneSet":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("group:"):
            raise ValidationError("line 1: expected header 'group: <description>'")
        group = FiniteAbelianGroup.parse(lines[0][len("group:"):])
        n = group.order
        body = [ln.strip() for ln in lines[1:] if ln.strip()]
        if len(body) != n:
            raise ValidationError(f"expected {n} indicator rows, found {len(body)}")
        ind = np.zeros((n, n), dtype=bool)
        for i, row in enumerate(body):
            if len(row) != n or set(row) - {"0", "1"}:
                raise ValidationError(f"line {i + 2}: need {n} characters from '0'/'1'")
            ind[i] = np.frombuffer(row.encode(), dtype=np.uint8) == ord("1")
        return cls(group, ind)


@dataclass
class CornerCensus:
    group: FiniteAbelianGroup
    counts: np.ndarray
    set_size: int

    @property
    def alpha(self) -> float:
        return self.set_size / self.group.order**2

    def densities(self) -> np.ndarray:
        return self.counts / self.group.order**2

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("d_index,count\n")
        for d, c in enumerate(self.counts):
            buf.write(f"{d},{int(c)}\n")
        return buf.getvalue()


# -- packed-row census -------------------------------------------------------

_XOR_MASKS = [
    (1, 0x5555555555555555), (2, 0x3333333333333333), (4, 0x0F0F0F0F0F0F0F0F),
    (8, 0x00FF00FF00FF00FF), (16, 0x0000FFFF0000FFFF), (32, 0x00000000FFFFFFFF),
]


def _pack_rows(a: np.ndarray) -> np.ndarray:
    """Bit ``y`` of row ``x`` lives in word ``y // 64`` at position ``y % 64``."""
    n_rows, n_cols = a.shape
    words = -(-n_cols // 64)
    padded = np.zeros((n_rows, words * 64), dtype=bool)
    padded[:, :n_cols] = a
    return np.packbits(padded, axis=1, bitorder="little").view("<u8")


class _ColumnShifter:
    """Produces the packed rows of ``A[x, y + d]`` for a given ``d``."""

    def __init__(self, group: FiniteAbelianGroup, a: np.ndarray):
        self.group = group
        self.a = a
        n = group.order
        self.words = -(-n // 64)
        if group.is_cyclic:
            self.doubled = _pack_rows(np.concatenate([a, a, np.zeros((n, 64), bool)], axis=1))
        elif group.is_binary:
            self.packed = _pack_rows(a)
            self._low = (None, None)

    def __call__(self, d: int) -> np.ndarray:
        g = self.group
        if g.is_cyclic:
            q, r = divmod(d, 64)
            lo = self.doubled[:, q:q + self.words]
            if r == 0:
                return lo
            hi = self.doubled[:, q + 1:q + 1 + self.words]
            return (lo >> np.uint64(r)) | (hi << np.uint64(64 - r))
        if g.is_binary:
            low = d & 63
            if self._low[0] != low:
                x = self.packed
                for s, m in _XOR_MASKS:
                    if low & s:
                        s64, m64 = np.uint64(s), np.uint64(m)
                        x = ((x & m64) << s64) | ((x >> s64) & m64)
                self._low = (low, x)
            x = self._low[1]
            if d >> 6:
                x = x[:, np.arange(self.words) ^ (d >> 6)]
            return x
        return _pack_rows(self.a[:, g.shift_table(d)])


def census(A: PlaneSet, threads: int = 1, ds: Optional[Sequence[int]] = None) -> CornerCensus:
    """Exact ``|S_d|`` for every d (or only for ``ds``; other entries stay 0).

    O(N^3 / 64) word operations: rows are packed into 64-bit words, the row
    shift ``x -> x+d`` is a gather and the column shift is done word-parallel
    for cyclic groups and for F_2^n.
    """
    g = A.group
    n = g.order
    if n > CENSUS_MAX_ORDER:
        raise ResourceError(f"census supports N <= {CENSUS_MAX_ORDER}, got {n}")
    packed = _pack_rows(A.indicator)
    counts = np.zeros(n, dtype=np.int64)
    todo = list(range(n)) if ds is None else sorted({int(d) for d in ds})
    if g.is_binary:
        # shifters cache the in-word permutation for the low six bits of d
        todo.sort(key=lambda d: (d & 63, d >> 6))

    def work(chunk):
        shifter = _ColumnShifter(g, A.indicator)
        for d in chunk:
            both = packed & packed[g.shift_table(d)] & shifter(d)
            counts[d] = int(np.bitwise_count(both).sum(dtype=np.int64))

    if threads > 1 and len(todo) > 1:
        size = -(-len(todo) // threads)
        chunks = [todo[i:i + size] for i in range(0, len(todo), size)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        work(todo)
    return CornerCensus(g, counts, A.size)


def census_oracle(A: PlaneSet) -> CornerCensus:
    """Naive triple loop through the group interface; N <= 64 only."""
    g = A.group
    n = g.order
    if n > ORACLE_MAX_ORDER:
        raise ResourceError(f"census oracle supports N <= {ORACLE_MAX_ORDER}, got {n}")
    ind = A.indicator.tolist()
    counts = np.zeros(n, dtype=np.int64)
    for d in range(n):
        total = 0
        for x in range(n):
            xd = g.add(x, d)
            for y in range(n):
                if ind[x][y] and ind[xd][y] and ind[x][g.add(y, d)]:
                    total += 1
        counts[d] = total
    return CornerCensus(g, counts, A.size)


def max_popular_difference(c: CornerCensus) -> Tuple[int, int]:
    """Nonzero d with the most corners; ties go to the smallest index."""
    if c.group.order < 2:
        raise DomainError("the trivial group has no nonzero difference")
    d = int(np.argmax(c.counts[1:])) + 1
    return d, int(c.counts[d])


def random_plane_set(group: FiniteAbelianGroup, density: float,
                     rng: np.random.Generator) -> PlaneSet:
    n = group.order
    return PlaneSet(group, rng.random((n, n)) < density)
