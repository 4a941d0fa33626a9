"""Walsh-Hadamard analysis of subsets of a coset ``W + x`` in F_2^n.

Coordinates inside ``W`` come from :class:`~corners.regularity.subspace.Subspace`,
so a character of ``W`` is a bit mask ``xi`` over those coordinates and
``xi(w) = (-1)^popcount(xi & coord(w))``.  Coefficients follow the
normalisation ``g^(xi) = E_w g(w) xi(w)``.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import DomainError
from .subspace import Subspace


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalised transform along the last axis (length a power of two).

    Integer input stays integer, so applying it twice gives ``len * a`` exactly.
    """
    a = np.asarray(a)
    n = a.shape[-1]
    if n & (n - 1):
        raise DomainError(f"transform length {n} is not a power of two")
    lead = a.shape[:-1]
    out = a.reshape(-1, n).copy()
    h = 1
    while h < n:
        blocks = out.reshape(out.shape[0], n // (2 * h), 2, h)
        lo = blocks[:, :, 0, :].copy()
        hi = blocks[:, :, 1, :]
        blocks[:, :, 0, :] += hi
        blocks[:, :, 1, :] = lo - hi
        h *= 2
    return out.reshape(*lead, n)


def walsh_coefficients(indicator: np.ndarray) -> np.ndarray:
    """Coefficients of a 0/1 vector (or a stack of them) indexed by coordinates."""
    ind = np.asarray(indicator, dtype=np.int64)
    return fwht(ind) / ind.shape[-1]


def inverse_walsh(coefficients: np.ndarray) -> np.ndarray:
    """Recover the function from its coefficients (values are rounded to ints)."""
    coef = np.asarray(coefficients, dtype=float)
    size = coef.shape[-1]
    ints = np.rint(coef * size).astype(np.int64)
    return fwht(ints) // size


def walsh(subspace: Subspace, subset: Iterable[int], basepoint: int) -> np.ndarray:
    """Coefficient table of ``S - x`` over the dual of ``W``; entry 0 is ``|S|/|W|``."""
    s = np.fromiter((int(v) for v in subset), dtype=np.int64)
    x = int(basepoint)
    shifted = s ^ x
    if s.size and not np.all(subspace.contains(shifted)):
        raise DomainError("subset is not contained in the coset W + basepoint")
    ind = np.zeros(subspace.size, dtype=np.int64)
    ind[subspace.local[shifted]] = 1
    return walsh_coefficients(ind)
