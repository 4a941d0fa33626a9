"""Finite product kernels and the corner functional.

A kernel is three independent finite marginals ``p, q, r`` plus a value
tensor ``values[i, j, k]`` in [0, 1].  The corner functional is

    T(f) = E[ E(f|X,Y) * E(f|X,Z) * E(f|Y,Z) ]

which is evaluated here in double precision, or exactly with
:class:`fractions.Fraction` when every entry is a small dyadic rational.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from .errors import DomainError, ResourceError, ValidationError

SUM_TOL = 1e-12
DEFAULT_MAX_CELLS = 10**7
EXACT_MAX_CELLS = 4096
EXACT_MAX_DENOMINATOR = 2**32
SCHEMA_VERSION = 1


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_marginal(name: str, v: np.ndarray) -> None:
    if v.ndim != 1 or v.size < 1:
        raise ValidationError(f"{name}: must be a non-empty 1-d probability vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValidationError(f"{name}: entries must be finite and >= 0")
    s = float(v.sum())
    if abs(s - 1.0) > SUM_TOL:
        raise ValidationError(f"{name}: sums to {s!r}, not 1 within {SUM_TOL:g}")


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Marginals ``p, q, r`` and a value tensor of shape ``(len(p), len(q), len(r))``.

    Instances are immutable; all arrays are read-only float64.  Pass
    ``renormalize=True`` to :meth:`from_arrays` to rescale marginals that
    are off by rounding; the constructor itself never rescales.
    """

    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("p", "q", "r", "values"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("p", "q", "r"):
            _check_marginal(name, getattr(self, name))
        expected = (self.p.size, self.q.size, self.r.size)
        if self.values.shape != expected:
            raise ValidationError(
                f"values: shape {self.values.shape} does not match marginals {expected}"
            )
        v = self.values
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("values: every entry must lie in [0, 1]")

    @classmethod
    def from_arrays(cls, p, q, r, values, renormalize: bool = False) -> "DiscreteKernel":
        if renormalize:
            p, q, r = (np.asarray(a, float) / np.sum(a) for a in (p, q, r))
        return cls(p, q, r, values)

    @classmethod
    def constant(cls, value: float, shape: Tuple[int, int, int] = (1, 1, 1)) -> "DiscreteKernel":
        mx, my, mz = shape
        return cls(
            np.full(mx, 1.0 / mx),
            np.full(my, 1.0 / my),
            np.full(mz, 1.0 / mz),
            np.full(shape, float(value)),
        )

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    @property
    def weights(self) -> np.ndarray:
        """The product measure ``p_i q_j r_k`` as a tensor."""
        return np.einsum("i,j,k->ijk", self.p, self.q, self.r)

    def with_values(self, values) -> "DiscreteKernel":
        return DiscreteKernel(self.p, self.q, self.r, values)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "p": self.p.tolist(),
            "q": self.q.tolist(),
            "r": self.r.tolist(),
            "values": self.values.tolist(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, DiscreteKernel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, a), getattr(other, a))
            for a in ("p", "q", "r", "values")
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PiecewiseKernel:
    """A step function on [0,1]^3, constant on each cell of three cut grids."""

    x_cuts: np.ndarray
    y_cuts: np.ndarray
    z_cuts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("x_cuts", "y_cuts", "z_cuts", "values"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("x_cuts", "y_cuts", "z_cuts"):
            c = getattr(self, name)
            if c.ndim != 1 or c.size < 2:
                raise ValidationError(f"{name}: need at least two cut points")
            if c[0] != 0.0 or c[-1] != 1.0:
                raise ValidationError(f"{name}: must start at 0 and end at 1")
            if np.any(np.diff(c) < 0):
                raise ValidationError(f"{name}: must be nondecreasing")
        expected = (self.x_cuts.size - 1, self.y_cuts.size - 1, self.z_cuts.size - 1)
        if self.values.shape != expected:
            raise ValidationError(
                f"values: shape {self.values.shape} does not match cuts {expected}"
            )
        v = self.values
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("values: every entry must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "x_cuts": self.x_cuts.tolist(),
            "y_cuts": self.y_cuts.tolist(),
            "z_cuts": self.z_cuts.tolist(),
            "values": self.values.tolist(),
        }


def disagreement_kernel() -> DiscreteKernel:
    """Two fair labels per axis; value 0 when all three labels agree, else 1.

    E = 3/4 and T = 13/32, so T < E^3.
    """
    values = np.ones((2, 2, 2))
    values[0, 0, 0] = values[1, 1, 1] = 0.0
    half = [0.5, 0.5]
    return DiscreteKernel(half, half, half, values)


# -- functionals -------------------------------------------------------------


def expectation(k: DiscreteKernel) -> float:
    return float(np.einsum("i,j,k,ijk->", k.p, k.q, k.r, k.values))


def conditional_xy(k: DiscreteKernel) -> np.ndarray:
    """E(f | X, Y) as an ``m_x x m_y`` matrix (averaging out Z)."""
    return np.einsum("k,ijk->ij", k.r, k.values)


def conditional_xz(k: DiscreteKernel) -> np.ndarray:
    return np.einsum("j,ijk->ik", k.q, k.values)


def conditional_yz(k: DiscreteKernel) -> np.ndarray:
    return np.einsum("i,ijk->jk", k.p, k.values)


def t_value(k: DiscreteKernel) -> float:
    fxy, fxz, fyz = conditional_xy(k), conditional_xz(k), conditional_yz(k)
    return float(np.einsum("i,j,k,ij,ik,jk->", k.p, k.q, k.r, fxy, fxz, fyz))


# -- exact rational path -----------------------------------------------------


def _dyadic(x: float) -> Optional[Fraction]:
    f = Fraction(x)
    d = f.denominator
    if d > EXACT_MAX_DENOMINATOR or d & (d - 1):
        return None
    return f


def exact_eligible(k: DiscreteKernel) -> bool:
    """Small kernels whose every entry is a dyadic rational with modest denominator."""
    return _exact_parts(k) is not None


def _exact_parts(k: DiscreteKernel):
    if k.values.size > EXACT_MAX_CELLS:
        return None
    parts = []
    for arr in (k.p, k.q, k.r, k.values):
        conv = [_dyadic(float(x)) for x in arr.ravel()]
        if any(c is None for c in conv):
            return None
        parts.append(np.array(conv, dtype=object).reshape(arr.shape))
    if any(sum(m) != 1 for m in parts[:3]):
        return None
    return parts


def exact_functionals(k: DiscreteKernel) -> Optional[Tuple[Fraction, Fraction]]:
    """``(E(f), T(f))`` as Fractions, or None when the kernel is not eligible."""
    parts = _exact_parts(k)
    if parts is None:
        return None
    p, q, r, v = parts
    mx, my, mz = v.shape
    fxy = [[sum((r[c] * v[i, j, c] for c in range(mz)), Fraction(0)) for j in range(my)]
           for i in range(mx)]
    fxz = [[sum((q[j] * v[i, j, c] for j in range(my)), Fraction(0)) for c in range(mz)]
           for i in range(mx)]
    fyz = [[sum((p[i] * v[i, j, c] for i in range(mx)), Fraction(0)) for c in range(mz)]
           for j in range(my)]
    alpha = Fraction(0)
    t = Fraction(0)
    for i in range(mx):
        for j in range(my):
            pq = p[i] * q[j]
            alpha += pq * fxy[i][j]
            for c in range(mz):
                w = pq * r[c]
                if w:
                    t += w * fxy[i][j] * fxz[i][c] * fyz[j][c]
    return alpha, t


# -- constructions -----------------------------------------------------------


def tensor_power(k: DiscreteKernel, n: int, max_cells: int = DEFAULT_MAX_CELLS) -> DiscreteKernel:
    """n-fold product of independent copies; E and T both get raised to the n."""
    if int(n) != n or n < 1:
        raise DomainError(f"tensor power needs a positive integer, got {n!r}")
    n = int(n)
    cells = reduce(lambda a, b: a * b, (s**n for s in k.shape), 1)
    if cells > max_cells:
        raise ResourceError(
            f"tensor power {n} of shape {k.shape} needs {cells} cells (budget {max_cells})"
        )
    p, q, r, v = k.p, k.q, k.r, k.values
    for _ in range(n - 1):
        a, b, c = v.shape
        mx, my, mz = k.shape
        v = np.einsum("IJC,ijc->IiJjCc", v, k.values).reshape(a * mx, b * my, c * mz)
        p, q, r = np.kron(p, k.p), np.kron(q, k.q), np.kron(r, k.r)
    return DiscreteKernel(p, q, r, v)


def scale(k: DiscreteKernel, beta: float) -> DiscreteKernel:
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"scale factor must lie in [0, 1], got {beta!r}")
    return k.with_values(beta * k.values)


def epsilon_mix(k: DiscreteKernel, eps: float) -> DiscreteKernel:
    """``eps + (1 - eps) * f``: raises E by eps(1-E) and T by at most 3e+3e^2+e^3."""
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"mixing weight must lie in [0, 1], got {eps!r}")
    return k.with_values(np.clip(eps + (1.0 - eps) * k.values, 0.0, 1.0))


def from_piecewise(pk: PiecewiseKernel) -> DiscreteKernel:
    """Cell widths become the marginals; values are copied cell by cell."""
    p, q, r = (np.diff(c) for c in (pk.x_cuts, pk.y_cuts, pk.z_cuts))
    return DiscreteKernel(p, q, r, pk.values)


def to_piecewise(k: DiscreteKernel) -> PiecewiseKernel:
    def cuts(m):
        c = np.concatenate([[0.0], np.cumsum(m)])
        c[-1] = 1.0
        return np.maximum.accumulate(np.clip(c, 0.0, 1.0))

    return PiecewiseKernel(cuts(k.p), cuts(k.q), cuts(k.r), k.values)


# -- serialization -----------------------------------------------------------


KernelLike = Union[DiscreteKernel, PiecewiseKernel]


def kernel_from_dict(obj: dict) -> KernelLike:
    if not isinstance(obj, dict):
        raise ValidationError("kernel file: top level must be a JSON object")
    if "values" not in obj:
        raise ValidationError("kernel file: missing field 'values'")
    if any(key in obj for key in ("x_cuts", "y_cuts", "z_cuts")):
        fields = ("x_cuts", "y_cuts", "z_cuts")
        cls = PiecewiseKernel
    else:
        fields = ("p", "q", "r")
        cls = DiscreteKernel
    for f in fields:
        if f not in obj:
            raise ValidationError(f"kernel file: missing field '{f}'")
    try:
        arrays = [np.array(obj[f], dtype=float) for f in fields + ("values",)]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"kernel file: non-numeric or ragged array ({exc})") from None
    return cls(*arrays)


def kernel_from_json(text: str) -> KernelLike:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"kernel file: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return kernel_from_dict(obj)


def as_discrete(k: KernelLike) -> DiscreteKernel:
    return from_piecewise(k) if isinstance(k, PiecewiseKernel) else k


def format_functionals(k: DiscreteKernel) -> Tuple[str, str]:
    """Exact fractions when eligible, otherwise 12-digit decimals."""
    exact = exact_functionals(k)
    if exact is not None:
        return tuple(str(x) for x in exact)
    return f"{expectation(k):.12f}", f"{t_value(k):.12f}"


def random_kernel(rng: np.random.Generator, shape: Iterable[int],
                  dirichlet: float = 1.0) -> DiscreteKernel:
    """Random marginals (Dirichlet) and i.i.d. uniform values; for tests and sweeps."""
    mx, my, mz = shape
    return DiscreteKernel(
        rng.dirichlet(np.full(mx, dirichlet)),
        rng.dirichlet(np.full(my, dirichlet)),
        rng.dirichlet(np.full(mz, dirichlet)),
        rng.random((mx, my, mz)),
    )
