"""Boxings of the plane over F_2^n and the quantities defined on them.

A boxing fixes a subspace ``W`` and, for every outer box (a pair of coset
indices ``(cx, cy)``; the third coset is forced by ``x + y + z = 0``), three
partitions of the cosets ``W + x``, ``W + y`` and ``W + z`` into ``m``
possibly empty cells.  Partitions are stored as label arrays:
``labels[cx, cy, axis, l]`` is the cell holding the element of that axis's
coset with local coordinate ``l``.  Every element carries exactly one
label, so the covering and disjointness invariants hold by construction.

Inside an outer box with local coordinates ``l1`` (x) and ``l2`` (y) the
third coordinate is ``l1 ^ l2``.  The three "pair views" of A used below are

* ``bc[l1, l2] = A(x, y)``,
* ``bd[l1, l3] = A(x, x ^ z)``,
* ``cd[l2, l3] = A(y ^ z, y)``,

which are the bipartite graphs of the inner boxes ``B x C``, ``B x D`` and
``C x D``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from ..errors import DomainError, ValidationError
from ..groups import PlaneSet, census
from ..kernel import SCHEMA_VERSION, DiscreteKernel, t_value
from .subspace import Subspace

AXES = ("B", "C", "D")
PAIRS = (("BC", 0, 1), ("BD", 0, 2), ("CD", 1, 2))


class Boxing:
    def __init__(self, subspace: Subspace, m: int, labels: np.ndarray):
        k = subspace.num_cosets
        labels = np.asarray(labels)
        if m < 1:
            raise ValidationError("a boxing needs m >= 1")
        if labels.shape != (k, k, 3, subspace.size):
            raise ValidationError(
                f"label array has shape {labels.shape}, expected {(k, k, 3, subspace.size)}")
        if labels.size and (labels.min() < 0 or labels.max() >= m):
            raise ValidationError(f"cell labels must lie in [0, {m})")
        self.subspace = subspace
        self.m = int(m)
        self.labels = labels.astype(np.int16 if m < 2**15 else np.int32)
        self.labels.setflags(write=False)

    @classmethod
    def trivial(cls, n: int) -> "Boxing":
        w = Subspace.full(n)
        return cls(w, 1, np.zeros((1, 1, 3, w.size), dtype=np.int16))

    @property
    def n(self) -> int:
        return self.subspace.n

    @property
    def codim(self) -> int:
        return self.subspace.codim

    @property
    def num_cosets(self) -> int:
        return self.subspace.num_cosets

    @property
    def num_boxes(self) -> int:
        return self.num_cosets**2

    def boxes(self) -> Iterator[Tuple[int, int]]:
        k = self.num_cosets
        for cx in range(k):
            for cy in range(k):
                yield cx, cy

    def z_coset(self, cx: int, cy: int) -> int:
        w = self.subspace
        return int(w.coset_id[w.reps[cx] ^ w.reps[cy]])

    def coset_elements(self, cx: int, cy: int, axis: int) -> np.ndarray:
        c = (cx, cy, self.z_coset(cx, cy))[axis]
        return self.subspace.elements[c]

    def cells(self, cx: int, cy: int, axis: int) -> List[np.ndarray]:
        """Cells of one partition as sorted arrays of group elements."""
        elems = self.coset_elements(cx, cy, axis)
        lab = self.labels[cx, cy, axis]
        return [np.sort(elems[lab == i]) for i in range(self.m)]

    def cell_sizes(self) -> np.ndarray:
        """Array ``(K, K, 3, m)`` of cell cardinalities."""
        flat = self.labels.reshape(-1, self.subspace.size).astype(np.int64)
        offs = flat + self.m * np.arange(flat.shape[0])[:, None]
        counts = np.bincount(offs.ravel(), minlength=flat.shape[0] * self.m)
        return counts.reshape(*self.labels.shape[:3], self.m)

    def to_dict(self) -> dict:
        w = self.subspace
        boxes = []
        for cx, cy in self.boxes():
            reps = [int(w.reps[cx]), int(w.reps[cy]), int(w.reps[self.z_coset(cx, cy)])]
            entry = {"reps": reps}
            for axis, name in enumerate(AXES):
                entry[name] = [c.tolist() for c in self.cells(cx, cy, axis)]
            boxes.append(entry)
        return {"schema_version": SCHEMA_VERSION, "n": w.n, "basis": list(w.basis),
                "codim": w.codim, "m": self.m, "boxes": boxes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Boxing":
        for key in ("n", "basis", "m", "boxes"):
            if key not in d:
                raise ValidationError(f"boxing is missing field {key!r}")
        w = Subspace(int(d["n"]), d["basis"])
        if len(w.basis) != len(d["basis"]):
            raise ValidationError("basis vectors are not independent")
        m = int(d["m"])
        k = w.num_cosets
        if len(d["boxes"]) != k * k:
            raise ValidationError(f"expected {k * k} outer boxes, found {len(d['boxes'])}")
        labels = np.full((k, k, 3, w.size), -1, dtype=np.int32)
        for entry in d["boxes"]:
            reps = entry.get("reps")
            if reps is None or len(reps) != 3:
                raise ValidationError("outer box needs three coset representatives")
            cx, cy = int(w.coset_id[reps[0]]), int(w.coset_id[reps[1]])
            cz = int(w.coset_id[reps[0] ^ reps[1]])
            if int(w.coset_id[reps[2]]) != cz:
                raise ValidationError(f"outer box {reps} does not meet the plane")
            for axis, name in enumerate(AXES):
                cells = entry.get(name)
                if cells is None or len(cells) != m:
                    raise ValidationError(f"box {reps} needs {m} cells for partition {name}")
                coset = (cx, cy, cz)[axis]
                for i, cell in enumerate(cells):
                    cell = np.asarray(cell, dtype=np.int64)
                    if cell.size == 0:
                        continue
                    if cell.min() < 0 or cell.max() >= 1 << w.n or np.any(w.coset_id[cell] != coset):
                        raise ValidationError(f"cell {name}{i} of box {reps} leaves its coset")
                    loc = w.local[cell]
                    if np.unique(loc).size != loc.size or np.any(labels[cx, cy, axis, loc] >= 0):
                        raise ValidationError(f"cells of partition {name} in box {reps} overlap")
                    labels[cx, cy, axis, loc] = i
        if np.any(labels < 0):
            raise ValidationError("some partition does not cover its coset")
        return cls(w, m, labels)

    @classmethod
    def from_json(cls, text: str) -> "Boxing":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"boxing JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)

    def __eq__(self, other):
        return (isinstance(other, Boxing) and self.subspace == other.subspace
                and self.m == other.m and np.array_equal(self.labels, other.labels))


def check_set(A: PlaneSet, n: Optional[int] = None) -> np.ndarray:
    """Indicator matrix of A, insisting that A lives over vector(2, n)."""
    g = A.group
    if not g.is_binary:
        raise DomainError(f"regularity needs a group F_2^n, got {g.describe()}")
    if n is not None and g.order != 1 << n:
        raise DomainError(f"set lives over a group of order {g.order}, boxing over 2^{n}")
    return A.indicator


@dataclass
class BoxView:
    """The three pair views and partitions of a single outer box."""

    bc: np.ndarray
    bd: np.ndarray
    cd: np.ndarray
    labels: np.ndarray
    m: int

    @property
    def size(self) -> int:
        return self.bc.shape[0]

    def onehot(self) -> np.ndarray:
        return (self.labels[:, None, :] == np.arange(self.m)[None, :, None]).astype(float)

    def pair(self, name: str) -> np.ndarray:
        return {"BC": self.bc, "BD": self.bd, "CD": self.cd}[name]


def box_view(boxing: Boxing, indicator: np.ndarray, cx: int, cy: int) -> BoxView:
    w = boxing.subspace
    bc = indicator[np.ix_(w.elements[cx], w.elements[cy])]
    ar = np.arange(w.size)
    x_or = ar[:, None] ^ ar[None, :]
    return BoxView(bc=bc, bd=bc[ar[:, None], x_or], cd=bc[x_or, ar[:, None]],
                   labels=np.asarray(boxing.labels[cx, cy]), m=boxing.m)


def pair_counts(view: BoxView) -> dict:
    """Edge counts of A between every pair of cells, per pair type."""
    oh = view.onehot()
    out = {}
    for name, a, b in PAIRS:
        out[name] = oh[a] @ view.pair(name).astype(float) @ oh[b].T
    return out


@dataclass(frozen=True)
class EnergyPair:
    e1: float
    e2: float

    def __post_init__(self):
        for v in (self.e1, self.e2):
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValidationError(f"energy {v} outside [0, 1]")


def box_energies(view: BoxView) -> Tuple[float, float]:
    e1, e2 = _batch_energies(view.bc[None], view.labels[None], view.m)
    return float(e1), float(e2)


def _batch_energies(bc: np.ndarray, labels: np.ndarray, m: int) -> Tuple[float, float]:
    """Summed energies of a stack of boxes: ``bc (k, W, W)``, ``labels (k, 3, W)``."""
    wsize = bc.shape[-1]
    ar = np.arange(wsize)
    x_or = ar[:, None] ^ ar[None, :]
    views = {"BC": bc, "BD": bc[:, ar[:, None], x_or], "CD": bc[:, x_or, ar[:, None]]}
    oh = (labels[:, :, None, :] == np.arange(m)[None, None, :, None]).astype(float)
    sizes = oh.sum(axis=-1)
    e1 = ((sizes / wsize) ** 2).sum() / 3
    e2 = 0.0
    for name, a, b in PAIRS:
        cnt = oh[:, a] @ views[name].astype(float) @ oh[:, b].transpose(0, 2, 1)
        denom = sizes[:, a, :, None] * sizes[:, b, None, :]
        safe = np.where(denom > 0, denom, 1.0)
        e2 += np.where(denom > 0, cnt**2 / safe, 0.0).sum() / wsize**2
    return e1, e2 / 3


def energies(boxing: Boxing, A: PlaneSet) -> EnergyPair:
    ind = check_set(A, boxing.n)
    w = boxing.subspace
    k = w.num_cosets
    chunk = max(1, (1 << 22) // w.size**2)
    e1 = e2 = 0.0
    for cx in range(k):
        for start in range(0, k, chunk):
            cys = np.arange(start, min(k, start + chunk))
            bc = ind[w.elements[cx][:, None, None], w.elements[cys][None, :, :]].transpose(1, 0, 2)
            a, b = _batch_energies(bc, np.asarray(boxing.labels[cx, cys]), boxing.m)
            e1 += a
            e2 += b
    k2 = boxing.num_boxes
    return EnergyPair(float(min(1.0, e1 / k2)), float(min(1.0, e2 / k2)))


def box_density(boxing: Boxing, A: PlaneSet, cx: int, cy: int) -> float:
    """alpha(V): the share of the |W|^2 plane points of the box that lie in A."""
    ind = check_set(A, boxing.n)
    w = boxing.subspace
    return float(ind[np.ix_(w.elements[cx], w.elements[cy])].mean())


@dataclass
class BoxKernel:
    kernel: DiscreteKernel
    unclipped: np.ndarray
    alpha_v: float
    unclipped_expectation: float
    clipping_loss: float


def triple_counts(view: BoxView) -> np.ndarray:
    """``cnt[i, j, k]`` = number of plane points of A in ``B_i x C_j x D_k``."""
    w = view.size
    ar = np.arange(w)
    lb, lc, ld = view.labels
    m = view.m
    key = (lb[:, None] * m + lc[None, :]) * m + ld[ar[:, None] ^ ar[None, :]]
    return np.bincount(key[view.bc], minlength=m**3).reshape(m, m, m).astype(float)


def box_kernel(boxing: Boxing, A: PlaneSet, cx: int, cy: int) -> BoxKernel:
    """Kernel of cell densities whose T value predicts the corner count in the box.

    ``f'[i,j,k] = cnt_ijk |W| / (|B_i||C_j||D_k|)`` and the kernel holds
    ``min(1, f')``.  Empty cells get probability 0 and value 0.
    """
    ind = check_set(A, boxing.n)
    k = boxing.num_cosets
    if not (0 <= cx < k and 0 <= cy < k):
        raise DomainError(f"no outer box ({cx}, {cy}) in a boxing with {k} cosets")
    view = box_view(boxing, ind, cx, cy)
    w = view.size
    sizes = view.onehot().sum(axis=-1)
    cnt = triple_counts(view)
    vol = sizes[0][:, None, None] * sizes[1][None, :, None] * sizes[2][None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(vol > 0, cnt * w / np.where(vol > 0, vol, 1), 0.0)
    p, q, r = sizes / w
    weights = p[:, None, None] * q[None, :, None] * r[None, None, :]
    clipped = np.minimum(raw, 1.0)
    kern = DiscreteKernel(p, q, r, clipped)
    return BoxKernel(
        kernel=kern,
        unclipped=raw,
        alpha_v=float(view.bc.mean()),
        unclipped_expectation=float((weights * raw).sum()),
        clipping_loss=float((weights * (raw - clipped)).sum()),
    )


def box_corner_count(boxing: Boxing, A: PlaneSet, cx: int, cy: int) -> int:
    """Corners of A whose three vertices lie in the outer box (d = 0 included)."""
    view = box_view(boxing, check_set(A, boxing.n), cx, cy)
    bc = view.bc.astype(np.int64)
    return int((bc * (view.bd.astype(np.int64) @ view.cd.astype(np.int64).T)).sum())


@dataclass
class WithinCount:
    total: int
    degenerate: int

    @property
    def nondegenerate(self) -> int:
        return self.total - self.degenerate


def corners_within_W(A: PlaneSet, subspace: Subspace) -> WithinCount:
    """Corners of A with difference in W, via the census restricted to W."""
    check_set(A, subspace.n)
    ds = [int(d) for d in subspace.span]
    c = census(A, ds=ds)
    counts = c.counts[np.asarray(ds, dtype=np.int64)]
    return WithinCount(total=int(counts.sum()), degenerate=int(c.counts[0]))


@dataclass
class CountingReport:
    corners: int
    sum_t: float
    error_allowance: float
    bound: float
    holds: bool
    boxes: List[dict]

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "corners": self.corners, "sum_t": self.sum_t,
                "error_allowance": self.error_allowance, "allowance_note": "10*eps per outer box (engineering constant)",
                "bound": self.bound, "holds": self.holds, "boxes": self.boxes}


def counting_check(boxing: Boxing, A: PlaneSet, eps: float) -> CountingReport:
    """Compare the corners with d in W against the box kernels' T values."""
    within = corners_within_W(A, boxing.subspace)
    w3 = boxing.subspace.size**3
    rows = []
    sum_t = 0.0
    for cx, cy in boxing.boxes():
        bk = box_kernel(boxing, A, cx, cy)
        t = t_value(bk.kernel)
        sum_t += t
        rows.append({"box": [cx, cy], "alpha_v": bk.alpha_v, "t": t,
                     "alpha_v_fourth": bk.alpha_v**4,
                     "corner_density": box_corner_count(boxing, A, cx, cy) / w3})
    allowance = 10 * eps * boxing.num_boxes
    bound = (sum_t - allowance) * w3
    return CountingReport(within.total, sum_t, allowance, bound, within.total >= bound, rows)
