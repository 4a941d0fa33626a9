"""Uniformity and quasirandomness audits of a boxing.

Both audits are one-sided: a witness is a genuine violation, while "no
witness" means none was found.  For uniformity the search is complete
(every Walsh coefficient of every cell is computed).  Quasirandomness is
universally quantified over subset pairs, so the search covers a
structured family (degree extremes, vertex neighbourhoods and their
complements, alternating best responses) plus, when affordable, every
subset of the threshold size on the smaller side; larger boxes add random
subsets instead.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..groups import PlaneSet
from .boxing import PAIRS, Boxing, box_view, check_set
from .walsh import fwht

EXACT_MAX_CELLS = 1 << 20
EXACT_MAX_SIDE = 20
EXHAUSTIVE_BUDGET = 5 * 10**7
DEFAULT_SAMPLES = 10_000
NEIGHBOURHOOD_LIMIT = 256
TOL = 1e-12


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------- uniformity

@dataclass(frozen=True)
class UniformityWitness:
    box: Tuple[int, int]
    axis: int
    cell: int
    character: int
    coefficient: float


@dataclass
class UniformityAudit:
    eps: float
    m: int
    threshold: float
    num_boxes: int
    witnesses: List[UniformityWitness]
    max_coefficient: np.ndarray = field(repr=False)

    @property
    def failing_fraction(self) -> float:
        return len(self.witnesses) / self.num_boxes

    @property
    def holds(self) -> bool:
        return self.failing_fraction <= self.eps

    def to_dict(self) -> dict:
        return {"eps": self.eps, "m": self.m, "threshold": self.threshold,
                "num_boxes": self.num_boxes, "failing_fraction": self.failing_fraction,
                "holds": self.holds, "search": "complete",
                "witnesses": [{"box": list(w.box), "axis": "BCD"[w.axis], "cell": w.cell,
                               "character": w.character, "coefficient": w.coefficient}
                              for w in self.witnesses]}


def cell_coefficients(labels: np.ndarray, m: int) -> np.ndarray:
    """Walsh coefficients of every cell: ``labels (..., W)`` -> ``(..., m, W)``."""
    onehot = (labels[..., None, :] == np.arange(m)[:, None]).astype(np.int64)
    return fwht(onehot) / labels.shape[-1]


def uniformity_audit(boxing: Boxing, eps: float, threads: int = 1) -> UniformityAudit:
    """Largest nontrivial coefficient per box; witnesses where it reaches eps/m^3.

    The witness of a box is the (axis, cell, character) of largest
    magnitude; ties go to the first in (axis, cell, character) order.
    """
    m = boxing.m
    thr = eps / m**3
    k = boxing.num_cosets
    size = boxing.subspace.size

    def row(cx):
        coef = cell_coefficients(np.asarray(boxing.labels[cx]), m)  # (k, 3, m, W)
        mag = np.abs(coef)
        mag[..., 0] = 0.0
        flat = mag.reshape(k, -1)
        best = flat.argmax(axis=1)
        out = []
        for cy in range(k):
            b = int(best[cy])
            val = float(flat[cy, b])
            axis, rest = divmod(b, m * size)
            cell, char = divmod(rest, size)
            out.append((val, UniformityWitness((cx, cy), axis, cell, char, float(coef[cy, axis, cell, char]))))
        return out

    rows = _map(row, list(range(k)), threads)
    maxima = np.array([[v for v, _ in r] for r in rows]).reshape(k, k)
    witnesses = [w for r in rows for v, w in r if v >= thr - TOL]
    return UniformityAudit(eps, m, thr, boxing.num_boxes, witnesses, maxima)


# ----------------------------------------------------------- quasirandomness

@dataclass(frozen=True)
class DensityWitness:
    rows: np.ndarray
    cols: np.ndarray
    density: float
    base_density: float

    @property
    def deviation(self) -> float:
        return abs(self.density - self.base_density)


@dataclass
class SearchResult:
    witness: Optional[DensityWitness]
    mode: str
    complete: bool


def _threshold(eps: float, n: int) -> int:
    return min(n, max(1, math.ceil(eps * n - 1e-9)))


class _Search:
    """Best found subset pair of an (nb x nc) 0/1 matrix, both directions."""

    def __init__(self, M: np.ndarray, eps: float):
        self.M = M.astype(np.float32)
        self.nb, self.nc = M.shape
        self.kb = _threshold(eps, self.nb)
        self.kc = _threshold(eps, self.nc)
        self.base = float(M.mean())
        self.eps = eps
        self.best: Optional[Tuple[float, np.ndarray, np.ndarray, float]] = None

    def _offer(self, dev, rows, cols, dens):
        if self.best is None or dev > self.best[0] + 1e-15:
            self.best = (dev, np.sort(rows), np.sort(cols), dens)

    def rows_batch(self, R: np.ndarray):
        """Each row of the 0/1 matrix R is a row subset of size kb; pick best columns."""
        if R.shape[0] == 0:
            return
        sums = R.astype(np.float32) @ self.M
        self._respond(sums, R, self.kc, self.nc, transpose=False)

    def cols_batch(self, C: np.ndarray):
        if C.shape[0] == 0:
            return
        sums = C.astype(np.float32) @ self.M.T
        self._respond(sums, C, self.kb, self.nb, transpose=True)

    def _respond(self, sums, S, k, n, transpose):
        size = S.sum(axis=1)
        order = np.argsort(-sums, axis=1, kind="stable")
        top = np.take_along_axis(sums, order[:, :k], axis=1).sum(axis=1) / (size * k)
        bot = np.take_along_axis(sums, order[:, n - k:], axis=1).sum(axis=1) / (size * k)
        dev_hi = top - self.base
        dev_lo = self.base - bot
        for idx in np.argsort(-np.maximum(dev_hi, dev_lo))[:2]:
            hi = dev_hi[idx] >= dev_lo[idx]
            pick = order[idx, :k] if hi else order[idx, n - k:]
            chosen = np.flatnonzero(S[idx])
            dens = float(top[idx] if hi else bot[idx])
            rows, cols = (pick, chosen) if transpose else (chosen, pick)
            self._offer(float(max(dev_hi[idx], dev_lo[idx])), rows, cols, dens)

    def _indicator(self, subsets, n):
        R = np.zeros((len(subsets), n), dtype=np.float32)
        for i, s in enumerate(subsets):
            R[i, s] = 1
        return R

    def structured(self):
        M = self.M
        kb, kc, nb, nc = self.kb, self.kc, self.nb, self.nc
        rdeg = M.sum(axis=1)
        cdeg = M.sum(axis=0)
        ro = np.argsort(-rdeg, kind="stable")
        co = np.argsort(-cdeg, kind="stable")
        self.rows_batch(self._indicator([ro[:kb], ro[nb - kb:]], nb))
        self.cols_batch(self._indicator([co[:kc], co[nc - kc:]], nc))
        # neighbourhoods of sampled vertices and their complements
        rsel = np.unique(np.linspace(0, nb - 1, min(nb, NEIGHBOURHOOD_LIMIT)).astype(int))
        csel = np.unique(np.linspace(0, nc - 1, min(nc, NEIGHBOURHOOD_LIMIT)).astype(int))
        for nbhd in (M[rsel], 1 - M[rsel]):
            keep = nbhd.sum(axis=1) >= kc
            self.cols_batch(nbhd[keep])
        for nbhd in (M[:, csel].T, 1 - M[:, csel].T):
            keep = nbhd.sum(axis=1) >= kb
            self.rows_batch(nbhd[keep])
        self._alternate()

    def _alternate(self, rounds: int = 4):
        if self.best is None:
            return
        for _ in range(rounds):
            before = self.best[0]
            _, rows, cols, _ = self.best
            self.rows_batch(self._indicator([rows], self.nb))
            self.cols_batch(self._indicator([cols], self.nc))
            if self.best[0] <= before + 1e-15:
                break

    def exhaustive_cost(self) -> Tuple[int, bool]:
        small_rows = self.nb <= self.nc
        s, k, other = (self.nb, self.kb, self.nc) if small_rows else (self.nc, self.kc, self.nb)
        return math.comb(s, k) * other, small_rows

    def exhaustive(self, small_rows: bool, chunk: int = 4096):
        s, k = (self.nb, self.kb) if small_rows else (self.nc, self.kc)
        combos = combinations(range(s), k)
        while True:
            block = [c for _, c in zip(range(chunk), combos)]
            if not block:
                break
            S = self._indicator([list(c) for c in block], s)
            (self.rows_batch if small_rows else self.cols_batch)(S)

    def sampled(self, rng: np.random.Generator, samples: int, chunk: int = 1024):
        for start in range(0, samples, chunk):
            b = min(chunk, samples - start)
            keys = rng.random((b, self.nb))
            idx = np.argpartition(keys, self.kb - 1, axis=1)[:, :self.kb]
            R = np.zeros((b, self.nb), dtype=np.float32)
            np.put_along_axis(R, idx, 1, axis=1)
            self.rows_batch(R)
        self._alternate()

    def result(self) -> Optional[DensityWitness]:
        if self.best is None or self.best[0] < self.eps - TOL:
            return None
        _, rows, cols, _ = self.best
        # recompute exactly from the original matrix
        sub = self.M[np.ix_(rows, cols)]
        dens = float(sub.sum(dtype=np.float64) / sub.size)
        if abs(dens - self.base) < self.eps - TOL:
            return None
        return DensityWitness(rows, cols, dens, self.base)


def density_witness(M: np.ndarray, eps: float, *, rng: Optional[np.random.Generator] = None,
                    samples: int = DEFAULT_SAMPLES) -> SearchResult:
    """Look for ``B', C'`` of relative sizes >= eps whose density deviates by >= eps.

    EXACT mode (at most 2^20 cells and smaller side <= 20) searches the
    structured family and, when the enumeration fits the budget, every
    threshold-size subset of the smaller side with its optimal partner, which
    makes the search complete.  SAMPLED mode replaces the enumeration with
    ``samples`` random threshold-size row sets, each with its optimal columns.
    """
    M = np.asarray(M, dtype=bool)
    nb, nc = M.shape
    exact = nb * nc <= EXACT_MAX_CELLS and min(nb, nc) <= EXACT_MAX_SIDE
    mode = "exact" if exact else "sampled"
    if nb == 0 or nc == 0:
        return SearchResult(None, mode, True)
    base = M.mean()
    if base == 0.0 or base == 1.0:
        return SearchResult(None, mode, True)
    s = _Search(M, eps)
    cost, small_rows = s.exhaustive_cost()
    complete = cost <= EXHAUSTIVE_BUDGET
    if complete:
        # the optimum over pairs is attained at the threshold sizes, so
        # enumerating one side at its threshold with the best partner is complete
        s.exhaustive(small_rows)
    else:
        s.structured()
        if not exact:
            s.sampled(rng if rng is not None else np.random.default_rng(0), samples)
    return SearchResult(s.result(), mode, complete)


@dataclass(frozen=True)
class QuasirandomWitness:
    box: Tuple[int, int]
    pair: str
    i: int
    j: int
    rows: np.ndarray  # local coordinates of B' inside W
    cols: np.ndarray
    density: float
    base_density: float
    mass: float  # |S_i||S_j| / |W|^2

    @property
    def deviation(self) -> float:
        return abs(self.density - self.base_density)


@dataclass
class BoxQuasirandomness:
    box: Tuple[int, int]
    witnesses: List[QuasirandomWitness]
    bad_mass: Dict[str, float]
    modes: Dict[str, int]
    complete: bool

    def fails(self, eps: float) -> bool:
        return max(self.bad_mass.values()) > eps


@dataclass
class QuasirandomAudit:
    eps: float
    num_boxes: int
    boxes: List[BoxQuasirandomness]

    @property
    def failing(self) -> List[BoxQuasirandomness]:
        return [b for b in self.boxes if b.fails(self.eps)]

    @property
    def failing_fraction(self) -> float:
        return len(self.failing) / self.num_boxes

    @property
    def holds(self) -> bool:
        return self.failing_fraction <= self.eps

    @property
    def witnesses(self) -> List[QuasirandomWitness]:
        return [w for b in self.boxes for w in b.witnesses]

    def to_dict(self) -> dict:
        modes: Dict[str, int] = {}
        for b in self.boxes:
            for k, v in b.modes.items():
                modes[k] = modes.get(k, 0) + v
        return {"eps": self.eps, "num_boxes": self.num_boxes,
                "failing_fraction": self.failing_fraction, "holds": self.holds,
                "search": "one-sided: a pass means no witness was found",
                "inner_boxes_by_mode": modes,
                "all_searches_complete": all(b.complete for b in self.boxes),
                "witnesses": [{"box": list(w.box), "pair": w.pair, "i": w.i, "j": w.j,
                               "rows": w.rows.tolist(), "cols": w.cols.tolist(),
                               "density": w.density, "base_density": w.base_density}
                              for w in self.witnesses]}


def box_quasirandomness(boxing: Boxing, indicator: np.ndarray, cx: int, cy: int, eps: float,
                        seed: int = 0, samples: int = DEFAULT_SAMPLES) -> BoxQuasirandomness:
    view = box_view(boxing, indicator, cx, cy)
    wsq = view.size**2
    witnesses = []
    bad = {}
    modes: Dict[str, int] = {}
    complete = True
    cells = []
    for lab in view.labels:
        order = np.argsort(lab, kind="stable")
        cells.append(np.split(order, np.cumsum(np.bincount(lab, minlength=boxing.m))[:-1]))
    for p, (name, a, b) in enumerate(PAIRS):
        mat = view.pair(name)
        bad[name] = 0.0
        for i, rows in enumerate(cells[a]):
            if rows.size == 0:
                continue
            for j, cols in enumerate(cells[b]):
                if cols.size == 0:
                    continue
                sub = mat[rows][:, cols]
                if rows.size * cols.size == 1 or sub.all() or not sub.any():
                    # constant boxes admit no deviation at all
                    modes["constant"] = modes.get("constant", 0) + 1
                    continue
                rng = np.random.default_rng([seed, cx, cy, p, i, j])
                res = density_witness(sub, eps, rng=rng, samples=samples)
                modes[res.mode] = modes.get(res.mode, 0) + 1
                complete &= res.complete
                if res.witness is None:
                    continue
                mass = rows.size * cols.size / wsq
                bad[name] += mass
                w = res.witness
                witnesses.append(QuasirandomWitness((cx, cy), name, i, j, rows[w.rows], cols[w.cols],
                                                    w.density, w.base_density, mass))
    return BoxQuasirandomness((cx, cy), witnesses, bad, modes, complete)


def quasirandom_audit(boxing: Boxing, A: PlaneSet, eps: float, seed: int = 0,
                      samples: int = DEFAULT_SAMPLES, threads: int = 1) -> QuasirandomAudit:
    """Witness search in every inner box of every outer box.

    An outer box fails when, for some pair type, the inner boxes with a
    witness carry more than an eps share of its plane points.
    """
    ind = check_set(A, boxing.n)
    boxes = list(boxing.boxes())
    if boxing.subspace.size == 1:
        # every inner box is a single point
        empty = {name: 0.0 for name, _, _ in PAIRS}
        return QuasirandomAudit(eps, boxing.num_boxes,
                                [BoxQuasirandomness(b, [], dict(empty), {"constant": 3}, True) for b in boxes])
    res = _map(lambda b: box_quasirandomness(boxing, ind, b[0], b[1], eps, seed, samples), boxes, threads)
    return QuasirandomAudit(eps, boxing.num_boxes, res)
