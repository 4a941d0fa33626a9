"""Energy-increment refinements and the search for a regular boxing.

``refine_A`` shrinks the subspace to the common kernel of the witness
characters of all non-uniform boxes and restricts every partition; ``refine_B``
keeps the subspace and splits cells along density witnesses.  Each call
checks its guaranteed energy change and raises :class:`InvariantError` if
the arithmetic ever disagrees.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import DomainError, InvariantError, ResourceError
from ..groups import PlaneSet
from ..kernel import SCHEMA_VERSION
from .audit import (DEFAULT_SAMPLES, QuasirandomAudit, UniformityAudit, quasirandom_audit,
                    uniformity_audit)
from .boxing import PAIRS, Boxing, EnergyPair, check_set, energies

ENERGY_TOL = 1e-12


@dataclass(frozen=True)
class Caps:
    n: int = 12
    codim: int = 8
    m: int = 64


@dataclass
class StepReport:
    op: str
    before: EnergyPair
    after: EnergyPair
    certified: float
    guaranteed: Optional[float]
    failing_fraction: float
    m_before: int
    m_after: int
    codim_before: int
    codim_after: int


def _restrict(boxing: Boxing, sub) -> Boxing:
    """Restrict every partition of ``boxing`` to the cosets of a smaller subspace."""
    old = boxing.subspace
    new_k = sub.num_cosets
    reps = sub.reps
    cx_new = np.arange(new_k)[:, None]
    cy_new = np.arange(new_k)[None, :]
    rx, ry = reps[cx_new], reps[cy_new]
    rz = rx ^ ry
    ox, oy = old.coset_id[rx], old.coset_id[ry]  # (k, k) after broadcasting
    ox, oy = np.broadcast_arrays(ox, oy)
    labels = np.empty((new_k, new_k, 3, sub.size), dtype=boxing.labels.dtype)
    span = sub.span
    for axis, r in enumerate((np.broadcast_to(rx, ox.shape), np.broadcast_to(ry, ox.shape), rz)):
        elems = r[..., None] ^ span  # (k, k, |W'|)
        labels[:, :, axis, :] = boxing.labels[ox[..., None], oy[..., None], axis, old.local[elems]]
    return Boxing(sub, boxing.m, labels)


def refine_A(boxing: Boxing, A: PlaneSet, eps: float, caps: Caps = Caps(),
             audit: Optional[UniformityAudit] = None, report: Optional[list] = None) -> Boxing:
    """Pass to the common kernel of the witness characters of all failing boxes."""
    check_set(A, boxing.n)
    audit = audit if audit is not None else uniformity_audit(boxing, eps)
    if not audit.witnesses:
        raise DomainError("refine_A needs at least one non-uniform outer box")
    chars = sorted({w.character for w in audit.witnesses})
    sub = boxing.subspace.kernel(chars)
    if sub.codim > caps.codim:
        raise ResourceError(f"refinement would raise codim to {sub.codim} > cap {caps.codim}",
                            partial=boxing)
    before = energies(boxing, A)
    out = _restrict(boxing, sub)
    after = energies(out, A)
    k2 = boxing.num_boxes
    certified = sum(w.coefficient**2 for w in audit.witnesses) / (3 * k2)
    guaranteed = eps**3 / (12 * boxing.m**6) if audit.failing_fraction > eps else None
    gain = after.e1 - before.e1
    if gain < certified - ENERGY_TOL or (guaranteed is not None and gain < guaranteed - ENERGY_TOL):
        raise InvariantError(f"E1 rose by {gain}, certified {certified}, guaranteed {guaranteed}")
    if after.e2 < before.e2 - ENERGY_TOL:
        raise InvariantError(f"E2 fell from {before.e2} to {after.e2} under refine_A")
    if out.m != boxing.m:
        raise InvariantError("refine_A changed m")
    if report is not None:
        report.append(StepReport("refine_A", before, after, certified, guaranteed,
                                 audit.failing_fraction, boxing.m, out.m, boxing.codim, out.codim))
    return out


def refine_B(boxing: Boxing, A: PlaneSet, eps: float, caps: Caps = Caps(),
             audit: Optional[QuasirandomAudit] = None, report: Optional[list] = None,
             seed: int = 0, samples: int = DEFAULT_SAMPLES) -> Boxing:
    """Split cells along density witnesses.

    When condition (2) fails the witnesses of the failing outer boxes are
    used; otherwise every witness found.  Each cell is replaced by the atoms
    of the witness subsets inside it, and partitions are padded with empty
    cells to a common size.
    """
    check_set(A, boxing.n)
    audit = audit if audit is not None else quasirandom_audit(boxing, A, eps, seed=seed, samples=samples)
    cond_fails = not audit.holds
    chosen = audit.failing if cond_fails else [b for b in audit.boxes if b.witnesses]
    witnesses = [w for b in chosen for w in b.witnesses]
    if not witnesses:
        raise DomainError("refine_B needs at least one density witness")

    by_axis: Dict[Tuple[int, int, int], List[np.ndarray]] = {}
    axes = {name: (a, b) for name, a, b in PAIRS}
    for w in witnesses:
        a, b = axes[w.pair]
        by_axis.setdefault((*w.box, a), []).append(w.rows)
        by_axis.setdefault((*w.box, b), []).append(w.cols)

    size = boxing.subspace.size
    new_parts = {}
    m_new = boxing.m
    for key, subsets in by_axis.items():
        sig = np.zeros((size, 1 + len(subsets)), dtype=np.int64)
        sig[:, 0] = boxing.labels[key]
        for t, s in enumerate(subsets):
            sig[s, 1 + t] = 1
        _, relabel = np.unique(sig, axis=0, return_inverse=True)
        relabel = relabel.ravel()
        new_parts[key] = relabel
        m_new = max(m_new, int(relabel.max()) + 1)
    if m_new > caps.m:
        raise ResourceError(f"refinement would raise m to {m_new} > cap {caps.m}", partial=boxing)
    labels = np.array(boxing.labels, dtype=np.int32)
    for key, relabel in new_parts.items():
        labels[key] = relabel
    out = Boxing(boxing.subspace, m_new, labels)

    before = energies(boxing, A)
    after = energies(out, A)
    k2 = boxing.num_boxes
    certified = sum(w.rows.size * w.cols.size / size**2 * w.deviation**2 for w in witnesses) / (3 * k2)
    guaranteed = eps**6 / 3 if cond_fails else None
    gain = after.e2 - before.e2
    if gain < certified - ENERGY_TOL or (guaranteed is not None and gain < guaranteed * (1 - 1e-9) - ENERGY_TOL):
        raise InvariantError(f"E2 rose by {gain}, certified {certified}, guaranteed {guaranteed}")
    if report is not None:
        report.append(StepReport("refine_B", before, after, certified, guaranteed,
                                 audit.failing_fraction, boxing.m, out.m, boxing.codim, out.codim))
    return out


@dataclass
class TrajectoryRow:
    step: int
    phase: str
    op: str
    codim: int
    m: int
    e1: float
    e2: float


@dataclass
class RegularityResult:
    success: bool
    boxing: Boxing
    trajectory: List[TrajectoryRow]
    steps: List[StepReport]
    uniformity: Optional[UniformityAudit]
    quasirandomness: Optional[QuasirandomAudit]
    diagnostic: str
    eps: float
    caps: Caps = field(default_factory=Caps)

    @property
    def refine_b_calls(self) -> int:
        return sum(1 for s in self.steps if s.op == "refine_B")

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,phase,op,codim,m,e1,e2\n")
        for r in self.trajectory:
            buf.write(f"{r.step},{r.phase},{r.op},{r.codim},{r.m},{r.e1!r},{r.e2!r}\n")
        return buf.getvalue()

    def audit_report(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "success": self.success, "eps": self.eps,
                "caps": asdict(self.caps), "diagnostic": self.diagnostic,
                "codim": self.boxing.codim, "m": self.boxing.m,
                "refine_A_calls": len(self.steps) - self.refine_b_calls,
                "refine_B_calls": self.refine_b_calls,
                "uniformity": self.uniformity.to_dict() if self.uniformity else None,
                "quasirandomness": self.quasirandomness.to_dict() if self.quasirandomness else None}


def find_regular_boxing(A: PlaneSet, eps: float, caps: Caps = Caps(), seed: int = 0,
                        samples: int = DEFAULT_SAMPLES, threads: int = 1) -> RegularityResult:
    """Two-phase energy increment starting from the trivial boxing.

    Phase i refines along density witnesses while condition (2) fails;
    phase ii refines the subspace while condition (1) fails, then control
    returns to phase i.  Cap exhaustion ends the run with a diagnostic.
    """
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    g = A.group
    check_set(A)
    n = g.order.bit_length() - 1
    if n > caps.n:
        raise ResourceError(f"n = {n} exceeds the cap {caps.n}")
    boxing = Boxing.trivial(n)
    steps: List[StepReport] = []
    e = energies(boxing, A)
    traj = [TrajectoryRow(0, "start", "start", 0, 1, e.e1, e.e2)]
    max_b = math.ceil(3 / eps**6)

    def record(phase):
        s = steps[-1]
        traj.append(TrajectoryRow(len(traj), phase, s.op, s.codim_after, s.m_after, s.after.e1, s.after.e2))

    def done(success, msg, ua=None, qa=None):
        return RegularityResult(success, boxing, traj, steps, ua, qa, msg, eps, caps)

    n_b = 0
    while True:
        while True:
            qa = quasirandom_audit(boxing, A, eps, seed=seed, samples=samples, threads=threads)
            if qa.holds:
                break
            if n_b >= max_b:
                raise InvariantError(f"more than {max_b} density refinements")
            try:
                boxing = refine_B(boxing, A, eps, caps, audit=qa, report=steps)
            except ResourceError as exc:
                return done(False, str(exc), qa=qa)
            n_b += 1
            record("i")
        ua = uniformity_audit(boxing, eps, threads=threads)
        if ua.holds:
            return done(True, "both regularity conditions hold", ua, qa)
        max_a = math.ceil(12 * boxing.m**6 / eps**3)
        n_a = 0
        while not ua.holds:
            if n_a >= max_a:
                raise InvariantError(f"more than {max_a} subspace refinements in one phase")
            try:
                boxing = refine_A(boxing, A, eps, caps, audit=ua, report=steps)
            except ResourceError as exc:
                return done(False, str(exc), ua=ua)
            n_a += 1
            record("ii")
            ua = uniformity_audit(boxing, eps, threads=threads)
