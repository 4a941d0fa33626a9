"""Search for kernels with small T at a prescribed expectation.

Multi-start projected gradient descent on the value tensor of a kernel with
fixed marginals.  The feasible set ``{v in [0,1]^shape : <w, v> = alpha}``
(``w = p x q x r``) has a one-parameter projection in the ``w``-weighted
metric, ``clip(t + lam, 0, 1)``, and ``lam`` is found by bisection.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, InvariantError, ValidationError
from .kernel import (
    DiscreteKernel,
    conditional_xy,
    conditional_xz,
    conditional_yz,
    expectation,
    t_value,
)

log = logging.getLogger(__name__)

EXPONENT_GAP = math.log(26 / 27) / math.log(3 / 4)
FEASIBILITY_TOL = 1e-10


def envelope(alpha: float) -> Tuple[float, float]:
    """Proven window ``(alpha^4, (27/26) alpha^(3+c))`` for the infimum of T.

    The upper value is clamped to 1, since T never exceeds 1.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha!r}")
    if alpha == 0.0:
        return 0.0, 0.0
    upper = (27 / 26) * alpha ** (3 + EXPONENT_GAP)
    return alpha**4, min(upper, 1.0)


def t_gradient(k: DiscreteKernel) -> np.ndarray:
    """Partial derivatives of T with respect to every entry of ``k.values``.

    Each entry enters exactly one cell of each conditional, so
    dT/dv[a,b,c] = p_a q_b r_c (S_xy[a,b] + S_xz[a,c] + S_yz[b,c]).
    """
    return k.weights * _natural_gradient(k)


def _natural_gradient(k: DiscreteKernel) -> np.ndarray:
    fxy, fxz, fyz = conditional_xy(k), conditional_xz(k), conditional_yz(k)
    s_xy = np.einsum("c,ac,bc->ab", k.r, fxz, fyz)
    s_xz = np.einsum("b,ab,bc->ac", k.q, fxy, fyz)
    s_yz = np.einsum("a,ab,ac->bc", k.p, fxy, fxz)
    return s_xy[:, :, None] + s_xz[:, None, :] + s_yz[None, :, :]


def _project_values(t: np.ndarray, w: np.ndarray, alpha: float) -> np.ndarray:
    def mass(lam):
        return float(np.sum(w * np.clip(t + lam, 0.0, 1.0)))

    lo, hi = -float(t.max()), 1.0 - float(t.min())
    if alpha <= 0.0:
        return np.clip(t + lo, 0.0, 1.0)
    if alpha >= 1.0:
        return np.clip(t + hi, 0.0, 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mass(mid) < alpha:
            lo = mid
        else:
            hi = mid
    lam = lo if abs(mass(lo) - alpha) <= abs(mass(hi) - alpha) else hi
    return np.clip(t + lam, 0.0, 1.0)


def project_feasible(t, marginals: Sequence[np.ndarray], alpha: float) -> DiscreteKernel:
    """Weighted Euclidean projection of a raw tensor onto the feasible set."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1] to be feasible, got {alpha!r}")
    p, q, r = (np.asarray(m, float) for m in marginals)
    t = np.asarray(t, float)
    w = np.einsum("i,j,k->ijk", p, q, r)
    if t.shape != w.shape:
        raise ValidationError(f"tensor shape {t.shape} does not match marginals {w.shape}")
    if np.all((t >= 0) & (t <= 1)) and abs(float(np.sum(w * t)) - alpha) <= FEASIBILITY_TOL:
        return DiscreteKernel(p, q, r, t)
    return DiscreteKernel(p, q, r, _project_values(t, w, alpha))


@dataclass(frozen=True)
class StepRule:
    """``kind`` is "backtracking" (Armijo) or "fixed"."""

    kind: str = "backtracking"
    initial: float = 1.0
    shrink: float = 0.5
    grow: float = 2.0
    armijo: float = 1e-4
    min_step: float = 1e-12
    max_step: float = 64.0


@dataclass(frozen=True)
class OptimizeConfig:
    alpha: float
    shape: Tuple[int, int, int] = (2, 2, 2)
    restarts: int = 20
    max_iters: int = 2000
    step_rule: StepRule = field(default_factory=StepRule)
    seed: int = 0
    tolerance: float = 1e-13
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if isinstance(self.step_rule, dict):
            object.__setattr__(self, "step_rule", StepRule(**self.step_rule))
        # alpha = 0 and alpha = 1 are admitted: both have a single feasible point
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise ValidationError(f"shape must be three positive ints, got {self.shape}")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValidationError("restarts and max_iters must be >= 1")
        if self.step_rule.kind not in ("backtracking", "fixed"):
            raise ValidationError(f"unknown step rule {self.step_rule.kind!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d


@dataclass
class RestartResult:
    index: int
    final_t: float
    iterations: int
    converged: bool
    values: np.ndarray = field(repr=False)


@dataclass
class OptimizeReport:
    config: OptimizeConfig
    best_kernel: DiscreteKernel
    best_t: float
    best_restart: int
    trajectory: List[dict]
    envelope: Tuple[float, float]
    violations: List[str]
    warnings: List[str]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "best_t": self.best_t,
            "best_restart": self.best_restart,
            "best_kernel": self.best_kernel.to_dict(),
            "trajectory": self.trajectory,
            "envelope": {"lower": self.envelope[0], "upper": self.envelope[1]},
            "violations": self.violations,
            "warnings": self.warnings,
        }


def _descend(k: DiscreteKernel, cfg: OptimizeConfig, index: int) -> RestartResult:
    rule = cfg.step_rule
    w = k.weights
    v = k.values.copy()
    t_cur = t_value(k)
    step = rule.initial
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        direction = _natural_gradient(k.with_values(v))
        grad = w * direction
        accepted = None
        s = step
        while s >= rule.min_step:
            cand = _project_values(v - s * direction, w, cfg.alpha)
            t_cand = t_value(k.with_values(cand))
            if rule.kind == "fixed":
                if t_cand <= t_cur:
                    accepted = cand, t_cand
                break
            if t_cand <= t_cur + rule.armijo * float(np.sum(grad * (cand - v))):
                accepted = cand, t_cand
                break
            s *= rule.shrink
        if accepted is None:
            converged = True
            break
        cand, t_cand = accepted
        decrease = t_cur - t_cand
        v, t_cur = cand, t_cand
        if rule.kind == "backtracking":
            step = min(s * rule.grow, rule.max_step)
        if decrease < cfg.tolerance:
            converged = True
            break
    return RestartResult(index, t_cur, it, converged, v)


def _starts(cfg: OptimizeConfig):
    mx, my, mz = cfg.shape
    marg = (np.full(mx, 1.0 / mx), np.full(my, 1.0 / my), np.full(mz, 1.0 / mz))
    yield project_feasible(np.full(cfg.shape, cfg.alpha), marg, cfg.alpha)
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = np.random.default_rng(child)
        yield project_feasible(rng.random(cfg.shape), marg, cfg.alpha)


def minimize_t(cfg: OptimizeConfig) -> OptimizeReport:
    """Restart 0 starts at the constant kernel; restarts 1..n from seeded random tensors."""
    starts = list(_starts(cfg))
    jobs = [(s, cfg, i) for i, s in enumerate(starts)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda a: _descend(*a), jobs))
    else:
        results = [_descend(*a) for a in jobs]

    best = min(results, key=lambda r: (r.final_t, r.index))
    best_kernel = starts[0].with_values(best.values)
    best_t = t_value(best_kernel)

    lower, upper = envelope(cfg.alpha)
    floor = max(lower, 3 * cfg.alpha - 2, cfg.alpha**4 / 256)
    violations, warnings = [], []
    if abs(expectation(best_kernel) - cfg.alpha) > FEASIBILITY_TOL:
        raise InvariantError(
            f"best kernel has expectation {expectation(best_kernel)!r}, target {cfg.alpha!r}")
    if best_t < floor - 1e-12:
        violations.append(f"best_t {best_t!r} below proven floor {floor!r}")
    if best_t > upper + 1e-12:
        msg = (f"best_t {best_t:.6g} above the proven upper envelope {upper:.6g}; "
               f"shape {cfg.shape} may be too coarse")
        warnings.append(msg)
        log.warning(msg)
    trajectory = [
        {"restart": r.index, "final_t": r.final_t, "iterations": r.iterations,
         "converged": r.converged}
        for r in results
    ]
    return OptimizeReport(cfg, best_kernel, best_t, best.index, trajectory,
                          (lower, upper), violations, warnings)


def parse_alpha_range(spec: str) -> List[float]:
    """``"start:stop:step"`` (inclusive stop) or a comma list."""
    if ":" in spec:
        start, stop, step = (float(s) for s in spec.split(":"))
        if step <= 0:
            raise DomainError("alpha step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(s) for s in spec.split(",") if s.strip()]


def sweep(alphas: Sequence[float], base: OptimizeConfig) -> List[dict]:
    rows = []
    for a in alphas:
        cfg = OptimizeConfig(**{**base.__dict__, "alpha": a})
        rep = minimize_t(cfg)
        rows.append({"alpha": a, "best_t": rep.best_t,
                     "lower": rep.envelope[0], "upper": rep.envelope[1]})
    return rows
