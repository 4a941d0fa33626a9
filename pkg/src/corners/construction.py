"""Random subsets of the plane built from a kernel, and their corner statistics.

Every group element ``g`` gets three independent labels ``X_g ~ p``,
``Y_g ~ q``, ``Z_g ~ r``; the point ``(x, y, -x-y)`` then joins ``A`` with
probability ``values[X_x, Y_y, Z_{-x-y}]``.  The expected density is E(f)
and every nondegenerate corner lies in ``A`` with probability T(f).

Randomness: ``SeedSequence(seed).spawn(2)`` gives a label stream and a coin
stream; the coin stream is spawned again into one child per row ``x``, so
rows can be filled in any order or in parallel with identical output.
All generators are numpy ``PCG64``.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError
from .groups import FiniteAbelianGroup, PlaneSet, census, max_popular_difference
from .kernel import DiscreteKernel, expectation, t_value

GENERATOR = f"numpy {np.__version__} PCG64 via SeedSequence; split: spawn(2) -> labels, coins; coins.spawn(N) -> rows"


def slack(n: int) -> float:
    """Allowance for finite-N fluctuation of a census density: 5 sqrt(log N / N)."""
    return 5.0 * math.sqrt(math.log(n) / n)


def _draw_labels(rng: np.random.Generator, marginal: np.ndarray, size) -> np.ndarray:
    cdf = np.cumsum(marginal)
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    # u just below 1 can land past a cdf that rounds to 1 - ulp
    last = np.flatnonzero(marginal > 0)[-1]
    return np.minimum(idx, last)


def sample_set(k: DiscreteKernel, group: FiniteAbelianGroup, seed: int) -> PlaneSet:
    n = group.order
    label_ss, coin_ss = np.random.SeedSequence(seed).spawn(2)
    lab = np.random.Generator(np.random.PCG64(label_ss))
    X = _draw_labels(lab, k.p, n)
    Y = _draw_labels(lab, k.q, n)
    Z = _draw_labels(lab, k.r, n)
    xs = np.arange(n)
    ind = np.empty((n, n), dtype=bool)
    for x, child in zip(xs, coin_ss.spawn(n)):
        zs = group.neg(group.add(np.full(n, x), xs))
        prob = k.values[X[x], Y, Z[zs]]
        ind[x] = np.random.Generator(np.random.PCG64(child)).random(n) < prob
    return PlaneSet(group, ind)


def corner_probability_check(k: DiscreteKernel, group: FiniteAbelianGroup, seed: int,
                             trials: int) -> float:
    """Monte-Carlo estimate of P(corner in A) with fresh labels per trial.

    Each trial picks a corner ``(x+d,y,z), (x,y+d,z), (x,y,z+d)`` with
    ``x+y+z+d = 0`` whose six coordinates ``x, x+d, y, y+d, z, z+d`` are
    distinct, draws the six labels it depends on and flips its three coins.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    n = group.order
    if n < 7:
        raise DomainError(f"group of order {n} is too small for six distinct coordinates")
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    batch = 1 << 18
    while done < trials:
        m = min(batch, trials - done)
        x = rng.integers(0, n, m)
        y = rng.integers(0, n, m)
        d = rng.integers(1, n, m)
        z = group.neg(group.add(group.add(x, y), d))
        coords = np.stack([x, group.add(x, d), y, group.add(y, d), z, group.add(z, d)], axis=1)
        srt = np.sort(coords, axis=1)
        ok = np.all(srt[:, 1:] != srt[:, :-1], axis=1)
        m = int(ok.sum())
        if m == 0:
            continue
        m = min(m, trials - done)
        xa, xb = _draw_labels(rng, k.p, m), _draw_labels(rng, k.p, m)
        ya, yb = _draw_labels(rng, k.q, m), _draw_labels(rng, k.q, m)
        za, zb = _draw_labels(rng, k.r, m), _draw_labels(rng, k.r, m)
        coins = rng.random((3, m))
        inside = ((coins[0] < k.values[xb, ya, za])
                  & (coins[1] < k.values[xa, yb, za])
                  & (coins[2] < k.values[xa, ya, zb]))
        hits += int(inside.sum())
        done += m
    return hits / trials


@dataclass
class ConstructionReport:
    group: str
    seed: int
    kernel_sha256: str
    generator: str
    realized_alpha: float
    kernel_alpha: float
    t_target: float
    max_nonzero_census_density: float
    argmax_d: int
    slack: float
    fraction_within_slack: float
    success: bool
    histogram: dict
    densities: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("densities")
        d["schema_version"] = 1
        d["naive_cube"] = self.realized_alpha**3
        return d

    def densities_csv(self) -> str:
        buf = io.StringIO()
        buf.write("d_index,density\n")
        for d, v in enumerate(self.densities):
            buf.write(f"{d},{v!r}\n")
        return buf.getvalue()


def run_experiment(k: DiscreteKernel, group: FiniteAbelianGroup, seed: int,
                   threads: int = 1, keep_set: bool = False):
    """Sample A, take its full census and compare max_{d != 0} |S_d|/N^2 with T.

    Returns the report, plus the sampled set when ``keep_set`` is True.
    """
    n = group.order
    if n < 16:
        raise DomainError(f"experiments need N >= 16, got {n}")
    A = sample_set(k, group, seed)
    c = census(A, threads=threads)
    dens = c.densities()
    d_star, _ = max_popular_difference(c)
    t = t_value(k)
    s = slack(n)
    nonzero = dens[1:]
    within = float(np.mean(np.abs(nonzero - t) <= s))
    counts, edges = np.histogram(nonzero, bins=20, range=(0.0, 1.0))
    report = ConstructionReport(
        group=group.describe(),
        seed=seed,
        kernel_sha256=k.digest(),
        generator=GENERATOR,
        realized_alpha=A.density,
        kernel_alpha=expectation(k),
        t_target=t,
        max_nonzero_census_density=float(dens[d_star]),
        argmax_d=d_star,
        slack=s,
        fraction_within_slack=within,
        success=bool(dens[d_star] <= t + s),
        histogram={"edges": edges.tolist(), "counts": counts.tolist()},
        densities=dens,
    )
    return (report, A) if keep_set else report
