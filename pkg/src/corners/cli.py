"""Command-line entry point: ``corners <subcommand> ...``.

Every run emits a manifest (configuration, seed, input hashes, version and
wall time) as one JSON line on stderr, or to ``--manifest PATH``.  Kernel
inputs may be ``-`` for stdin and outputs default to stdout, so kernel
transforms can be piped into ``tfunc eval``.

Exit codes: 0 success, 1 validation or domain error, 2 resource cap or
regularity diagnostic, 3 internal invariant failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .construction import run_experiment
from .errors import CornersError, ValidationError
from .groups import FiniteAbelianGroup, PlaneSet, census, census_oracle, max_popular_difference, random_plane_set
from .kernel import (SCHEMA_VERSION, DiscreteKernel, as_discrete, disagreement_kernel, epsilon_mix,
                     format_functionals, kernel_from_json, scale, tensor_power, to_piecewise)
from .optimizer import OptimizeConfig, StepRule, minimize_t, parse_alpha_range, sweep

CSV_HEADER = f"# schema_version={SCHEMA_VERSION}\n"


class _Run:
    """Collects inputs and outputs of one invocation for the manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs: Dict[str, str] = {}

    def read(self, path: str) -> str:
        if path == "-":
            data = sys.stdin.read()
        else:
            try:
                with open(path, encoding="utf-8") as fh:
                    data = fh.read()
            except OSError as exc:
                raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
        self.inputs[path] = hashlib.sha256(data.encode()).hexdigest()
        return data

    def write(self, path: Optional[str], text: str) -> None:
        if path is None or path == "-":
            sys.stdout.write(text)
            sys.stdout.flush()
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _kernel(run: _Run, path: str) -> DiscreteKernel:
    return as_discrete(kernel_from_json(run.read(path)))


def _shape(text: str):
    try:
        shape = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like 2,2,2, got {text!r}") from None
    if len(shape) != 3 or min(shape) < 1:
        raise argparse.ArgumentTypeError(f"shape needs three positive sizes, got {text!r}")
    return shape


# -- tfunc -------------------------------------------------------------------

def cmd_tfunc(run: _Run) -> int:
    a = run.args
    if a.action == "preset":
        k = disagreement_kernel() if a.name == "disagreement" else DiscreteKernel.constant(a.value)
        run.write(a.output, _json(k.to_dict()))
        return 0
    k = _kernel(run, a.kernel)
    if a.action == "eval":
        alpha, t = format_functionals(k)
        run.write(a.output, f"alpha = {alpha}, T = {t}\n")
        return 0
    if a.action == "tensor":
        out = tensor_power(k, a.n)
    elif a.action == "scale":
        out = scale(k, a.beta)
    elif a.action == "mix":
        out = epsilon_mix(k, a.eps)
    else:
        out = to_piecewise(k) if a.to == "piecewise" else k
    run.write(a.output, _json(out.to_dict()))
    return 0


# -- optimize ----------------------------------------------------------------

def _opt_config(a, alpha: float) -> OptimizeConfig:
    return OptimizeConfig(alpha=alpha, shape=a.shape, restarts=a.restarts, max_iters=a.max_iters,
                          step_rule=StepRule(kind=a.step), seed=a.seed, tolerance=a.tolerance,
                          workers=a.threads)


def cmd_optimize(run: _Run) -> int:
    a = run.args
    if a.action == "single":
        rep = minimize_t(_opt_config(a, a.alpha))
        run.write(a.output, _json(rep.to_dict()))
        return 0
    rows = sweep(parse_alpha_range(a.alphas), _opt_config(a, 0.5))
    lines = [CSV_HEADER, "alpha,best_t,alpha4,upper\n"]
    lines += [f"{r['alpha']!r},{r['best_t']!r},{r['lower']!r},{r['upper']!r}\n" for r in rows]
    run.write(a.output, "".join(lines))
    return 0


# -- census ------------------------------------------------------------------

def cmd_census(run: _Run) -> int:
    a = run.args
    if a.action == "random":
        g = FiniteAbelianGroup.parse(a.group)
        A = random_plane_set(g, a.density, np.random.default_rng(a.seed))
        run.write(a.output, A.to_text())
        return 0
    A = PlaneSet.from_text(run.read(a.set))
    if a.action == "oracle":
        run.write(a.output, CSV_HEADER + census_oracle(A).to_csv())
    elif a.action == "run":
        run.write(a.output, CSV_HEADER + census(A, threads=a.threads).to_csv())
    else:
        c = census(A, threads=a.threads)
        d, count = max_popular_difference(c)
        run.write(a.output, f"d = {d}, count = {count}, density = {count / A.group.order**2!r}\n")
    return 0


# -- construct ---------------------------------------------------------------

def cmd_construct(run: _Run) -> int:
    a = run.args
    k = _kernel(run, a.kernel)
    g = FiniteAbelianGroup.parse(a.group)
    rep, A = run_experiment(k, g, a.seed, threads=a.threads, keep_set=True)
    run.write(a.output, _json(rep.to_dict()))
    if a.dump_set:
        run.write(a.dump_set, A.to_text())
    if a.densities:
        run.write(a.densities, CSV_HEADER + rep.densities_csv())
    return 0


# -- regularity --------------------------------------------------------------

def cmd_regularity(run: _Run) -> int:
    from .regularity import Caps, counting_check, find_regular_boxing

    a = run.args
    A = PlaneSet.from_text(run.read(a.set))
    caps = Caps(n=a.n_cap, codim=a.codim_cap, m=a.m_cap)
    res = find_regular_boxing(A, a.eps, caps, seed=a.seed, samples=a.samples, threads=a.threads)
    report = res.audit_report()
    if res.success and a.count:
        report["counting"] = counting_check(res.boxing, A, a.eps).to_dict()
    if a.boxing:
        run.write(a.boxing, res.boxing.to_json() + "\n")
    if a.trajectory:
        run.write(a.trajectory, CSV_HEADER + res.trajectory_csv())
    run.write(a.output, _json(report))
    if not res.success:
        print(f"diagnostic: {res.diagnostic}", file=sys.stderr)
        return 2
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")
    common.add_argument("--manifest", help="write the run manifest here instead of stderr")
    common.add_argument("-o", "--output", help="main output file (default stdout)")

    p = argparse.ArgumentParser(prog="corners", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"corners {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    tf = sub.add_parser("tfunc", help="evaluate and transform kernels")
    tfs = tf.add_subparsers(dest="action", required=True)
    e = tfs.add_parser("eval", parents=[common], help="print E and T")
    e.add_argument("kernel", nargs="?", default="-")
    t = tfs.add_parser("tensor", parents=[common], help="n-th tensor power")
    t.add_argument("kernel", nargs="?", default="-")
    t.add_argument("--n", type=int, required=True)
    s = tfs.add_parser("scale", parents=[common], help="multiply values by beta")
    s.add_argument("kernel", nargs="?", default="-")
    s.add_argument("--beta", type=float, required=True)
    m = tfs.add_parser("mix", parents=[common], help="mix with the constant kernel")
    m.add_argument("kernel", nargs="?", default="-")
    m.add_argument("--eps", type=float, required=True)
    c = tfs.add_parser("convert", parents=[common], help="discrete <-> piecewise form")
    c.add_argument("kernel", nargs="?", default="-")
    c.add_argument("--to", choices=["discrete", "piecewise"], required=True)
    pr = tfs.add_parser("preset", parents=[common], help="write a built-in kernel")
    pr.add_argument("name", choices=["disagreement", "constant"])
    pr.add_argument("--value", type=float, default=0.5)

    op = sub.add_parser("optimize", help="minimise T at fixed expectation")
    ops = op.add_subparsers(dest="action", required=True)
    for name in ("single", "sweep"):
        q = ops.add_parser(name, parents=[common])
        if name == "single":
            q.add_argument("--alpha", type=float, required=True)
        else:
            q.add_argument("--alphas", required=True, help="start:stop:step or a comma list")
        q.add_argument("--shape", type=_shape, default=(2, 2, 2))
        q.add_argument("--restarts", type=int, default=20)
        q.add_argument("--max-iters", type=int, default=2000)
        q.add_argument("--step", choices=["backtracking", "fixed"], default="backtracking")
        q.add_argument("--tolerance", type=float, default=1e-13)

    ce = sub.add_parser("census", help="corner counts per difference")
    ces = ce.add_subparsers(dest="action", required=True)
    for name in ("run", "oracle", "popular"):
        q = ces.add_parser(name, parents=[common])
        q.add_argument("set", nargs="?", default="-")
    q = ces.add_parser("random", parents=[common], help="write a random plane set")
    q.add_argument("--group", required=True, help="e.g. 'cyclic 64' or 'vector 2 6'")
    q.add_argument("--density", type=float, default=0.5)

    co = sub.add_parser("construct", parents=[common], help="sample a set from a kernel")
    co.add_argument("kernel", nargs="?", default="-")
    co.add_argument("--group", required=True)
    co.add_argument("--dump-set", help="also write the sampled set here")
    co.add_argument("--densities", help="also write per-difference densities (CSV)")

    rg = sub.add_parser("regularity", parents=[common], help="search for a regular boxing")
    rg.add_argument("set", nargs="?", default="-")
    rg.add_argument("--eps", type=float, required=True)
    rg.add_argument("--n-cap", type=int, default=12)
    rg.add_argument("--codim-cap", type=int, default=8)
    rg.add_argument("--m-cap", type=int, default=64)
    rg.add_argument("--samples", type=int, default=10_000)
    rg.add_argument("--boxing", help="write the final boxing (JSON)")
    rg.add_argument("--trajectory", help="write the energy trajectory (CSV)")
    rg.add_argument("--count", action="store_true", help="add the corner-count comparison")
    return p


COMMANDS = {"tfunc": cmd_tfunc, "optimize": cmd_optimize, "census": cmd_census,
            "construct": cmd_construct, "regularity": cmd_regularity}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    run = _Run(args)
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](run)
    except CornersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    config = {k: v for k, v in vars(args).items() if k not in ("manifest",)}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": " ".join(filter(None, [args.command, getattr(args, "action", None)])),
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": run.inputs,
        "version": __version__,
        "duration_s": time.perf_counter() - start,
        "exit_code": code,
    }
    text = json.dumps(manifest, sort_keys=True, default=list)
    if getattr(args, "manifest", None):
        with open(args.manifest, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
