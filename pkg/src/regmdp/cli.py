"""Command-line front end: gen-mdp, solve, sweep, audit.

Exit status: 0 when all requested work converged/passed, 1 when a solve
failed to converge or an audit check failed, 2 for bad input (usage,
unparsable regularizer or lambda grid, invalid MDP file).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import re
import sys

import numpy as np
import scipy

from . import __version__
from ._files import atomic_write_text
from .analysis import (check_performance_error, lambda_sweep, operator_properties, reference_optimum,
                       sparsity, sweep_csv)
from .mdp import ConvergenceError, dumps_mdp, gridworld, load_mdp, random_mdp, save_mdp, sha256_file
from .regularizer import PRESETS, parse
from .solver import MonotonicityError, save_solution, solve

log = logging.getLogger("regmdp")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_GRID = "logspace(1e-3,1e3,61)"


class UsageError(ValueError):
    pass


def parse_lambdas(text: str) -> list[float]:
    """``logspace(lo,hi,n)`` (endpoints are values, not exponents) or a comma list."""
    text = text.replace(" ", "")
    m = re.fullmatch(r"logspace\(([^,]+),([^,]+),(\d+)\)", text)
    try:
        if m:
            lo, hi, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
            if not (0 < lo and 0 < hi and n >= 1):
                raise UsageError(f"bad logspace arguments in {text!r}")
            lams = [lo] if n == 1 else np.geomspace(lo, hi, n).tolist()
        else:
            lams = [float(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise UsageError(f"cannot parse lambda grid {text!r}: {exc}") from exc
    if not lams:
        raise UsageError("empty lambda grid")
    return lams


def _check_grid(lams, allow_zero=False):
    if any(not np.isfinite(x) or x < 0 or (x == 0 and not allow_zero) for x in lams):
        raise UsageError(f"lambda values must be {'>= 0' if allow_zero else '> 0'}: {lams}")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise UsageError(f"lambda grid must be strictly increasing: {lams}")


def _reg(text):
    try:
        return parse(text)
    except ValueError as exc:
        raise UsageError(f"bad regularizer {text!r}: {exc}") from exc


def _provenance(args, mdp_hash=None) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {"argv": sys.argv[1:], "flags": flags, "mdp_sha256": mdp_hash,
            "versions": {"regmdp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()}}


def _generate(args):
    if args.kind == "random":
        return random_mdp(args.states, args.actions, args.gamma, args.clip, args.seed)
    return gridworld(args.n, args.gamma)


def _load(args):
    """The MDP named by --mdp FILE or generated by --env; returns (mdp, sha256)."""
    if args.mdp:
        try:
            mdp = load_mdp(args.mdp)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read MDP file {args.mdp}: {exc}") from exc
        return mdp, sha256_file(args.mdp)
    args.kind = args.env
    mdp = _generate(args)
    return mdp, hashlib.sha256(dumps_mdp(mdp).encode()).hexdigest()


# -- subcommands ------------------------------------------------------------

def cmd_gen_mdp(args) -> int:
    mdp = _generate(args)
    digest = save_mdp(mdp, args.out)
    print(f"wrote {args.out}: {mdp.n_states} states, {mdp.n_actions} actions, gamma={mdp.gamma}")
    print(f"sha256 {digest}")
    return EXIT_OK


def cmd_solve(args) -> int:
    mdp, digest = _load(args)
    if not (args.lam >= 0 and np.isfinite(args.lam)):
        raise UsageError("--lambda must be >= 0")
    if args.lam > 0 and not args.reg:
        raise UsageError("--reg is required when --lambda > 0")
    spec = _reg(args.reg) if args.reg else None
    try:
        sol = solve(mdp, spec, args.lam, args.method, args.tol, args.max_iter)
    except (ConvergenceError, MonotonicityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    reg_string = spec.to_string() if spec is not None else None
    save_solution(sol, args.out, reg_string, args.tol, digest, _provenance(args, digest))
    print(f"solver={sol.solver} lambda={sol.lam!r} regularizer={reg_string}")
    print(f"delta={sparsity(sol.policy)!r} iterations={sol.iterations} final_residual={sol.final_residual:.3e}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _sweep_targets(args):
    names = args.reg or list(PRESETS)
    specs = [(n, _reg(n)) for n in names]
    if len(specs) > 1 and "{reg}" not in args.out:
        raise UsageError("--out must contain '{reg}' when sweeping several regularizers")
    return specs


def _label(name):
    return name if name in PRESETS else re.sub(r"[^A-Za-z0-9.=_-]+", "_", name)


def cmd_sweep(args) -> int:
    mdp, digest = _load(args)
    lams = parse_lambdas(args.lambdas)
    _check_grid(lams)
    specs = _sweep_targets(args)
    probes = [args.probe] if args.probe is not None else None
    if args.probe is not None and not 0 <= args.probe < mdp.n_states:
        raise UsageError(f"--probe must be a state index in [0, {mdp.n_states})")
    for name, spec in specs:
        records = lambda_sweep(mdp, spec, lams, args.method, args.tol, probes=probes, threads=args.threads)
        out = args.out.replace("{reg}", _label(name))
        atomic_write_text(out, sweep_csv(records, mdp.n_actions))
        meta = _provenance(args, digest)
        meta["regularizer"] = spec.to_string()
        meta["points"] = [{"lambda": r.lam, "status": r.status, "support_histogram": r.support_histogram,
                           "min_diff": r.min_diff,
                           "probe": {str(s): p.tolist() for s, p in r.probe.items()}} for r in records]
        atomic_write_text(out + ".meta.json", json.dumps(meta, indent=1) + "\n")
        failed = sum(r.status != "ok" for r in records)
        d = [r.delta for r in records]
        print(f"{name}: {len(records)} points, delta {d[0]:.4g} -> {d[-1]:.4g}, {failed} failed; wrote {out}")
    # failed points are flagged in the status column; the sweep itself succeeded
    return EXIT_OK


def cmd_audit(args) -> int:
    mdp, digest = _load(args)
    declared = mdp.gamma
    lams = parse_lambdas(args.lambdas)
    _check_grid(lams, allow_zero=True)
    names = args.reg or list(PRESETS)
    specs = [(n, _reg(n)) for n in names]
    target = mdp if args.perturb_gamma is None else mdp.replace(gamma=args.perturb_gamma)
    if args.perturb_gamma is not None:
        print(f"fault injection: operators use gamma={args.perturb_gamma}, checks use declared gamma={declared}",
              flush=True)
    v_star = None
    if not args.skip_performance:
        try:
            v_star = reference_optimum(target, args.tol).v_star
        except (ValueError, ConvergenceError) as exc:
            log.warning("no reference optimum: %s", exc)
    rows = []
    for name, spec in specs:
        for lam in lams:
            for p in operator_properties(target, spec, lam, args.trials, args.audit_seed, gamma_ref=declared):
                rows.append({"regularizer": name, "lambda": lam, "property": p.name, "trials": p.trials,
                             "worst_slack": p.worst_slack, "passed": p.passed})
            if args.skip_performance:
                continue
            row = {"regularizer": name, "lambda": lam, "property": "performance_error", "trials": 1}
            try:
                if v_star is None:
                    raise ValueError("reference optimum unavailable")
                pc = check_performance_error(target, spec, lam, args.tol, v_star=v_star)
                row.update(worst_slack=max(pc.err - pc.bound, -pc.min_diff), passed=pc.passed,
                           err=pc.err, bound=pc.bound, min_diff=pc.min_diff)
            except (ValueError, ConvergenceError, MonotonicityError) as exc:
                row.update(worst_slack=float("nan"), passed=False, error=str(exc))
            rows.append(row)
    n_fail = 0
    for r in rows:
        n_fail += not r["passed"]
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{status} {r['regularizer']:8s} lambda={r['lambda']:<8g} {r['property']:17s} "
              f"trials={r['trials']:<4d} worst_slack={r['worst_slack']:.3e}" + (f"  ({r['error']})" if "error" in r else ""))
    report = {"checks": rows, "passed": n_fail == 0, "declared_gamma": declared,
              "provenance": _provenance(args, digest)}
    if args.out:
        atomic_write_text(args.out, json.dumps(report, indent=1) + "\n")
        print(f"wrote {args.out}")
    print(f"{len(rows) - n_fail}/{len(rows)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_FAIL


# -- argument parsing -------------------------------------------------------

def _add_generator_flags(p):
    g = p.add_argument_group("generator")
    g.add_argument("--states", type=int, default=50)
    g.add_argument("--actions", type=int, default=10)
    g.add_argument("--gamma", type=float, default=0.99)
    g.add_argument("--clip", type=float, default=0.95, help="probability of zeroing a transition entry")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--n", type=int, default=5, help="gridworld half-width; the grid is (2n-1) x (2n-1)")


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mdp", help="MDP JSON file written by gen-mdp")
    src.add_argument("--env", choices=["random", "gridworld"], help="generate the MDP in memory instead")
    _add_generator_flags(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regmdp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-mdp", help="write a random MDP or gridworld to JSON")
    p.add_argument("--kind", choices=["random", "gridworld"], default="random")
    _add_generator_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_mdp)

    p = sub.add_parser("solve", help="solve one (regularizer, lambda) problem")
    _add_source(p)
    p.add_argument("--reg", help="regularizer string or preset name (" + ", ".join(PRESETS) + ")")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--method", choices=["vi", "rpi"], default="vi")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sparsity / error sweep over a lambda grid")
    _add_source(p)
    p.add_argument("--reg", action="append", help="repeatable; default: all seven presets")
    p.add_argument("--lambdas", default=DEFAULT_GRID)
    p.add_argument("--method", choices=["vi", "rpi"], default="rpi")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--probe", type=int, default=None, help="state whose probabilities go in p0..")
    p.add_argument("--threads", type=int, default=None, help="default: REGMDP_THREADS (0 = auto)")
    p.add_argument("--out", default="sweep_{reg}.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="check contraction, monotonicity, translation and both error bounds")
    _add_source(p)
    p.add_argument("--reg", action="append", help="repeatable; default: all seven presets")
    p.add_argument("--lambdas", default="0.01,1")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--audit-seed", dest="audit_seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--perturb-gamma", type=float, default=None,
                   help="fault injection: apply operators with this discount on a copy")
    p.add_argument("--skip-performance", action="store_true", help="only the operator property batteries")
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
