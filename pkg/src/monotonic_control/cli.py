"""Command-line entry point: ``run``, ``check`` and ``threshold``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import List, Optional

from . import analysis
from .config import ConfigError, load_config
from .core import ControlField, SchemeParams, operator_norm
from .problems import DEFAULT_N_STEPS, DEFAULT_T, DEFAULT_THETA, ProblemSpec
from .scheme import bootstrap


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    from .runner import execute

    status = execute(config, workers=args.workers, output_dir=args.output_dir)
    out = args.output_dir or config.output_dir
    print(f"wrote results to {out} ({'all checks passed' if status == 0 else 'some checks failed'})")
    return status


def _cmd_check(args) -> int:
    from .runner import recheck

    try:
        result = recheck(args.trace, args.report)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, v in result["checks"].items():
        verdict = {True: "pass", False: "FAIL", None: "n/a"}[v["passed"]]
        agree = "" if v["agrees"] else f"  (report says {v['recorded']})"
        print(f"{name:16s} {verdict}{agree}")
    failed = any(v["passed"] is False for v in result["checks"].values())
    if not result["agrees"]:
        print("recomputed verdicts disagree with the report", file=sys.stderr)
        return 1
    return 1 if failed else 0


def _problem_from_args(args) -> ProblemSpec:
    params = {"T": args.T, "n_steps": args.n_steps}
    if args.problem == "two_level":
        params["theta"] = args.theta
    elif args.problem == "ladder":
        params["n"] = args.n
    elif args.problem == "box1d":
        if args.L is not None:
            params["L"] = args.L
        params["n_x"] = args.n_x
    return ProblemSpec(args.problem, params)


def _bound_for(problem, alpha, delta, eta, eps0_value):
    params = SchemeParams(alpha, delta, eta)
    eps0 = ControlField.constant(problem.grid, eps0_value)
    state = bootstrap(problem, params, eps0)
    return analysis.bound_m(
        params, operator_norm(problem.O), operator_norm(problem.mu),
        state.eps.norm_l2, state.eps_tilde.norm_l2,
    )


def self_consistent_alpha(problem, delta, eta, eps0_value, lo=1e-6, hi=1e12, iters=200):
    """Smallest alpha (to bisection accuracy) with alpha > alpha*(bound_m(alpha))."""
    nO, nmu, T = operator_norm(problem.O), operator_norm(problem.mu), problem.grid.T

    def ok(a):
        try:
            return a > analysis.alpha_threshold(nO, nmu, T, _bound_for(problem, a, delta, eta, eps0_value))
        except analysis.ThresholdOverflowError:
            return False

    if not ok(hi):
        return None
    if ok(lo):
        return lo
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo < 1 + 1e-10:
            break
    return hi


def _cmd_threshold(args) -> int:
    try:
        problem = _problem_from_args(args).build()
        M = args.M
        if M is None:
            M = _bound_for(problem, args.alpha, args.delta, args.eta, args.eps0)
        nO, nmu = operator_norm(problem.O), operator_norm(problem.mu)
        out = {"norm_O": nO, "norm_mu": nmu, "T": problem.grid.T, "bound_m": M}
        try:
            out["alpha_threshold"] = analysis.alpha_threshold(nO, nmu, problem.grid.T, M)
        except analysis.ThresholdOverflowError as exc:
            out["alpha_threshold"] = None
            out["note"] = str(exc)
        if args.self_consistent:
            out["self_consistent_alpha"] = self_consistent_alpha(problem, args.delta, args.eta, args.eps0)
    except (ValueError, analysis.BoundUndefinedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for k, v in out.items():
            print(f"{k:22s} {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monotonic-control",
        description="Monotonically convergent optimal control of finite-dimensional quantum systems.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the iterations and sweeps described by a TOML config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    p.add_argument("--output-dir", default=None, help="override outputs.directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check", help="recompute verdicts from a trace and its report")
    p.add_argument("trace")
    p.add_argument("report")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("threshold", help="print bound_m and alpha_threshold for a problem")
    p.add_argument("--problem", choices=("two_level", "ladder", "box1d"), default="two_level")
    p.add_argument("--T", type=float, default=DEFAULT_T)
    p.add_argument("--n-steps", type=int, default=DEFAULT_N_STEPS)
    p.add_argument("--theta", type=float, default=DEFAULT_THETA)
    p.add_argument("--n", type=int, default=3, help="ladder size")
    p.add_argument("--L", type=float, default=None, help="box length")
    p.add_argument("--n-x", type=int, default=64, help="box grid points")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--eps0", type=float, default=0.0, help="constant initial field")
    p.add_argument("--M", type=float, default=None, help="use this bound instead of bound_m")
    p.add_argument("--self-consistent", action="store_true",
                   help="also search the smallest alpha exceeding its own threshold")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_threshold)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)
