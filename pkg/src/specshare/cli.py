"""Command-line interface.

Subcommands::

    sample       draw an ensemble and save it (or print its summary)
    solve-aipc   solve under the interference constraint, print a JSON summary
    solve-pclc   solve under the capacity-loss constraint
    frontier     sweep levels and write the frontier CSV plus run metadata
    mac-bound    solve one policy and report the two-user MAC rate bounds
    oracle       cross-check the solvers against brute force on a random tiny instance

Settings come from ``--config FILE`` (or ``$SPECSHARE_CONFIG``), then
``--set key=value`` pairs, then dedicated flags. Exit status is 0 on
success, 1 on a library or I/O error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .aipc import AipcProblem, PolicySolution, solve_aipc
from .capacity import mac_rate_bounds
from .config import ENV_VAR, RunConfig, resolve_config
from .errors import ParameterError, SpecShareError
from .fading import FadingEnsemble, load_ensemble, sample_ensemble, save_ensemble
from .frontier import (
    ConstraintKind,
    SweepConfig,
    format_csv,
    parse_levels,
    run_metadata,
    trace_frontier,
)
from .oracle import brute_force_p1, brute_force_p2, random_discrete_ensemble
from .pclc import PclcProblem, RootStats, solve_pclc
from .pu_policy import apply_pu_policy, make_pu_policy

log = logging.getLogger("specshare")


def _json(obj) -> str:
    def default(x):
        if isinstance(x, (np.floating, np.integer)):
            return x.item()
        if isinstance(x, np.ndarray):
            return x.tolist()
        return str(x)

    # inf and nan come out as Infinity/NaN, which json.loads reads back
    return json.dumps(obj, indent=2, sort_keys=True, default=default)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help=f"key=value config file (default: ${ENV_VAR})")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--n", type=int, help="Monte Carlo sample count (mc.n)")
    p.add_argument("--seed", type=int, help="sampling seed (mc.seed)")
    p.add_argument("--pu", choices=("cp", "wf"), help="PU power policy (pu.policy)")
    p.add_argument("--pu-budget", type=float, help="PU average power (pu.budget)")
    p.add_argument("--su-budget", type=float, help="SU average power (su.budget)")
    p.add_argument("--method", help="dual search: nested, subgradient or ellipsoid")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")


def _add_ensemble_input(p: argparse.ArgumentParser):
    p.add_argument("--ensemble", help="load gains from a file written by 'sample' instead of sampling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specshare", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("sample", help="draw a fading ensemble")
    _add_common(p)
    p.add_argument("--out", help="write the ensemble here (columnar text)")

    p = sub.add_parser("solve-aipc", help="solve under the interference constraint")
    _add_common(p)
    _add_ensemble_input(p)
    p.add_argument("--gamma", help="interference threshold; 'inf' drops the constraint")
    p.add_argument("--dump", help="write per-state powers (index,p,g_p) to this file")

    p = sub.add_parser("solve-pclc", help="solve under the capacity-loss constraint")
    _add_common(p)
    _add_ensemble_input(p)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--c-delta", type=float, help="allowed PU capacity loss in nats")
    grp.add_argument("--loss-fraction", type=float, help="allowed loss as a fraction of C_p^max")
    p.add_argument("--dump", help="write per-state powers (index,p,g_p) to this file")

    p = sub.add_parser("frontier", help="sweep a protection level")
    _add_common(p)
    p.add_argument("--kind", choices=[k.value for k in ConstraintKind])
    p.add_argument("--levels", help="start:step:stop (inclusive) or a comma list")
    p.add_argument("--absolute-levels", action="store_true",
                   help="read PCLC levels as nats rather than fractions of C_p^max")
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.add_argument("--meta", help="metadata JSON destination (default: OUT.meta.json)")
    p.add_argument("--workers", type=int, default=1, help="levels solved concurrently")

    p = sub.add_parser("mac-bound", help="MAC rate bounds for a solved policy")
    _add_common(p)
    _add_ensemble_input(p)
    p.add_argument("--policy", choices=("aipc", "pclc"), default="pclc")
    p.add_argument("--gamma")
    p.add_argument("--loss-fraction", type=float)

    p = sub.add_parser("oracle", help="brute-force cross-check on a random tiny instance")
    _add_common(p)
    p.add_argument("--problem", choices=("aipc", "pclc"), default="pclc")
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--gamma")
    p.add_argument("--loss-fraction", type=float)
    return parser


def _config(args) -> RunConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ParameterError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    flags = {
        "mc.n": args.n, "mc.seed": args.seed, "pu.policy": args.pu,
        "pu.budget": args.pu_budget, "su.budget": args.su_budget, "solver.method": args.method,
    }
    if getattr(args, "gamma", None) is not None:
        flags["aipc.gamma"] = args.gamma
    if getattr(args, "c_delta", None) is not None:
        flags["pclc.c_delta"] = args.c_delta
    if getattr(args, "loss_fraction", None) is not None:
        flags["pclc.loss_fraction"] = args.loss_fraction
        flags["pclc.c_delta"] = "none"
    if getattr(args, "levels", None) is not None:
        flags["frontier.levels"] = args.levels
    if getattr(args, "kind", None) is not None:
        flags["frontier.kind"] = args.kind
    if getattr(args, "absolute_levels", False):
        flags["frontier.loss_fraction_levels"] = "false"
    overrides.update({k: str(v) for k, v in flags.items() if v is not None})
    return resolve_config(args.config, overrides)


def _ensemble(cfg: RunConfig, path: Optional[str] = None) -> FadingEnsemble:
    ens = load_ensemble(path) if path else sample_ensemble(cfg.dist(), cfg.n, cfg.seed)
    return apply_pu_policy(ens, make_pu_policy(ens, cfg.pu_policy, cfg.pu_budget, cfg.calib_tol))


def _pclc_problem(cfg: RunConfig, ens: FadingEnsemble) -> PclcProblem:
    if cfg.c_delta is not None:
        return PclcProblem.for_ensemble(ens, cfg.c_delta, cfg.su_budget)
    if cfg.loss_fraction is None:
        raise ParameterError("set pclc.c_delta or pclc.loss_fraction")
    return PclcProblem.from_loss_fraction(ens, cfg.loss_fraction, cfg.su_budget)


def _write_dump(path: str, ens: FadingEnsemble, sol: PolicySolution):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("index,p,g_p\n")
        for i, (p, gp) in enumerate(zip(sol.p, ens.g * sol.p)):
            fh.write(f"{i},{p:.12g},{gp:.12g}\n")


def _cmd_sample(args, cfg: RunConfig, out) -> int:
    ens = sample_ensemble(cfg.dist(), cfg.n, cfg.seed)
    if args.out:
        save_ensemble(ens, args.out)
    summary = {"n": ens.n, "seed": cfg.seed, "fingerprint": ens.fingerprint()}
    for name in ("f", "e", "g", "o"):
        x = getattr(ens, name)
        summary[f"mean_{name}"] = float(np.mean(x))
        summary[f"stderr_{name}"] = float(np.std(x, ddof=1) / math.sqrt(ens.n)) if ens.n > 1 else None
    out.write(_json(summary) + "\n")
    return 0


def _solve(cfg: RunConfig, ens: FadingEnsemble, kind: str) -> PolicySolution:
    if kind == "aipc":
        return solve_aipc(ens, AipcProblem(cfg.gamma, cfg.su_budget), cfg.solver())
    stats = RootStats()
    return solve_pclc(ens, _pclc_problem(cfg, ens), cfg.solver(), stats)


def _cmd_solve(args, cfg: RunConfig, out, kind: str) -> int:
    ens = _ensemble(cfg, args.ensemble)
    sol = _solve(cfg, ens, kind)
    if args.dump:
        _write_dump(args.dump, ens, sol)
    out.write(_json(sol.summary()) + "\n")
    return 0


def _cmd_frontier(args, cfg: RunConfig, out) -> int:
    sweep = SweepConfig(dist=cfg.dist(), n=cfg.n, seed=cfg.seed, pu=cfg.pu_policy,
                        pu_budget=cfg.pu_budget, su_budget=cfg.su_budget,
                        levels=parse_levels(cfg.levels), kind=cfg.frontier_kind,
                        loss_fraction_levels=cfg.loss_fraction_levels, calib_tol=cfg.calib_tol,
                        solver=cfg.solver())
    points = trace_frontier(sweep, workers=args.workers)
    text = format_csv(points)
    meta = run_metadata(sweep, run_config_hash=cfg.digest(),
                        unconverged=sum(not p.converged for p in points))
    if args.out:
        with open(args.out, "w", newline="", encoding="ascii") as fh:
            fh.write(text)
        with open(args.meta or f"{args.out}.meta.json", "w", encoding="utf-8") as fh:
            fh.write(_json(meta) + "\n")
    else:
        out.write(text)
        if args.meta:
            with open(args.meta, "w", encoding="utf-8") as fh:
                fh.write(_json(meta) + "\n")
    return 0


def _cmd_mac(args, cfg: RunConfig, out) -> int:
    ens = _ensemble(cfg, args.ensemble)
    sol = _solve(cfg, ens, args.policy)
    bounds = mac_rate_bounds(ens, sol.p)
    report = {
        "policy": args.policy,
        "c_p": sol.c_p,
        "c_s": sol.c_s,
        "pu_bound": bounds.pu_bound,
        "su_bound": bounds.su_bound,
        "sum_bound": bounds.sum_bound,
        "inside": bounds.contains(sol.c_p, sol.c_s),
        # the single-user bounds are each user's rate with the other one silent
        "sum_bound_dominates_single_user": bounds.sum_bound >= max(bounds.pu_bound,
                                                                   bounds.su_bound),
    }
    out.write(_json(report) + "\n")
    return 0


def _cmd_oracle(args, cfg: RunConfig, out) -> int:
    rng = np.random.default_rng(cfg.seed)
    ens = random_discrete_ensemble(rng, args.states, cfg.dist(), cfg.pu_policy, cfg.pu_budget)
    if args.problem == "aipc":
        prob = AipcProblem(cfg.gamma, cfg.su_budget)
        ref = brute_force_p1(ens, prob)
        sol = solve_aipc(ens, prob, cfg.solver())
    else:
        prob = _pclc_problem(cfg, ens)
        ref = brute_force_p2(ens, prob)
        sol = solve_pclc(ens, prob, cfg.solver())
    rel = (sol.c_s - ref.objective) / ref.objective if ref.objective > 0 else sol.c_s
    report = {
        "problem": args.problem,
        "states": ens.n,
        "weights": ens.weights,
        "oracle_objective": ref.objective,
        "oracle_p": ref.p,
        "oracle_method": ref.method,
        "solver_objective": sol.c_s,
        "solver_p": sol.p,
        "relative_difference": rel,
        "solver_residual": sol.residual,
    }
    out.write(_json(report) + "\n")
    return 0


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "sample":
            return _cmd_sample(args, cfg, out)
        if args.command == "solve-aipc":
            return _cmd_solve(args, cfg, out, "aipc")
        if args.command == "solve-pclc":
            return _cmd_solve(args, cfg, out, "pclc")
        if args.command == "frontier":
            return _cmd_frontier(args, cfg, out)
        if args.command == "mac-bound":
            return _cmd_mac(args, cfg, out)
        if args.command == "oracle":
            return _cmd_oracle(args, cfg, out)
    except (SpecShareError, OSError) as exc:
        print(f"specshare {args.command}: error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")  # pragma: no cover
    return 2


cli_main = main


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
