"""Command line interface: convergence runs, smoother checks, penalty thresholds."""
from __future__ import annotations

import argparse
import json
import math
import sys

from .errors import QoipError
from .forms import estimate_eta_star
from .spaces import BrokenP, LagrangeP0BC

_VARIANT_DEFAULT = {"poisson": "sip", "elasticity": "hl", "biharmonic": "c0ip"}
_LOAD_DEFAULT = {"poisson": "MS-P1", "elasticity": "MS-E1", "biharmonic": "MS-B1"}
_P_DEFAULT = {"poisson": 1, "elasticity": 1, "biharmonic": 2}


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4e}" if math.isfinite(v) else "nan"
    return str(v)


def _print_table(rows, columns, out=None):
    out = out or sys.stdout
    print("  ".join(f"{c:>12}" for c in columns), file=out)
    for r in rows:
        print("  ".join(f"{_fmt(r[c]):>12}" for c in columns), file=out)


def cmd_run(args):
    from .experiments.harness import CSV_COLUMNS, StudyConfig, convergence_study, write_csv, write_json

    problem = args.problem
    cfg = StudyConfig(
        problem=problem,
        variant=args.variant or _VARIANT_DEFAULT[problem],
        p=args.p or _P_DEFAULT[problem],
        eta=args.eta,
        smoother=args.smoother,
        solution=args.load or _LOAD_DEFAULT[problem],
        mesh=args.mesh,
        levels=args.levels,
        mu=args.mu,
        lam=args.lam,
    )
    records, meta = convergence_study(cfg)
    rows = [{c: getattr(r, c) for c in CSV_COLUMNS} for r in records]
    _print_table(rows, CSV_COLUMNS)
    if args.out:
        if args.format == "json":
            write_json(records, meta, args.out)
        else:
            write_csv(records, args.out)
    ok = all(r.ratio >= 1.0 - 1e-6 for r in records if math.isfinite(r.ratio))
    if args.max_ratio is not None:
        ok &= all(r.ratio <= args.max_ratio for r in records if math.isfinite(r.ratio))
    if args.min_eoc is not None:
        ok &= records[-1].eoc is not None and records[-1].eoc >= args.min_eoc
    if not ok:
        print("assertion failed", file=sys.stderr)
    return 0 if ok else 1


def cmd_check_smoothers(args):
    from .experiments.checks import bubble_report, run_smoother_checks

    results = run_smoother_checks(sizes=tuple(args.sizes), samples=args.samples, seed=args.seed)
    for r in results:
        print(r.line())
    rep = bubble_report(args.sizes[0])
    dual_ok = rep["duality_residual"] <= 1e-11
    print(f"[{'PASS' if dual_ok else 'FAIL'}] normal-bubble duality: "
          f"{rep['duality_residual']:.3e} (tol 1e-11)")
    print(f"normal-bubble normalisation: c_F*|F| = {rep['c_F_times_length_max']:.6g} "
          f"(squared vertex product); the value {rep['unsquared_constant']:g} "
          f"only normalises the unsquared product and is not used")
    return 0 if dual_ok and all(r.passed for r in results) else 1


def cmd_eta_star(args):
    from .experiments.harness import mesh_hierarchy

    out = []
    for level, mesh in enumerate(mesh_hierarchy(args.mesh, args.levels - 1)):
        if args.order == 2:
            space = LagrangeP0BC(mesh, max(args.p, 2))
        else:
            space = BrokenP(mesh, args.p)
        out.append({"level": level, "h": float(mesh.h_max),
                    "eta_star": estimate_eta_star(space, order=args.order)})
    _print_table(out, ["level", "h", "eta_star"])
    return 0


def cmd_compare_variants(args):
    from .experiments.harness import compare_variants

    rows = compare_variants(levels=args.levels, n0=args.n0, eta=args.eta, mu=args.mu, lam=args.lam)
    _print_table(rows, ["level", "h", "dofs", "difference", "eoc"])
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"eta": args.eta, "mu": args.mu, "lambda": args.lam, "rows": rows}, fh, indent=2)
    ok = True
    if args.min_eoc is not None:
        ok = rows[-1]["eoc"] is not None and rows[-1]["eoc"] >= args.min_eoc
    return 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="qoip", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="convergence study with quasi-optimality ratios")
    r.add_argument("--problem", choices=["poisson", "elasticity", "biharmonic"], default="poisson")
    r.add_argument("--variant", choices=["sip", "nip", "hl", "c0ip"])
    r.add_argument("--p", type=int)
    r.add_argument("--eta", type=float, help="penalty (default 10p^2, 10, or 4 eta_*)")
    r.add_argument("--smoother", choices=["full", "tilde", "identity"], default="full")
    r.add_argument("--load", help="manufactured solution: MS-P1, MS-P2, MS-E1, MS-B1")
    r.add_argument("--mesh", default="builtin:square:2", help="builtin:square:N or a mesh file")
    r.add_argument("--levels", type=int, default=4)
    r.add_argument("--mu", type=float, default=1.0)
    r.add_argument("--lam", type=float, default=1.0)
    r.add_argument("--out")
    r.add_argument("--format", choices=["csv", "json"], default="csv")
    r.add_argument("--max-ratio", type=float, help="fail if any ratio exceeds this")
    r.add_argument("--min-eoc", type=float, help="fail if the final EOC is below this")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-smoothers", help="moment conservation and invariance checks")
    c.add_argument("--sizes", type=int, nargs="+", default=[2, 4])
    c.add_argument("--samples", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_smoothers)

    e = sub.add_parser("eta-star", help="estimate the coercivity threshold of the penalty")
    e.add_argument("--p", type=int, default=1)
    e.add_argument("--order", type=int, choices=[1, 2], default=1)
    e.add_argument("--mesh", default="builtin:square:2")
    e.add_argument("--levels", type=int, default=1)
    e.set_defaults(func=cmd_eta_star)

    v = sub.add_parser("compare-variants",
                       help="difference between smoothed and classical right-hand sides (elasticity)")
    v.add_argument("--levels", type=int, default=5)
    v.add_argument("--n0", type=int, default=2)
    v.add_argument("--eta", type=float, default=10.0)
    v.add_argument("--mu", type=float, default=1.0)
    v.add_argument("--lam", type=float, default=1.0)
    v.add_argument("--out")
    v.add_argument("--min-eoc", type=float)
    v.set_defaults(func=cmd_compare_variants)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QoipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
