"""Command-line entry point: ``srbfem run | peaceman | mesh | validate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import peaceman
from .experiment import ConfigError, acceptance_checks, load_config, run_experiment
from .testcases import CASE_IDS, make_case, validate_manufactured

PEACEMAN_TOL = 1e-12


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _report_checks(checks, stream=sys.stdout) -> bool:
    ok = True
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}", file=stream)
        ok &= c.passed
    return ok


def cmd_run(args) -> int:
    overrides = {
        "case": args.case, "formulations": args.formulation, "mesh_sizes": args.mesh_sizes, "radii": args.radii,
        "vbar": args.vbar, "reconstruction_degree": args.degree, "output_dir": args.output,
        "workers": args.workers,
    }
    if args.vtk:
        overrides["vtk"] = True
    if args.solver:
        overrides["solver"] = {"method": args.solver}
    try:
        cfg = load_config(args.config, **overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    reports, rows = run_experiment(cfg)
    for r in rows:
        line = f"{r.case} {r.formulation:8s} R={r.R:<7g} n={r.n:<3d} e_L2={r.e_L2:.3e} e_H1={r.e_H1:.3e} " \
               f"ehat_L2={r.ehat_L2:.3e} ehat_H1={r.ehat_H1:.3e}"
        print(line if r.status == "ok" else f"{line} FAILED ({r.diagnostic})")
    for rep in reports:
        s = rep.summary()
        fit = " ".join(f"{k}={v:.2f}" for k, v in s["fitted"].items())
        print(f"fitted rates {s['case']} {s['formulation']} R={s['R']:g}: {fit}")
    print(f"outputs in {cfg.output_dir}")
    failed_rows = any(r.status != "ok" for r in rows)
    if args.check:
        ok = _report_checks(acceptance_checks(reports, rows))
        return 0 if ok and not failed_rows else 1
    return 1 if failed_rows else 0


def cmd_peaceman(args) -> int:
    rows = peaceman.random_table(args.draws, args.seed)
    rows.append(peaceman.comparison_row(args.beta, args.R, args.R))  # r_e = R
    rows.append(peaceman.comparison_row(1e15, 10 * args.R, args.R))  # skinless limit
    cols = ["beta", "r_e", "R", "S", "peaceman", "srb", "difference"]
    print("  ".join(f"{c:>12s}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:12.5e}" for c in cols))
    rel = max(r["difference"] / abs(r["peaceman"]) for r in rows)
    worst = max(r["difference"] for r in rows)
    print(f"max |difference| = {worst:.3e}, max relative = {rel:.3e}")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            wr.writeheader()
            wr.writerows({k: repr(float(v)) for k, v in r.items()} for r in rows)
    if args.check:
        ok = worst < PEACEMAN_TOL
        print(f"[{'PASS' if ok else 'FAIL'}] peaceman identity: max |difference| {worst:.3e} < {PEACEMAN_TOL:g}")
        return 0 if ok else 1
    return 0


def cmd_mesh(args) -> int:
    case = make_case(args.case, args.R)
    mesh, v3, wells = case.discretize(args.n)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fields = {"v_exact": case.v_exact(mesh.vertices)}
    fields["cutoff"] = wells[0].cutoff(mesh.vertices, wells[0].segment)
    mesh.write_vtk(out, fields)
    print(f"wrote {out}: {mesh.n_vertices} vertices, {mesh.n_cells} cells, {wells[0].line_mesh.n_cells} well cells")
    return 0


def cmd_validate(args) -> int:
    radii = args.radii or [None]
    ok = True
    reports = []
    for R in radii:
        case = make_case(args.case, R)
        rep = validate_manufactured(case, seed=args.seed, n_points=args.points)
        reports.append(rep)
        status = "PASS" if rep["passed"] else "FAIL"
        print(f"[{status}] validate {case.id} R={case.R:g}")
        for k, v in rep.items():
            if k != "passed":
                print(f"    {k}: {v}")
        ok &= bool(rep["passed"])
    if args.output:
        Path(args.output).write_text(json.dumps(reports, indent=2, sort_keys=True, default=float) + "\n")
    return 0 if ok or not args.check else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srbfem", description="Coupled 1D-3D well/reservoir FE experiments")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="convergence study from a YAML config")
    r.add_argument("config", nargs="?", help="YAML file; flags below override its values")
    r.add_argument("--case", choices=CASE_IDS)
    r.add_argument("--formulation", action="append", choices=("srb", "standard"))
    r.add_argument("--mesh-sizes", type=_ints, help="comma separated, e.g. 4,8,16")
    r.add_argument("--radii", type=_floats, help="comma separated well radii")
    r.add_argument("--vbar", choices=("trace", "average"))
    r.add_argument("--degree", type=int, choices=(1, 2, 3), help="reconstruction degree (case 2)")
    r.add_argument("--solver", choices=("direct-LU", "gmres-ilu"))
    r.add_argument("--output", help="output directory")
    r.add_argument("--workers", type=int)
    r.add_argument("--vtk", action="store_true", help="also write VTK and slice/well CSV fields")
    r.add_argument("--check", action="store_true", help="exit nonzero if an acceptance rule fails")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("peaceman", help="Peaceman / singularity-removal coefficient table")
    q.add_argument("--draws", type=int, default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--beta", type=float, default=2.0, help="beta of the r_e = R row")
    q.add_argument("--R", type=float, default=1e-2)
    q.add_argument("--output", help="CSV file")
    q.add_argument("--check", action="store_true")
    q.set_defaults(func=cmd_peaceman)

    m = sub.add_parser("mesh", help="export a case mesh to VTK")
    m.add_argument("--case", choices=CASE_IDS, default="case1")
    m.add_argument("--R", type=float)
    m.add_argument("-n", type=int, default=8)
    m.add_argument("--output", default="mesh.vtk")
    m.set_defaults(func=cmd_mesh)

    v = sub.add_parser("validate", help="check manufactured data against its PDEs")
    v.add_argument("--case", choices=CASE_IDS, default="case1")
    v.add_argument("--radii", type=_floats)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--points", type=int, default=20)
    v.add_argument("--output", help="JSON report")
    v.add_argument("--check", action="store_true")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
