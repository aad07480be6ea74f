"""Command line driver: convergence experiments and single mesh-file runs."""
from __future__ import annotations

import argparse
import logging
import sys

from .assembly import assemble
from .cases import CASES, PROBLEMS, get_problem, run_case, run_meshfile
from .mesh import MeshError, read_mesh, segment_hanging_edges
from .postprocess import write_table
from .solver import SolveConfig, SolverError
from .space import WgSpace

log = logging.getLogger("wgfem")


def build_parser():
    p = argparse.ArgumentParser(
        prog="wgfem",
        description="Weak Galerkin convergence experiments on polygonal meshes.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--case", choices=sorted(CASES) + ["all"], default="1-rect",
                     help="built-in experiment (default: 1-rect)")
    src.add_argument("--mesh", help="run one level on a mesh file instead of a built-in case")
    p.add_argument("--problem", choices=sorted(PROBLEMS), default=None,
                   help="manufactured problem (default: the case's own; sine for --mesh)")
    p.add_argument("--levels", type=int, default=None, help="number of mesh levels (>= 3)")
    p.add_argument("--k", type=int, default=1, help="polynomial degree (default: 1)")
    p.add_argument("--rho", type=float, default=1.0, help="stabilization parameter (default: 1)")
    p.add_argument("--stab-length", choices=WgSpace.STAB_LENGTHS, default="edge",
                   help="length h in the rho/h stabilization weight (default: edge)")
    p.add_argument("--tol", type=float, default=1e-11, help="CG relative residual tolerance")
    p.add_argument("--picard-tol", type=float, default=1e-9, help="fixed-point increment tolerance")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded assembly; output is byte-identical across runs")
    p.add_argument("--workers", type=int, default=None, help="assembly threads")
    p.add_argument("--out", help="CSV path for the error table")
    p.add_argument("--extra-columns", action="store_true",
                   help="append e_grad and e_L2_exact columns to the CSV")
    p.add_argument("--export-matrix", metavar="PATH",
                   help="write the reduced system matrix (MatrixMarket) of the first level")
    p.add_argument("--cg-trace", metavar="PATH", help="write CG residual history as CSV")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _export(args, mesh, problem):
    space = WgSpace(mesh, args.k, stab_length=args.stab_length)
    system = assemble(space, problem.coefficient, problem.f, problem.g, args.rho,
                      state=space.zeros() if problem.coefficient.depends_on_solution else None)
    system.export_matrix_market(args.export_matrix)
    log.info("wrote %s (%d unknowns)", args.export_matrix, len(system.free))


def _out_path(args, case, many):
    if not args.out:
        return None
    if not many:
        return args.out
    stem, dot, ext = args.out.rpartition(".")
    return f"{stem}_{case}.{ext}" if dot else f"{args.out}_{case}"


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = SolveConfig(rtol=args.tol, picard_tol=args.picard_tol, trace_path=args.cg_trace)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    workers = 1 if args.deterministic else args.workers
    ok = True
    try:
        if args.mesh:
            problem = args.problem or "sine"
            if args.export_matrix:
                mesh = read_mesh(args.mesh)
                if not mesh.is_conforming:
                    mesh = segment_hanging_edges(mesh)
                _export(args, mesh, get_problem(problem))
            report = run_meshfile(args.mesh, problem, args.k, args.rho, config, args.stab_length)
            reports = [report]
            print(report.summary())
            if args.out:
                ncol = 5 if args.extra_columns else 3
                write_table(args.out, report.errors, rates=("n/a",) * ncol,
                            extra=args.extra_columns)
        else:
            cases = sorted(CASES) if args.case == "all" else [args.case]
            reports = []
            for case in cases:
                if args.export_matrix and case == cases[0]:
                    pname, family, _ = CASES[case]
                    mesh, _h = next(family(1))
                    _export(args, mesh, get_problem(args.problem or pname))
                report = run_case(case, args.levels, args.k, args.rho, config, args.stab_length,
                                  workers, args.problem)
                reports.append(report)
                print(report.summary())
                path = _out_path(args, case, len(cases) > 1)
                if path:
                    write_table(path, report.errors, extra=args.extra_columns)
    except (MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in reports:
        if not r.certificates_passed:
            print(f"certificate failure in {r.case}: flux residual above {r.flux_tol:g}",
                  file=sys.stderr)
            ok = False
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
