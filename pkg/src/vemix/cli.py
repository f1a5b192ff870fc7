"""Command-line entry point: ``vemix solve`` and ``vemix study``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .mesh import mesh_size
from .system import dump_matrices


def _solve(args) -> int:
    form = args.form or harness.DEFAULT_FORM[args.problem]
    if args.problem == "navier-stokes" and form != "grad":
        raise SystemExit("navier-stokes is solved in the gradient form only (--form grad)")
    case = harness.manufactured_case(harness.PROBLEMS[args.problem], form, args.k)
    mesh = harness.make_mesh(args.mesh, args.n, args.seed)
    sol = harness.solve_case(case, mesh, args.k, args.tol, args.max_iter)
    family = args.mesh.split(":", 1)[0] if args.mesh.startswith("file:") else args.mesh
    row = harness.ConvergenceRow(family, args.n, mesh_size(mesh), sol.system.dofmap.gndof, *sol.errors, k=args.k)
    print(",".join(harness.CSV_COLUMNS))
    print(",".join(row.csv_fields()))
    print(f"# residual={sol.result.residual:.3e} div_norm_sq={sol.result.div_norm_sq:.3e} "
          f"iterations={sol.result.iterations}", file=sys.stderr)
    if args.out:
        harness.write_csv([row], args.out)
    if args.dump_matrices:
        for path in dump_matrices(sol.system, args.dump_matrices):
            print(f"# wrote {path}", file=sys.stderr)
    return 0


def _study(args) -> int:
    with open(args.config) as fh:
        cfg = harness.parse_config(fh.read())
    print(",".join(("k",) + harness.CSV_COLUMNS))
    harness.run_study(cfg, on_row=lambda r: print(",".join([str(r.k)] + r.csv_fields()), flush=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vemix", description="Mixed virtual element solver and convergence studies")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one manufactured problem and print its errors")
    solve.add_argument("--problem", choices=sorted(harness.PROBLEMS), required=True)
    solve.add_argument("--form", choices=["eps", "grad", "zero"])
    solve.add_argument("--mesh", required=True, help="quad, hexa, voro or file:PATH")
    solve.add_argument("--n", type=int, default=8)
    solve.add_argument("--k", type=int, default=2)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--tol", type=float, default=1e-10, help="Picard tolerance")
    solve.add_argument("--max-iter", type=int, default=50)
    solve.add_argument("--out", help="write the result row to this CSV file")
    solve.add_argument("--dump-matrices", metavar="DIR", help="export the assembled matrices in coordinate format")
    solve.set_defaults(func=_solve)

    study = sub.add_parser("study", help="run a convergence study from a key=value config")
    study.add_argument("--config", required=True)
    study.set_defaults(func=_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
