"""Command-line interface.

Subcommands: solve, eigs-report, convert-spe10, synthetic, oracle-check.
Exit codes: 0 success/convergence, 1 input errors, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import io as fio
from . import oracle
from . import solver
from .decomposition import Decomposition, import_partition, regular_partition
from .errors import NonConvergenceError, NumericalFailureError
from .grid import Wells, assemble_system, build_grid


def _parse_ints(text, name, dims=(2, 3)):
    try:
        vals = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise SystemExit(f"error: bad {name}: {text!r}")
    if len(vals) not in dims:
        raise SystemExit(f"error: {name} needs {dims} comma-separated values")
    return vals


def _parse_floats(text, name):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise SystemExit(f"error: bad {name}: {text!r}")


def _parse_tau(text):
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        tau = float(text)
    except ValueError:
        raise SystemExit(f"error: bad --tau: {text!r}")
    if not tau > 1.0:
        raise SystemExit("error: tau must exceed 1")
    return tau


def _add_problem_args(p):
    p.add_argument("--grid", required=True, help="nx,ny[,nz]")
    p.add_argument("--cell-size", default=None, help="hx,hy[,hz] (default 1)")
    p.add_argument("--perm", required=True, help="permeability PERM file")
    p.add_argument("--partition", default=None, help="partition PART file")
    p.add_argument("--splits", default=None,
                   help="regular partition sx,sy[,sz]")
    p.add_argument("--scaling", default="multiplicity",
                   choices=["multiplicity", "stiffness"])
    p.add_argument("--tau", default="inf")
    p.add_argument("--constraints", default="initial",
                   choices=["initial", "adaptive", "multiscale"])
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--maxit", type=int, default=5000)
    p.add_argument("--src-cell", type=int, default=None)
    p.add_argument("--sink-cell", type=int, default=None)
    p.add_argument("--well-strength", type=float, default=1.0)
    p.add_argument("--report", default=None, help="report CSV path")
    p.add_argument("--residuals", default=None, help="residual CSV path")
    p.add_argument("--spectrum", default=None, help="spectrum CSV path")
    p.add_argument("--seed", type=int, default=None)


def _build_problem(args):
    counts = _parse_ints(args.grid, "--grid")
    dim = len(counts)
    sizes = ((1.0,) * dim if args.cell_size is None
             else _parse_floats(args.cell_size, "--cell-size"))
    grid = build_grid(dim, counts, sizes)
    perm_counts, perm = fio.read_perm(args.perm)
    if tuple(perm_counts) != tuple(counts):
        raise SystemExit(
            f"error: permeability grid {perm_counts} does not match "
            f"--grid {counts}")

    if (args.partition is None) == (args.splits is None):
        raise SystemExit("error: pass exactly one of --partition / --splits")
    if args.splits is not None:
        dec = regular_partition(grid, _parse_ints(args.splits, "--splits"))
    else:
        dec = import_partition(args.partition, grid)

    src = args.src_cell if args.src_cell is not None else 0
    sink = args.sink_cell if args.sink_cell is not None else grid.n_cells - 1
    wells = Wells(src_cell=src, sink_cell=sink, strength=args.well_strength)

    system = assemble_system(grid, perm, wells)
    config = solver.SolveConfig(
        tau=_parse_tau(args.tau), scaling=args.scaling, tol=args.tol,
        maxit=args.maxit, constraints=args.constraints)
    return grid, perm, wells, system, dec, config


def _report_row(config, report):
    ms = config.constraints == "multiscale"
    omega = report.omega_tilde
    return {
        "tau": "ms" if ms else config.tau,
        "eps0": report.eps0,
        "eps_star": report.eps_star,
        "omega_tilde": None if ms or math.isnan(omega) else omega,
        "n_c": report.n_c,
        "it": report.it,
        "kappa": report.kappa,
    }


def _cmd_solve(args):
    grid, perm, wells, system, dec, config = _build_problem(args)
    u_exact = None
    if grid.n_flux_dofs + grid.n_cells <= oracle.DENSE_LIMIT:
        u_exact = oracle.direct_solve(grid, perm, wells).u
    code = 0
    try:
        report = solver.solve(system, dec, config, u_exact=u_exact)
    except NonConvergenceError as exc:
        if exc.report is None:
            raise
        report = exc.report
        code = 2
        print(f"warning: {exc}", file=sys.stderr)
    print(f"it={report.it} kappa={report.kappa:.6g} "
          f"omega_tilde={report.omega_tilde:.6g} n_c={report.n_c} "
          f"converged={report.converged}")
    if args.report:
        fio.write_report_csv(args.report, [_report_row(config, report)])
    if args.residuals:
        fio.write_residuals_csv(args.residuals, report.residuals)
    if args.spectrum:
        setup = solver.BddcSetup(system, dec, config)
        fio.write_spectrum_csv(
            args.spectrum, oracle.preconditioned_spectrum(setup))
    return code


def _cmd_eigs_report(args):
    _, _, _, system, dec, config = _build_problem(args)
    from . import adaptive
    setup = solver.BddcSetup(
        system, dec, solver.SolveConfig(
            tau=config.tau, scaling=config.scaling, tol=config.tol,
            maxit=config.maxit, constraints="initial"))
    reports = adaptive.solve_all_pairs(setup)
    if args.spectrum:
        fio.write_eigs_csv(args.spectrum, reports)
    else:
        print("i,j,rank,lambda")
        for (i, j) in sorted(reports):
            for rank, lam in enumerate(reports[(i, j)].eigenvalues, 1):
                print(f"{i},{j},{rank},{float(lam)!r}")
    return 0


def _cmd_convert_spe10(args):
    if (args.layer is None) == (args.box is None):
        raise SystemExit("error: pass exactly one of --layer / --box")
    box = None
    if args.box is not None:
        v = _parse_ints(args.box, "--box", dims=(6,))
        box = (v[:3], v[3:])
    counts = fio.convert_spe10(args.raw, args.out, layer=args.layer, box=box)
    print(f"wrote {args.out} ({'x'.join(str(c) for c in counts)})")
    return 0


def _cmd_synthetic(args):
    counts = _parse_ints(args.grid, "--grid")
    params = {}
    for key in ("value", "contrast", "orders", "width"):
        v = getattr(args, key)
        if v is not None:
            params[key] = v
    if args.blocks is not None:
        params["blocks"] = _parse_ints(args.blocks, "--blocks")
    if args.n_channels is not None:
        params["n_channels"] = args.n_channels
    if args.passes is not None:
        params["passes"] = args.passes
    k = fio.synthetic_field(args.kind, counts, seed=args.seed, **params)
    fio.write_perm(args.out, counts, k)
    print(f"wrote {args.out}")
    return 0


def _cmd_oracle_check(args):
    grid, perm, wells, system, dec, config = _build_problem(args)
    if grid.n_flux_dofs + grid.n_cells > oracle.DENSE_LIMIT:
        raise SystemExit("error: problem too large for the reference solve")
    exact = oracle.direct_solve(grid, perm, wells)
    code = 0
    try:
        report = solver.solve(system, dec, config, u_exact=exact.u)
    except NonConvergenceError as exc:
        if exc.report is None:
            raise
        report = exc.report
        code = 2
    du = np.linalg.norm(report.u - exact.u) / np.linalg.norm(exact.u)
    p = report.p - report.p.mean()
    dp = np.linalg.norm(p - exact.p) / np.linalg.norm(exact.p)
    print("metric,value")
    print(f"flux_rel_err,{float(du)!r}")
    print(f"pressure_rel_err,{float(dp)!r}")
    print(f"it,{report.it}")
    print(f"kappa,{float(report.kappa)!r}")
    return code


def build_parser():
    ap = argparse.ArgumentParser(
        prog="bddcflow",
        description="Adaptive BDDC solver for mixed Darcy flow")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn in (("solve", _cmd_solve),
                     ("eigs-report", _cmd_eigs_report),
                     ("oracle-check", _cmd_oracle_check)):
        p = sub.add_parser(name)
        _add_problem_args(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("convert-spe10")
    p.add_argument("--raw", required=True, help="raw three-block field file")
    p.add_argument("--layer", type=int, default=None, help="1-based layer")
    p.add_argument("--box", default=None, help="x0,y0,z0,nx,ny,nz (0-based)")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_convert_spe10)

    p = sub.add_parser("synthetic")
    p.add_argument("--kind", required=True,
                   choices=["constant", "checkerboard", "log-uniform",
                            "channels", "smooth"])
    p.add_argument("--grid", required=True, help="nx,ny[,nz]")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--value", type=float, default=None)
    p.add_argument("--contrast", type=float, default=None)
    p.add_argument("--blocks", default=None, help="bx,by[,bz]")
    p.add_argument("--orders", type=float, default=None)
    p.add_argument("--n-channels", type=int, default=None)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--passes", type=int, default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_synthetic)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, NumericalFailureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
