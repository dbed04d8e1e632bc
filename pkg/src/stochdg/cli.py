"""Command line entry point: ``stochdg solve | oracle mc | study convergence``."""
import argparse
import csv
import os
import sys

from . import driver
from .krylov import SolverConfig


def _problem_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--problem", choices=driver.PROBLEMS, default="steady-diff")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--Q", type=int)
    p.add_argument("--ell", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--solver", choices=driver.SOLVERS, default="gmres")
    p.add_argument("--precond", choices=("mean", "ullmann", "none"), default="mean")
    p.add_argument("--eps-trunc", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--maxit", type=int, default=100)
    p.add_argument("--T", type=float)
    p.add_argument("--nt", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--penalty-in-modes", action="store_true",
                   help="add the interior penalty to every fluctuation matrix")
    p.add_argument("--out", default="out")
    return p


def spec_from_args(args):
    overrides = {k: getattr(args, k) for k in ("nx", "ny", "N", "Q", "ell", "kappa", "nu",
                                               "sigma", "T", "nt")
                 if getattr(args, k) is not None}
    method = args.solver if args.solver != "direct" else "gmres"
    cfg = SolverConfig(method=method, tol=args.tol, eps_trunc=args.eps_trunc,
                       maxit=args.maxit, precond=args.precond)
    return driver.BenchmarkSpec.defaults(args.problem, solver=args.solver, config=cfg,
                                         penalty_in_modes=args.penalty_in_modes, **overrides)


def _cmd_solve(args):
    spec = spec_from_args(args)
    system = driver.build_system(spec)
    if spec.problem == "unsteady-diff":
        states, reports = driver.solve_unsteady(spec, system)
        U = states[-1]
    else:
        U, rep = driver.solve_steady(spec, system)
        reports = [rep]
    moments = driver.compute_moments(U, system.basis, system.mesh)
    extra = {"problem": spec.problem, "N_d": system.op.shape[0], "P": system.op.shape[1],
             "N": spec.N, "Q": spec.Q}
    driver.write_outputs(args.out, moments, reports, extra)
    last = reports[-1]
    print(f"{spec.problem}: {last.termination} in {sum(r.iterations for r in reports)} iterations, "
          f"rank {last.rank}, relative residual {last.relative_residual:.3e}, "
          f"memory {last.memory_kb:.1f} KB -> {args.out}")
    return 0 if all(r.converged for r in reports) else 1


def _cmd_mc(args):
    spec = spec_from_args(args)
    mc = driver.monte_carlo_reference(spec, args.samples, args.seed)
    os.makedirs(args.out, exist_ok=True)
    driver.write_moments_csv(os.path.join(args.out, "moments.csv"), mc)
    path = os.path.join(args.out, "mc.csv")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y", "mean", "variance", "mean_stderr", "variance_stderr"])
        for row in zip(mc.coords[:, 0], mc.coords[:, 1], mc.mean, mc.variance,
                       mc.mean_stderr, mc.variance_stderr):
            out.writerow([driver._fmt(v) for v in row])
    print(f"Monte Carlo: {mc.samples} samples ({mc.skipped} skipped), seed {args.seed} -> {args.out}")
    return 0


def _cmd_convergence(args):
    rows = driver.convergence_study(args.levels, args.sigma if args.sigma else 10.0)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "convergence.csv"), "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["nx", "h", "energy_error", "rate"])
        for r in rows:
            out.writerow([r[0]] + [driver._fmt(v) for v in r[1:]])
    for nx, h, err, rate in rows:
        print(f"nx={nx:4d}  h={h:.4e}  error={err:.6e}  rate={rate:.3f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="stochdg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _problem_flags()

    p = sub.add_parser("solve", parents=[flags], help="stochastic Galerkin solve of a benchmark")
    p.set_defaults(func=_cmd_solve)

    oracle = sub.add_parser("oracle", help="reference computations")
    osub = oracle.add_subparsers(dest="oracle", required=True)
    p = osub.add_parser("mc", parents=[flags], help="Monte Carlo moments")
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=_cmd_mc)

    study = sub.add_parser("study", help="convergence studies")
    ssub = study.add_subparsers(dest="study", required=True)
    p = ssub.add_parser("convergence", help="spatial rate for a manufactured Poisson problem")
    p.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32, 64])
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_convergence)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
