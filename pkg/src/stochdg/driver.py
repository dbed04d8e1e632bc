"""Benchmark problems, solve orchestration, moments, reference oracles and output."""
import csv
import json
import os
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import krylov
from . import lowrank as lr
from . import precond as pcmod
from .chaos import ChaosBasis, chaos_basis, evaluate_basis
from .dg_assembly import (ProblemData, assemble_spatial, energy_error)
from .mesh import build_rect_mesh
from .random_field import XI_BOUND, CovarianceSpec, assemble_2d_eigenpairs

PROBLEMS = ("steady-diff", "steady-conv", "unsteady-diff")
SOLVERS = krylov.METHODS + ("direct",)

_DEFAULTS = {
    "steady-diff": dict(nx=32, N=3, Q=3, ell=1.0, kappa=0.05, nu=1e-4),
    "steady-conv": dict(nx=32, N=7, Q=3, ell=1.0, kappa=0.05, nu=1.0),
    "unsteady-diff": dict(nx=32, N=9, Q=3, ell=3.0, kappa=0.15, nu=1.0, T=0.5, nt=32),
}
_DOMAINS = {
    "steady-diff": (-1.0, 1.0, -1.0, 1.0),
    "steady-conv": (0.0, 1.0, 0.0, 1.0),
    "unsteady-diff": (0.0, 1.0, 0.0, 1.0),
}


@dataclass
class BenchmarkSpec:
    problem: str = "steady-diff"
    nx: int = 32
    ny: int = None
    N: int = 3
    Q: int = 3
    ell: float = 1.0
    kappa: float = 0.05
    nu: float = 1e-4
    sigma: float = 10.0
    solver: str = "gmres"
    config: krylov.SolverConfig = field(default_factory=krylov.SolverConfig)
    T: float = 0.5
    nt: int = 32
    penalty_in_modes: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.ny is None:
            self.ny = self.nx
        if self.nx < 1 or self.ny < 1 or self.N < 1 or self.Q < 0:
            raise ValueError("need nx, ny, N >= 1 and Q >= 0")
        if not (self.ell > 0 and self.kappa >= 0 and self.nu > 0 and self.sigma > 0):
            raise ValueError("need ell > 0, kappa >= 0, nu > 0, sigma > 0")
        if self.nt < 1 or not self.T > 0:
            raise ValueError("need T > 0 and nt >= 1")
        if self.solver != "direct" and self.config.method != self.solver:
            self.config = replace(self.config, method=self.solver)

    @classmethod
    def defaults(cls, problem, **overrides):
        """Benchmark configuration with the standard parameters, then ``overrides``."""
        if problem not in PROBLEMS:
            raise ValueError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
        kw = dict(_DEFAULTS[problem])
        kw.update(overrides)
        return cls(problem=problem, **kw)

    @property
    def domain(self):
        return _DOMAINS[self.problem]

    @property
    def dt(self):
        return self.T / self.nt


@dataclass
class MomentFields:
    mean: np.ndarray
    variance: np.ndarray
    coords: np.ndarray = None
    mean_stderr: np.ndarray = None
    variance_stderr: np.ndarray = None
    samples: int = None
    skipped: int = 0
    degenerate: bool = False


class System(NamedTuple):
    op: lr.KroneckerOperator
    F: lr.LowRankMatrix
    mesh: object
    basis: ChaosBasis
    spatial: object
    data: ProblemData
    kl: object


# ---------------------------------------------------------------- problems

def _zero(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def _const(c):
    return lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(c))


def _dirichlet_diff(x, y):
    # x on the bottom, 0 on top, -1 on the left side, 1 on the right side
    out = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
    x = np.broadcast_to(x, out.shape)
    y = np.broadcast_to(y, out.shape)
    tol = 1e-12
    out = np.where(np.abs(y + 1) < tol, x, out)
    out = np.where(np.abs(x + 1) < tol, -1.0, out)
    out = np.where(np.abs(x - 1) < tol, 1.0, out)
    out = np.where(np.abs(y - 1) < tol, 0.0, out)
    return out


def _dirichlet_conv(x, y):
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    x = np.broadcast_to(x, shape)
    y = np.broadcast_to(y, shape)
    tol = 1e-12
    on_s = (np.abs(y) < tol) | (((np.abs(x) < tol) | (np.abs(x - 1) < tol)) & (y <= 0.5 + tol))
    return np.where(on_s, 1.0, 0.0)


def _dirichlet_unsteady(x, y):
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    x = np.broadcast_to(x, shape)
    y = np.broadcast_to(y, shape)
    return np.where(np.abs(x) < 1e-12, y * (1 - y), 0.0)


def benchmark_kl(spec):
    cov = CovarianceSpec(spec.kappa, (spec.ell, spec.ell), spec.domain)
    return assemble_2d_eigenpairs(cov, spec.N)


def benchmark_data(spec, kl=None):
    """Coefficients of the benchmark problem as an affine expansion in ``xi``."""
    kl = benchmark_kl(spec) if kl is None else kl
    nu = spec.nu
    if spec.problem == "steady-diff":
        modes = [(kl.mode(k, nu), None) for k in range(kl.n_terms)]
        data = ProblemData(_const(nu), _velocity_const(0.0, 1.0), _zero, _dirichlet_diff, modes)
    elif spec.problem == "steady-conv":
        # first-order expansion of (cos(eta/5), sin(eta/5)) about eta = 0
        modes = []
        for k in range(kl.n_terms):
            m = kl.mode(k, 0.2)
            modes.append((None, lambda x, y, m=m: (_zero(x, y), m(x, y))))
        data = ProblemData(_const(nu), _velocity_const(1.0, 0.0), _zero, _dirichlet_conv, modes)
    else:
        modes = [(kl.mode(k, nu), None) for k in range(kl.n_terms)]
        data = ProblemData(_const(nu), _velocity_const(1.0, 1.0), _zero, _dirichlet_unsteady, modes)
    data.sigma = spec.sigma
    data.penalty_in_modes = spec.penalty_in_modes
    return data


def _velocity_const(bx, by):
    def velocity(x, y):
        z = _zero(x, y)
        return (z + bx, z + by)
    return velocity


def galerkin_system(mesh, data, basis):
    """Kronecker operator and factored right-hand side ``sum_i f_i g_i^T``."""
    if data.n_modes != basis.n_vars:
        raise ValueError(f"{data.n_modes} coefficient modes but {basis.n_vars} random variables")
    spatial = assemble_spatial(mesh, data)
    op = lr.KroneckerOperator(basis.G, spatial.K)
    F = lr.LowRankMatrix(np.column_stack(spatial.f), np.column_stack(basis.g))
    F = lr.truncate(F, 1e-14) if np.any(F.W) else lr.LowRankMatrix.zeros(*op.shape)
    return op, F, spatial


def build_system(spec, data=None):
    mesh = build_rect_mesh(*spec.domain, spec.nx, spec.ny)
    kl = benchmark_kl(spec)
    data = benchmark_data(spec, kl) if data is None else data
    basis = chaos_basis(data.n_modes, spec.Q)
    op, F, spatial = galerkin_system(mesh, data, basis)
    return System(op, F, mesh, basis, spatial, data, kl)


# ---------------------------------------------------------------- solves

def _direct_lowrank(op, F, eps):
    t0 = time.perf_counter()
    U_dense = krylov.full_direct(op, F.full())
    U = lr.LowRankMatrix.from_dense(U_dense, eps)
    wall = time.perf_counter() - t0
    normF = lr.norm(F)
    res = lr.norm(lr.combine([(1.0, F), (-1.0, lr.kron_apply(op, U))])) / normF if normF else 0.0
    rep = krylov.SolveReport("direct", 1, U.rank, res, wall, lr.memory_kb(U), [res], [U.rank])
    return U, rep


def solve_system(op, F, spec_or_cfg, solver=None, pc=None, U0=None):
    cfg = spec_or_cfg.config if isinstance(spec_or_cfg, BenchmarkSpec) else spec_or_cfg
    solver = solver or (spec_or_cfg.solver if isinstance(spec_or_cfg, BenchmarkSpec) else cfg.method)
    if solver == "direct":
        return _direct_lowrank(op, F, cfg.eps_trunc)
    pc = pcmod.build(cfg.precond, op) if pc is None else pc
    return krylov.solve(op, pc, F, replace(cfg, method=solver), U0)


def solve_steady(spec, system=None):
    """Steady stochastic Galerkin solve; returns ``(U, report)``."""
    system = build_system(spec) if system is None else system
    return solve_system(system.op, system.F, spec)


def time_operator(system, dt):
    """``G_0 kron (M + dt K_0) + sum_k G_k kron (dt K_k)``."""
    K = [(system.spatial.M + dt * system.spatial.K[0]).tocsr()]
    K += [dt * k for k in system.spatial.K[1:]]
    return lr.KroneckerOperator(system.basis.G, K)


def solve_unsteady(spec, system=None, initial=None):
    """Backward Euler in time; returns ``(states, reports)`` for steps 1..nt.

    Each step starts from the previous state.  ``initial`` defaults to zero.
    """
    system = build_system(spec) if system is None else system
    dt = spec.dt
    op = time_operator(system, dt)
    pc = None if spec.solver == "direct" else pcmod.build(spec.config.precond, op)
    M = system.spatial.M
    U = lr.LowRankMatrix.zeros(*op.shape) if initial is None else initial
    states, reports = [], []
    for n in range(1, spec.nt + 1):
        rhs = lr.combine([(1.0, lr.LowRankMatrix(M @ U.W, U.V)), (dt, system.F)])
        rhs = lr.truncate(rhs, 1e-14)
        warm = U if U.rank else None
        U, rep = solve_system(op, rhs, spec, pc=pc, U0=warm)
        if rep.termination != "converged":
            raise RuntimeError(f"time step {n} failed: {rep.termination}, "
                               f"residual {rep.relative_residual:.3e}")
        states.append(U)
        reports.append(rep)
    return states, reports


def discrete_norm(U, M):
    """``sqrt(sum_j u_j^T M u_j)``: the mass-weighted norm over space and chaos modes."""
    if U.rank == 0:
        return 0.0
    return float(np.sqrt(max(np.sum((U.W.T @ (M @ U.W)) * (U.V.T @ U.V)), 0.0)))


# ---------------------------------------------------------------- moments

def compute_moments(U, basis, mesh=None):
    """Mean is the zeroth chaos coefficient; variance sums the squares of the others."""
    if U.shape[1] != basis.size:
        raise ValueError(f"solution has {U.shape[1]} chaos columns, basis has {basis.size}")
    coords = None if mesh is None else mesh.dof_coordinates
    if U.rank == 0:
        z = np.zeros(U.shape[0])
        return MomentFields(z, z.copy(), coords)
    mean = U.W @ U.V[0]
    V1 = U.V[1:]
    variance = np.einsum("ir,rs,is->i", U.W, V1.T @ V1, U.W)
    return MomentFields(mean, variance, coords)


def monte_carlo_reference(spec, samples, seed=0, system=None):
    """Sample moments of deterministic solves at uniform draws of ``xi``.

    The variance uses the unbiased ``n - 1`` convention; with one sample it
    is reported as zero and ``degenerate`` is set.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if spec.problem == "unsteady-diff":
        raise ValueError("Monte Carlo reference is implemented for steady problems")
    system = build_system(spec) if system is None else system
    K, f = system.spatial.K, system.spatial.f
    rng = np.random.default_rng(seed)
    n = K[0].shape[0]
    total = np.zeros(n)
    sols = []
    skipped = 0
    for _ in range(samples):
        xi = rng.uniform(-XI_BOUND, XI_BOUND, size=len(K) - 1)
        A = K[0] + sum(x * k for x, k in zip(xi, K[1:]))
        b = f[0] + sum(x * fk for x, fk in zip(xi, f[1:]))
        try:
            u = spla.splu(sp.csc_matrix(A)).solve(b)
        except RuntimeError:
            skipped += 1
            continue
        if not np.all(np.isfinite(u)):
            skipped += 1
            continue
        sols.append(u)
    S = np.array(sols)
    m = len(S)
    if m == 0:
        raise RuntimeError("every Monte Carlo sample was singular")
    mean = S.mean(axis=0)
    coords = system.mesh.dof_coordinates
    if m == 1:
        z = np.zeros(n)
        return MomentFields(mean, z, coords, z.copy(), z.copy(), 1, skipped, True)
    dev = S - mean
    var = np.sum(dev**2, axis=0) / (m - 1)
    m4 = np.mean(dev**4, axis=0)
    var_se = np.sqrt(np.maximum(m4 - var**2 * (m - 3) / (m - 1), 0.0) / m)
    return MomentFields(mean, var, coords, np.sqrt(var / m), var_se, m, skipped, False)


# ---------------------------------------------------------------- convergence

def _poisson_data(sigma):
    s = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    data = ProblemData(_const(1.0), _velocity_const(0.0, 0.0),
                       lambda x, y: 2 * np.pi**2 * s(x, y), _zero, [], sigma)
    grad = lambda x, y: (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                         np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))
    return data, s, grad


def convergence_study(levels=(8, 16, 32, 64), sigma=10.0):
    """Energy-norm errors for ``-lap u = 2 pi^2 sin(pi x) sin(pi y)`` on the unit square.

    Returns rows ``(nx, h, error, rate)``; the first rate is ``nan``.
    """
    data, exact, grad = _poisson_data(sigma)
    rows = []
    for nx in levels:
        mesh = build_rect_mesh(0, 1, 0, 1, nx, nx)
        spatial = assemble_spatial(mesh, data)
        u = spla.spsolve(spatial.K[0].tocsc(), spatial.f[0])
        err = energy_error(mesh, u, sigma, data.diffusion, None, exact, grad)
        rows.append([nx, mesh.h, err, np.nan])
    for i in range(1, len(rows)):
        rows[i][3] = np.log(rows[i - 1][2] / rows[i][2]) / np.log(rows[i - 1][1] / rows[i][1])
    return [tuple(r) for r in rows]


def stochastic_convergence_study(degrees=(0, 1, 2, 3, 4), nx=16, amplitude=0.5,
                                 sigma=10.0, n_quad=24):
    """Error in the xi-integrated energy norm for ``a = 1 + amplitude * xi``.

    The exact solution is ``sin(pi x) sin(pi y) / (1 + amplitude * xi)``;
    returns rows ``(Q, error)`` at a fixed mesh.
    """
    if not amplitude * XI_BOUND < 1:
        raise ValueError("diffusion must stay positive: need amplitude * sqrt(3) < 1")
    s = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    ds = lambda x, y: (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                       np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))
    data = ProblemData(_const(1.0), _velocity_const(0.0, 0.0),
                       lambda x, y: 2 * np.pi**2 * s(x, y), _zero,
                       [(_const(amplitude), None)], sigma)
    mesh = build_rect_mesh(0, 1, 0, 1, nx, nx)
    t, w = np.polynomial.legendre.leggauss(n_quad)
    xq = XI_BOUND * t
    wq = 0.5 * w
    rows = []
    for Q in degrees:
        basis = chaos_basis(1, Q)
        op, F, _ = galerkin_system(mesh, data, basis)
        U = krylov.full_direct(op, F.full())
        psi = evaluate_basis(basis.index_set, xq[:, None])       # (nq, P)
        total = 0.0
        for x, wt, row in zip(xq, wq, psi):
            a = 1.0 + amplitude * x
            ex = lambda X, Y, a=a: s(X, Y) / a
            gr = lambda X, Y, a=a: tuple(g / a for g in ds(X, Y))
            e = energy_error(mesh, U @ row, sigma, _const(a), None, ex, gr)
            total += wt * e**2
        rows.append((Q, float(np.sqrt(total))))
    return rows


# ---------------------------------------------------------------- output

def _fmt(x):
    return "%.17g" % x


def write_moments_csv(path, moments):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y", "mean", "variance"])
        for (x, y), m, v in zip(moments.coords, moments.mean, moments.variance):
            out.writerow([_fmt(x), _fmt(y), _fmt(m), _fmt(v)])


def _to_json(o, indent=0):
    """JSON text with every float printed to 17 significant digits."""
    pad = "  " * (indent + 1)
    if isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, bool) or o is None:
        return json.dumps(o)
    if isinstance(o, float):
        return _fmt(o) if np.isfinite(o) else "null"
    if isinstance(o, (int, str)):
        return json.dumps(o)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in o.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(o, (list, tuple, np.ndarray)):
        vals = [_to_json(v, indent + 1) for v in o]
        return "[" + ", ".join(vals) + "]"
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_report_json(path, reports, extra=None):
    objs = []
    for i, rep in enumerate(reports):
        d = rep.to_dict()
        if len(reports) > 1:
            d["step"] = i + 1
        objs.append(d)
    payload = {"solves": objs}
    if extra:
        payload.update(extra)
    text = _to_json(payload)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def write_history_csv(path, reports):
    multi = len(reports) > 1
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow((["step"] if multi else []) + ["iteration", "relative_residual", "rank"])
        for step, rep in enumerate(reports, start=1):
            for it, (res, rk) in enumerate(zip(rep.history, rep.rank_history), start=1):
                out.writerow(([step] if multi else []) + [it, _fmt(res), rk])


def write_outputs(out_dir, moments, reports, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    write_moments_csv(os.path.join(out_dir, "moments.csv"), moments)
    write_report_json(os.path.join(out_dir, "report.json"), reports, extra)
    write_history_csv(os.path.join(out_dir, "history.csv"), reports)
