"""Preconditioned Krylov solvers for ``sum_k K_k U G_k^T = F``.

Each method is written once against a small vector-space interface.  The
low-rank space keeps iterates as ``W V^T`` and compresses at the marked
steps; the dense space uses full ``N_d x P`` arrays with no compression and
provides the full-rank reference solvers.

Convergence is always measured relative to ``||F||_F``.
"""
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import lowrank as lr
from . import precond as pcmod

METHODS = ("cg", "bicgstab", "qmrcgstab", "gmres")
GMRES_MAX_BASIS = 100


@dataclass
class SolverConfig:
    method: str = "gmres"
    tol: float = 1e-4
    eps_trunc: float = 1e-6
    maxit: int = 100
    precond: str = "mean"
    max_rank: int = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.maxit < 1:
            raise ValueError("maxit must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.eps_trunc <= self.tol:
            raise ValueError("need 0 < eps_trunc <= tol")


@dataclass
class SolveReport:
    method: str
    iterations: int
    rank: int
    relative_residual: float
    wall_time: float
    memory_kb: float
    history: list = field(default_factory=list)
    rank_history: list = field(default_factory=list)
    termination: str = "converged"
    half_iterations: float = None   # BiCGstab family: exits after the first half count 0.5

    @property
    def converged(self):
        return self.termination == "converged"

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- spaces

class _LowRankSpace:
    def __init__(self, op, pc, eps, max_rank):
        self.op, self.pc, self.eps = op, pc, eps
        self.max_rank = max_rank

    def T(self, X):
        return lr.truncate(X, self.eps, self.max_rank)

    def A(self, X):
        return lr.kron_apply(self.op, X)

    def P(self, X):
        return pcmod.apply_inverse(self.pc, X)

    def lin(self, *terms):
        return lr.combine(terms)

    def inner(self, X, Y):
        return lr.inner(X, Y)

    def norm(self, X):
        return lr.norm(X)

    def zeros(self):
        return lr.LowRankMatrix.zeros(*self.op.shape)

    def rank(self, X):
        return X.rank

    def memory(self, X):
        return lr.memory_kb(X)

    def slack(self):
        return 10.0 * self.eps


class _DenseSpace:
    def __init__(self, op, pc):
        self.op, self.pc = op, pc

    def T(self, X):
        return X

    def A(self, X):
        return self.op.apply_dense(X)

    def P(self, X):
        return pcmod.apply_inverse_dense(self.pc, X)

    def lin(self, *terms):
        out = terms[0][0] * terms[0][1]
        for c, X in terms[1:]:
            out = out + c * X
        return out

    def inner(self, X, Y):
        return float(np.vdot(X, Y))

    def norm(self, X):
        return float(np.linalg.norm(X))

    def zeros(self):
        return np.zeros(self.op.shape)

    def rank(self, X):
        return min(X.shape)

    def memory(self, X):
        return 8.0 * X.size / 1024.0

    def slack(self):
        return 0.0


class _Run:
    """Bookkeeping shared by all methods."""

    def __init__(self, space, F, cfg, method):
        self.s, self.F, self.cfg, self.method = space, F, cfg, method
        self.normF = space.norm(F)
        self.target = cfg.tol * self.normF
        self.history, self.ranks = [], []
        self.t0 = time.perf_counter()

    def residual(self, U):
        if self.normF == 0:
            return 0.0
        return self.s.norm(self.s.lin((1.0, self.F), (-1.0, self.s.A(U)))) / self.normF

    def accept(self, U):
        return self.residual(U) <= self.cfg.tol + self.s.slack()

    def log(self, rel, U):
        self.history.append(float(rel))
        self.ranks.append(int(self.s.rank(U)))

    def finish(self, U, iterations, termination, half=None):
        wall = time.perf_counter() - self.t0
        rep = SolveReport(self.method, int(iterations), int(self.s.rank(U)),
                          float(self.residual(U)), wall, float(self.s.memory(U)),
                          self.history, self.ranks, termination, half)
        return U, rep


def _start(s, F, U0):
    if U0 is None:
        return s.zeros(), F
    return U0, s.T(s.lin((1.0, F), (-1.0, s.A(U0))))


def _bad(x):
    return x == 0 or not np.isfinite(x)


# ---------------------------------------------------------------- methods

def _cg(s, F, cfg, U0, name="cg"):
    run = _Run(s, F, cfg, name)
    U, R = _start(s, F, U0)
    if s.norm(R) <= run.target:
        return run.finish(U, 0, "converged")
    Z = s.T(s.P(R))
    Pk = Z
    Q = s.T(s.A(Pk))
    xi = s.inner(Pk, Q)
    for k in range(1, cfg.maxit + 1):
        if _bad(xi):
            return run.finish(U, k - 1, "breakdown")
        omega = s.inner(R, Pk) / xi
        U = s.T(s.lin((1.0, U), (omega, Pk)))
        R = s.T(s.lin((1.0, F), (-1.0, s.A(U))))
        rn = s.norm(R)
        run.log(rn / run.normF, U)
        if not np.isfinite(rn):
            return run.finish(U, k, "breakdown")
        if rn <= run.target:
            return run.finish(U, k, "converged")
        Z = s.T(s.P(R))
        beta = -s.inner(Z, Q) / xi
        Pk = s.T(s.lin((1.0, Z), (beta, Pk)))
        Q = s.T(s.A(Pk))
        xi = s.inner(Pk, Q)
    return run.finish(U, cfg.maxit, "maxit")


def _bicgstab(s, F, cfg, U0, name="bicgstab"):
    run = _Run(s, F, cfg, name)
    U, R = _start(s, F, U0)
    if s.norm(R) <= run.target:
        return run.finish(U, 0, "converged", 0.0)
    Rt = R
    rho = s.inner(Rt, R)
    S = R
    St = s.T(s.P(S))
    V = s.A(St)
    for k in range(1, cfg.maxit + 1):
        den = s.inner(Rt, V)
        if _bad(den):
            return run.finish(U, k - 1, "breakdown", k - 1.0)
        omega = s.inner(Rt, R) / den
        Z = s.T(s.lin((1.0, R), (-omega, V)))
        Zt = s.T(s.P(Z))
        Tk = s.T(s.A(Zt))
        zn = s.norm(Z)
        if zn <= run.target:
            U = s.T(s.lin((1.0, U), (omega, St)))
            run.log(zn / run.normF, U)
            return run.finish(U, k, "converged", k - 0.5)
        tt = s.inner(Tk, Tk)
        if _bad(tt):
            return run.finish(U, k - 1, "breakdown", k - 1.0)
        xi = s.inner(Tk, Z) / tt
        U = s.T(s.lin((1.0, U), (omega, St), (xi, Zt)))
        R = s.T(s.lin((1.0, F), (-1.0, s.A(U))))
        rn = s.norm(R)
        run.log(rn / run.normF, U)
        if rn <= run.target:
            return run.finish(U, k, "converged", float(k))
        rho_new = s.inner(Rt, R)
        if _bad(rho) or _bad(xi) or not np.isfinite(rn):
            return run.finish(U, k, "breakdown", float(k))
        beta = (rho_new / rho) * (omega / xi)
        S = s.T(s.lin((1.0, R), (beta, S), (-beta * xi, V)))
        St = s.T(s.P(S))
        V = s.T(s.A(St))
        rho = rho_new
    return run.finish(U, cfg.maxit, "maxit", float(cfg.maxit))


def _qmrcgstab(s, F, cfg, U0, name="qmrcgstab"):
    run = _Run(s, F, cfg, name)
    U, R0 = _start(s, F, U0)
    if s.norm(R0) <= run.target:
        return run.finish(U, 0, "converged", 0.0)
    ref = s.norm(s.P(R0)) if U0 is None else s.norm(s.P(F))
    restarts = 0

    def begin(R0):
        # fresh recurrences from residual R0
        Z = s.P(R0)
        Rt = R0 if s.inner(Z, R0) != 0 else Z
        return Z, Rt, s.zeros(), s.zeros(), s.zeros(), 1.0, 1.0, 1.0, s.norm(Z), 0.0, 0.0

    Z, Rt, Y, V, D, rho, alpha, omega, tau, theta, eta = begin(R0)
    k = 0
    while k < cfg.maxit:
        k += 1
        rho_new = s.inner(Z, Rt)
        if _bad(rho) or _bad(omega):
            return run.finish(U, k - 1, "breakdown", k - 1.0)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        Y = s.T(s.lin((1.0, Z), (beta, Y), (-beta * omega, V)))
        Yt = s.T(s.A(Y))
        if s.norm(Yt) <= run.target:
            if run.accept(U):
                return run.finish(U, k - 1, "converged", k - 1.0)
            # direction vanished before the true residual did: restart
            R = s.T(s.lin((1.0, F), (-1.0, s.A(U))))
            run.log(s.norm(s.P(R)) / ref, U)
            if restarts >= cfg.maxit or s.norm(R) == 0:
                return run.finish(U, k, "breakdown", k - 0.5)
            restarts += 1
            Z, Rt, Y, V, D, rho, alpha, omega, tau, theta, eta = begin(R)
            continue
        V = s.T(s.P(Yt))
        den = s.inner(V, Rt)
        if _bad(den):
            return run.finish(U, k - 1, "breakdown", k - 1.0)
        alpha = rho / den
        S = s.T(s.lin((1.0, Z), (-alpha, V)))

        # first quasi-minimisation
        theta_t = s.norm(S) / tau
        c = 1.0 / np.sqrt(1.0 + theta_t**2)
        tau_t = tau * theta_t * c
        eta_t = c**2 * alpha
        Dt = s.T(s.lin((1.0, Y), (theta**2 * eta / alpha, D)))
        Ut = s.T(s.lin((1.0, U), (eta_t, Dt)))
        half_small = np.sqrt(k + 1) * abs(tau_t) / ref <= cfg.tol
        if half_small and run.accept(Ut):
            run.log(abs(tau_t) / ref, Ut)
            return run.finish(Ut, k, "converged", k - 0.5)

        St = s.T(s.A(S))
        Tk = s.T(s.P(St))
        tt = s.inner(Tk, Tk)
        if _bad(tt) or _bad(tau_t):
            # the recurrence cannot continue; restart from the current iterate
            U = Ut
            R = s.T(s.lin((1.0, F), (-1.0, s.A(U))))
            run.log(s.norm(s.P(R)) / ref, U)
            if restarts >= cfg.maxit or s.norm(R) == 0:
                return run.finish(U, k, "breakdown", k - 0.5)
            restarts += 1
            Z, Rt, Y, V, D, rho, alpha, omega, tau, theta, eta = begin(R)
            continue
        omega = s.inner(S, Tk) / tt
        if _bad(omega):
            return run.finish(Ut, k, "breakdown", k - 0.5)
        Z = s.lin((1.0, S), (-omega, Tk))

        # second quasi-minimisation
        theta = s.norm(Z) / tau_t
        c = 1.0 / np.sqrt(1.0 + theta**2)
        tau = tau_t * theta * c
        eta = c**2 * omega
        D = s.T(s.lin((1.0, S), (theta_t**2 * eta_t / omega, Dt)))
        U = s.T(s.lin((1.0, Ut), (eta, D)))
        run.log(abs(tau) / ref, U)
        if np.sqrt(k + 1) * abs(tau) / ref <= cfg.tol:
            if run.accept(U):
                return run.finish(U, k, "converged", float(k))
            # quasi-residual met but the true residual is not: restart
            R = s.T(s.lin((1.0, F), (-1.0, s.A(U))))
            restarts += 1
            Z, Rt, Y, V, D, rho, alpha, omega, tau, theta, eta = begin(R)
    return run.finish(U, cfg.maxit, "maxit", float(cfg.maxit))


def _gmres(s, F, cfg, U0, name="gmres"):
    run = _Run(s, F, cfg, name)
    U0, R0 = _start(s, F, U0)
    beta0 = s.norm(R0)
    if beta0 <= run.target:
        return run.finish(U0, 0, "converged")
    m = min(cfg.maxit, GMRES_MAX_BASIS)
    basis = [s.lin((1.0 / beta0, R0))]
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    xi = np.zeros(m + 1)
    xi[0] = beta0
    U = U0

    def assemble(k):
        y = sla.solve_triangular(H[:k + 1, :k + 1], xi[:k + 1])
        Ysum = s.T(s.lin(*[(y[i], basis[i]) for i in range(k + 1)]))
        return s.T(s.lin((1.0, U0), (1.0, s.T(s.P(Ysum)))))

    for k in range(m):
        Zk = s.T(s.P(basis[k]))
        Wk = s.T(s.A(Zk))
        for i in range(k + 1):
            H[i, k] = s.inner(Wk, basis[i])
            Wk = s.T(s.lin((1.0, Wk), (-H[i, k], basis[i])))
        hnext = s.norm(Wk)
        for i in range(k):
            a, b = H[i, k], H[i + 1, k]
            H[i, k] = cs[i] * a + sn[i] * b
            H[i + 1, k] = -sn[i] * a + cs[i] * b
        denom = np.hypot(H[k, k], hnext)
        if denom == 0 or not np.isfinite(denom):
            return run.finish(U, k, "breakdown")
        cs[k], sn[k] = H[k, k] / denom, hnext / denom
        H[k, k] = denom
        xi[k + 1] = -sn[k] * xi[k]
        xi[k] = cs[k] * xi[k]
        lucky = hnext <= 1e-14 * beta0
        if abs(xi[k + 1]) <= run.target or lucky or k == m - 1:
            U = assemble(k)
            run.log(abs(xi[k + 1]) / run.normF, U)
            if run.accept(U):
                return run.finish(U, k + 1, "converged")
            if lucky:
                return run.finish(U, k + 1, "breakdown")
        else:
            run.log(abs(xi[k + 1]) / run.normF, Wk)
        basis.append(s.lin((1.0 / hnext, Wk)))
    return run.finish(U, m, "maxit")


_IMPL = {"cg": _cg, "bicgstab": _bicgstab, "qmrcgstab": _qmrcgstab, "gmres": _gmres}


def _check_rhs(op, F):
    if tuple(F.shape) != op.shape:
        raise ValueError(f"right-hand side shape {tuple(F.shape)} does not match operator {op.shape}")


def _lowrank(method, op, pc, F, cfg, U0=None):
    _check_rhs(op, F)
    space = _LowRankSpace(op, pc, cfg.eps_trunc, cfg.max_rank)
    return _IMPL[method](space, F, cfg, U0, name=method)


def lr_cg(op, pc, F, cfg, U0=None):
    """Low-rank preconditioned CG; returns ``(U, SolveReport)``."""
    return _lowrank("cg", op, pc, F, cfg, U0)


def lr_bicgstab(op, pc, F, cfg, U0=None):
    """Low-rank right-preconditioned BiCGstab with an explicitly recomputed residual."""
    return _lowrank("bicgstab", op, pc, F, cfg, U0)


def lr_qmrcgstab(op, pc, F, cfg, U0=None):
    """Low-rank left-preconditioned QMRCGstab.

    The history records the quasi-residual ``|tau_k| / tau_0``, which is
    nonincreasing by construction; convergence is additionally confirmed on
    the true residual.
    """
    return _lowrank("qmrcgstab", op, pc, F, cfg, U0)


def lr_gmres(op, pc, F, cfg, U0=None):
    """Low-rank right-preconditioned GMRES without restarts (basis size <= 100)."""
    return _lowrank("gmres", op, pc, F, cfg, U0)


def solve(op, pc, F, cfg, U0=None):
    """Dispatch on ``cfg.method``."""
    return _lowrank(cfg.method, op, pc, F, cfg, U0)


def full_direct(op, F_dense):
    """Solve the assembled global system with a sparse direct method."""
    F_dense = np.asarray(F_dense, dtype=float)
    _check_rhs(op, F_dense)
    if not np.any(F_dense):
        return np.zeros(op.shape)
    A = op.to_sparse().tocsc()
    x = spla.spsolve(A, F_dense.ravel(order="F"))
    if not np.all(np.isfinite(x)):
        raise RuntimeError("global stochastic Galerkin system is singular")
    return x.reshape(op.shape, order="F")


def full_iterative(op, pc, F_dense, cfg, U0=None):
    """Same Krylov methods on full ``N_d x P`` arrays without truncation."""
    F_dense = np.asarray(F_dense, dtype=float)
    _check_rhs(op, F_dense)
    space = _DenseSpace(op, pc)
    return _IMPL[cfg.method](space, F_dense, cfg, U0, name=cfg.method)
