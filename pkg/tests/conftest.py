import numpy as np
import pytest
import scipy.sparse as sp

from stochdg.chaos import chaos_basis
from stochdg.driver import BenchmarkSpec, build_system
from stochdg.lowrank import KroneckerOperator, LowRankMatrix


def small_system(kappa=0.05, nu=1e-2, nx=2, N=2, Q=3, **kw):
    """Diffusion benchmark at N_d = 24, P = 10 by default."""
    spec = BenchmarkSpec.defaults("steady-diff", nx=nx, N=N, Q=Q, kappa=kappa, nu=nu, **kw)
    return spec, build_system(spec)


def random_spd_system(seed=0, n=24, N=2, Q=3, strength=0.15):
    """Symmetric Kronecker system dominated by its first term, with a rank-2 right-hand side."""
    rng = np.random.default_rng(seed)
    basis = chaos_basis(N, Q)
    B = rng.standard_normal((n, n))
    K = [sp.csr_matrix(B @ B.T / n + np.eye(n))]
    for _ in range(N):
        S = rng.standard_normal((n, n))
        K.append(sp.csr_matrix(strength * (S + S.T) / (2 * np.sqrt(n))))
    op = KroneckerOperator(basis.G, K)
    F = LowRankMatrix(rng.standard_normal((n, 2)), rng.standard_normal((basis.size, 2)))
    return op, F


@pytest.fixture
def tiny():
    return small_system()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.LINES):
            terminalreporter.write_line(mod.LINES[n])
