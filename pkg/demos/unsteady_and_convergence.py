# %% [markdown]
# Time stepping and mesh refinement
#
# Backward Euler carries the low-rank state from one step to the next.  The
# mass-weighted norm of the solution is tracked along the way.

# %%
from stochdg import driver
from stochdg.krylov import SolverConfig

spec = driver.BenchmarkSpec.defaults("unsteady-diff", nx=8, N=3, Q=2, nt=16,
                                     config=SolverConfig(tol=1e-6, eps_trunc=1e-8))
system = driver.build_system(spec)
states, reports = driver.solve_unsteady(spec, system)
for n in (0, 3, 7, 15):
    U, rep = states[n], reports[n]
    print(f"step {n + 1:2d}: rank {U.rank:2d}, iterations {rep.iterations}, "
          f"norm {driver.discrete_norm(U, system.spatial.M):.5f}")

# %% [markdown]
# Energy-norm error of the deterministic solver on a smooth Poisson problem.
# Halving h should roughly halve the error.

# %%
for nx, h, err, rate in driver.convergence_study((8, 16, 32)):
    print(f"nx {nx:3d}  h {h:.4f}  error {err:.4e}  rate {rate:.3f}")
