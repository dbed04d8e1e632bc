# %% [markdown]
# Mean and variance from the chaos coefficients, checked by sampling
#
# Column 0 of the solution matrix is the mean.  With an orthonormal basis the
# variance is the row-wise sum of squares of the remaining columns.

# %%
import numpy as np

from stochdg import driver

spec = driver.BenchmarkSpec.defaults("steady-diff", nx=8, N=3, Q=3, kappa=0.3, nu=1e-2)
system = driver.build_system(spec)
U, _ = driver.solve_system(system.op, system.F, spec, solver="direct")
sg = driver.compute_moments(U, system.basis, system.mesh)

# %%
mc = driver.monte_carlo_reference(spec, 1000, seed=7, system=system)
z_mean = np.abs(sg.mean - mc.mean) / mc.mean_stderr
z_var = np.abs(sg.variance - mc.variance) / mc.variance_stderr
print("largest mean discrepancy in standard errors:", z_mean.max().round(2))
print("largest variance discrepancy in standard errors:", z_var.max().round(2))

# %% [markdown]
# Where is the solution most uncertain?

# %%
i = np.argmax(sg.variance)
print("peak variance", sg.variance[i], "at", sg.coords[i])
