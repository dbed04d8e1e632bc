"""Low-rank stochastic Galerkin solvers for random convection-diffusion problems
discretised with SIPG discontinuous Galerkin elements."""
from .mesh import Mesh, build_rect_mesh, classify_edges
from .random_field import (CovarianceSpec, KLExpansion, assemble_2d_eigenpairs,
                           select_truncation, solve_1d_eigenpairs, evaluate_kl)
from .chaos import ChaosBasis, MultiIndexSet, chaos_basis, enumerate_indices, build_G
from .dg_assembly import (ProblemData, SpatialOperators, assemble_K0, assemble_Ki,
                          assemble_rhs, assemble_mass, assemble_spatial)
from .lowrank import (LowRankMatrix, KroneckerOperator, truncate, kron_apply, inner,
                      axpy, memory_kb)
from .precond import Preconditioner, build as build_preconditioner, apply_inverse
from .krylov import (SolverConfig, SolveReport, lr_cg, lr_bicgstab, lr_qmrcgstab,
                     lr_gmres, full_direct, full_iterative)

__version__ = "0.1.0"
