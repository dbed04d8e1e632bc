"""Mean-based and trace-weighted Kronecker preconditioners.

Both have the form ``Gt kron K_0``; the mean-based one uses ``Gt = I``.
Applying the inverse to ``W V^T`` gives ``(K_0^{-1} W)(Gt^{-1} V)^T``, so the
rank is unchanged.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lowrank import LowRankMatrix

KINDS = ("mean", "ullmann", "none")


@dataclass
class Preconditioner:
    kind: str
    K0_lu: object = None         # splu handle
    coeffs: np.ndarray = None    # c_k, ullmann only
    Gt: object = None            # dense Gt, ullmann only
    Gt_lu: object = None         # lu_factor of Gt
    K0: object = None

    @property
    def ready(self):
        return self.kind == "none" or self.K0_lu is not None


def ullmann_coefficients(K):
    """``c_k = trace(K_k^T K_0) / trace(K_0^T K_0)``, computed entrywise."""
    K0 = sp.csr_matrix(K[0])
    denom = K0.multiply(K0).sum()
    return np.array([sp.csr_matrix(k).multiply(K0).sum() / denom for k in K])


def build(kind, op):
    """Factor the preconditioner for a ``KroneckerOperator``."""
    if kind in ("mean-based", "P0"):
        kind = "mean"
    if kind not in KINDS:
        raise ValueError(f"unknown preconditioner {kind!r}; expected one of {KINDS}")
    if kind == "none":
        return Preconditioner("none")
    K0 = op.K[0].tocsc()
    try:
        lu = spla.splu(K0)
    except RuntimeError as exc:
        raise RuntimeError("K_0 is singular; cannot build preconditioner") from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise RuntimeError("K_0 is singular; cannot build preconditioner")
    if kind == "mean":
        return Preconditioner("mean", lu, K0=op.K[0])
    c = ullmann_coefficients(op.K)
    Gt = sum(ck * g.toarray() for ck, g in zip(c, op.G))
    try:
        Gt_lu = sla.lu_factor(Gt, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise RuntimeError("weighted stochastic matrix is singular") from exc
    return Preconditioner("ullmann", lu, c, Gt, Gt_lu, K0=op.K[0])


def apply_inverse(pc, X):
    """``P^{-1}`` applied to a factored matrix."""
    if not pc.ready:
        raise RuntimeError("preconditioner has not been factored")
    if pc.kind == "none" or X.rank == 0:
        return X
    W = pc.K0_lu.solve(X.W)
    V = X.V if pc.kind == "mean" else sla.lu_solve(pc.Gt_lu, X.V)
    return LowRankMatrix(W, V)


def apply_inverse_dense(pc, U):
    """``P^{-1}`` applied to a full ``N_d x P`` array."""
    if not pc.ready:
        raise RuntimeError("preconditioner has not been factored")
    if pc.kind == "none":
        return U
    Y = pc.K0_lu.solve(np.asarray(U, dtype=float))
    if pc.kind == "ullmann":
        # Y Gt^{-T} = (Gt^{-1} Y^T)^T
        Y = sla.lu_solve(pc.Gt_lu, Y.T).T
    return Y


def apply(pc, X):
    """Forward operator ``P`` on a factored matrix (used for round-trip checks)."""
    if pc.kind == "none":
        return X
    W = pc.K0 @ X.W
    V = X.V if pc.kind == "mean" else pc.Gt @ X.V
    return LowRankMatrix(W, V)
