"""Factored matrices ``U = W V^T`` and Kronecker-sum operators acting on them.

A vector of the stochastic Galerkin system is stored as the ``N_d x P``
matrix ``U`` (one column per chaos coefficient), with column-major
vectorisation, so ``(G kron K) vec(U) = vec(K U G^T)``.
"""
import numpy as np
import scipy.sparse as sp

RANK_CAP = 200
_EPS = np.finfo(float).eps


class LowRankMatrix:
    """Matrix kept as the product ``W @ V.T``."""

    __slots__ = ("W", "V")

    def __init__(self, W, V):
        W = np.asarray(W, dtype=float)
        V = np.asarray(V, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        if V.ndim == 1:
            V = V[:, None]
        if W.shape[1] != V.shape[1]:
            raise ValueError(f"factor ranks differ: {W.shape[1]} vs {V.shape[1]}")
        self.W = W
        self.V = V

    @classmethod
    def zeros(cls, n_rows, n_cols):
        return cls(np.zeros((n_rows, 0)), np.zeros((n_cols, 0)))

    @classmethod
    def from_dense(cls, X, eps=1e-14, max_rank=None):
        X = np.asarray(X, dtype=float)
        return truncate(cls(X, np.eye(X.shape[1])), eps, max_rank)

    @property
    def shape(self):
        return (self.W.shape[0], self.V.shape[0])

    @property
    def rank(self):
        return self.W.shape[1]

    def full(self):
        return self.W @ self.V.T

    def copy(self):
        return LowRankMatrix(self.W.copy(), self.V.copy())

    def scaled(self, alpha):
        return LowRankMatrix(alpha * self.W, self.V)

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other):
        return axpy(1.0, self, other)

    def __sub__(self, other):
        return axpy(-1.0, other, self)

    def __mul__(self, alpha):
        return self.scaled(alpha)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LowRankMatrix(shape={self.shape}, rank={self.rank})"


def _check_same_shape(X, Y):
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")


def default_rank_cap(shape):
    return min(shape[0], shape[1], RANK_CAP)


def _orthogonalise(W, V):
    """Return ``(Qw, Qv, C)`` with ``W V^T = Qw C Qv^T`` and orthonormal ``Qw``, ``Qv``.

    When the factor rank exceeds a dimension, that side is factored first and
    its triangular factor folded into the other one, which keeps the second
    QR as narrow as possible.
    """
    n, r = W.shape
    p = V.shape[0]
    if r > p and p <= n:
        Qv, Rv = np.linalg.qr(V)
        Qw, C = np.linalg.qr(W @ Rv.T)
        return Qw, Qv, C
    if r > n:
        Qw, Rw = np.linalg.qr(W)
        Qv, Ct = np.linalg.qr(V @ Rw.T)
        return Qw, Qv, Ct.T
    Qw, Rw = np.linalg.qr(W)
    Qv, Rv = np.linalg.qr(V)
    return Qw, Qv, Rw @ Rv.T


def truncate(X, eps, max_rank=None):
    """Compress ``X`` by dropping singular values ``<= eps * sigma_1``.

    The SVD is taken of the small core left after orthogonalising both
    factors.  Singular values at round-off level relative to the factor
    norms are always dropped, so exact cancellations give rank 0.
    """
    if not eps > 0:
        raise ValueError("truncation tolerance must be positive")
    n, p = X.shape
    cap = default_rank_cap(X.shape) if max_rank is None else min(max_rank, n, p)
    if X.rank == 0:
        return LowRankMatrix.zeros(n, p)
    Qw, Qv, C = _orthogonalise(X.W, X.V)
    try:
        Uc, s, Vct = np.linalg.svd(C)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("SVD of the low-rank core failed") from exc
    floor = 10.0 * _EPS * np.linalg.norm(X.W) * np.linalg.norm(X.V)
    if s.size == 0 or not s[0] > floor:
        return LowRankMatrix.zeros(n, p)
    keep = int(np.count_nonzero(s > max(eps * s[0], floor)))
    keep = min(keep, cap)
    return LowRankMatrix(Qw @ (Uc[:, :keep] * s[:keep]), Qv @ Vct[:keep].T)


def inner(Y, Z):
    """Frobenius inner product ``trace(Y^T Z)`` from the factors."""
    _check_same_shape(Y, Z)
    if Y.rank == 0 or Z.rank == 0:
        return 0.0
    return float(np.sum((Y.W.T @ Z.W) * (Y.V.T @ Z.V)))


def norm(X):
    """Frobenius norm, via QR so that cancellation inside the factors is harmless."""
    if X.rank == 0:
        return 0.0
    return float(np.linalg.norm(_orthogonalise(X.W, X.V)[2]))


def axpy(alpha, X, Y):
    """``alpha X + Y`` by factor concatenation (rank adds)."""
    _check_same_shape(X, Y)
    return LowRankMatrix(np.hstack([alpha * X.W, Y.W]), np.hstack([X.V, Y.V]))


def combine(terms):
    """``sum_i c_i X_i`` for ``terms = [(c_i, X_i), ...]`` by concatenation."""
    X0 = terms[0][1]
    for _, X in terms[1:]:
        _check_same_shape(X0, X)
    return LowRankMatrix(np.hstack([c * X.W for c, X in terms]),
                         np.hstack([X.V for _, X in terms]))


def memory_kb(X_or_rank, n_rows=None, n_cols=None):
    """Storage of both factors in kilobytes, 8 bytes per entry.

    Accepts a ``LowRankMatrix`` or an explicit ``(rank, N_d, P)`` triple.
    """
    if isinstance(X_or_rank, LowRankMatrix):
        r = X_or_rank.rank
        n_rows, n_cols = X_or_rank.shape
    else:
        r = X_or_rank
    return 8.0 * r * (n_rows + n_cols) / 1024.0


class KroneckerOperator:
    """``A = sum_k G_k kron K_k`` with sparse ``G_k`` (P x P) and ``K_k`` (N_d x N_d)."""

    def __init__(self, G, K):
        if len(G) != len(K) or not G:
            raise ValueError("need the same positive number of G and K terms")
        G = [sp.csr_matrix(g) for g in G]
        K = [sp.csr_matrix(k) for k in K]
        p = G[0].shape[0]
        n = K[0].shape[0]
        if any(g.shape != (p, p) for g in G) or any(k.shape != (n, n) for k in K):
            raise ValueError("all G_k must be P x P and all K_k N_d x N_d")
        self.G = G
        self.K = K
        self.GT = [g.T.tocsr() for g in G]

    @property
    def n_terms(self):
        return len(self.G)

    @property
    def shape(self):
        """Shape of the matrices the operator acts on, ``(N_d, P)``."""
        return (self.K[0].shape[0], self.G[0].shape[0])

    def _check(self, shape):
        if tuple(shape) != self.shape:
            raise ValueError(f"operand shape {tuple(shape)} does not match operator {self.shape}")

    def apply(self, X):
        return kron_apply(self, X)

    def apply_dense(self, U):
        """``mat(A vec(U)) = sum_k K_k U G_k^T`` on a full ``N_d x P`` array."""
        U = np.asarray(U, dtype=float)
        self._check(U.shape)
        out = np.zeros_like(U)
        for g, k in zip(self.G, self.K):
            if k.nnz and g.nnz:
                out += k @ (g @ U.T).T
        return out

    def to_sparse(self):
        """Explicit global matrix for column-major ``vec``."""
        A = None
        for g, k in zip(self.G, self.K):
            term = sp.kron(g, k, format="csr")
            A = term if A is None else A + term
        return A.tocsr()


def kron_apply(op, X):
    """Apply ``op`` to a factored matrix without truncation: rank grows to ``n_terms * r``."""
    op._check(X.shape)
    W = np.hstack([k @ X.W for k in op.K])
    V = np.hstack([g @ X.V for g in op.G])
    return LowRankMatrix(W, V)
