"""Legendre polynomial chaos on uniform variables over (-sqrt3, sqrt3)."""
from dataclasses import dataclass
from math import comb, sqrt

import numpy as np
import scipy.sparse as sp

_SQRT3 = sqrt(3.0)
_MAX_BASIS = 2**31 - 1


@dataclass(frozen=True)
class MultiIndexSet:
    n_vars: int
    degree: int
    indices: np.ndarray     # (P, N) int

    def __len__(self):
        return len(self.indices)

    @property
    def size(self):
        return len(self.indices)

    def position(self):
        return {tuple(a): i for i, a in enumerate(self.indices.tolist())}


def _compositions(total, parts):
    """All tuples of ``parts`` nonnegative ints summing to ``total``, lex-descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_indices(N, Q):
    """Total-degree multi-indices ``|alpha| <= Q`` in graded lexicographic order.

    Within one degree the order is lexicographically descending, so the
    degree-one block is ``e_1, ..., e_N``.
    """
    if N < 1 or Q < 0:
        raise ValueError("need N >= 1 and Q >= 0")
    if comb(N + Q, Q) > _MAX_BASIS:
        raise ValueError(f"basis size binomial({N + Q}, {Q}) overflows the index range")
    rows = [c for d in range(Q + 1) for c in _compositions(d, N)]
    return MultiIndexSet(N, Q, np.array(rows, dtype=np.int64).reshape(-1, N))


def legendre_eval(k, x):
    """Orthonormal Legendre polynomial of degree ``k`` for the uniform density
    on (-sqrt3, sqrt3), by three-term recurrence."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for j in range(k):
        a = sqrt(2 * j + 1) * sqrt(2 * j + 3) / ((j + 1) * _SQRT3)
        b = j * sqrt(2 * j + 3) / ((j + 1) * sqrt(2 * j - 1)) if j > 0 else 0.0
        prev, cur = cur, a * x * cur - b * prev
    return cur


def evaluate_basis(index_set, xi):
    """Values of all multivariate basis polynomials at samples ``xi`` (S, N) -> (S, P)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    Q = index_set.degree
    uni = np.stack([legendre_eval(k, xi) for k in range(Q + 1)], axis=-1)  # (S, N, Q+1)
    out = np.ones((xi.shape[0], index_set.size))
    for n in range(index_set.n_vars):
        out *= uni[:, n, index_set.indices[:, n]]
    return out


@dataclass(frozen=True)
class ChaosBasis:
    index_set: MultiIndexSet
    G: list          # G[0] identity, G[k] couples along variable k
    g: list          # first columns of G[k]

    @property
    def size(self):
        return self.index_set.size

    @property
    def n_vars(self):
        return self.index_set.n_vars


def _upper_entry(i):
    # <xi psi_i psi_{i+1}> for the orthonormal univariate family
    return (i + 1) * _SQRT3 / sqrt((2 * i + 1) * (2 * i + 3))


def build_G(index_set):
    """Stochastic Galerkin matrices ``<xi_k psi_i psi_j>`` and vectors ``<xi_k psi_i>``."""
    P = index_set.size
    pos = index_set.position()
    G = [sp.identity(P, format="csr")]
    for k in range(index_set.n_vars):
        rows, cols, vals = [], [], []
        for i, alpha in enumerate(index_set.indices.tolist()):
            beta = list(alpha)
            beta[k] += 1
            j = pos.get(tuple(beta))
            if j is None:
                continue
            v = _upper_entry(alpha[k])
            rows += [i, j]
            cols += [j, i]
            vals += [v, v]
        Gk = sp.coo_matrix((vals, (rows, cols)), shape=(P, P)).tocsr()
        Gk.sort_indices()
        G.append(Gk)
    g = [np.asarray(Gk[:, 0].toarray()).ravel() for Gk in G]
    return ChaosBasis(index_set, G, g)


def chaos_basis(N, Q):
    return build_G(enumerate_indices(N, Q))
