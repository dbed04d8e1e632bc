import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import gauss_legendre_uniform
from stochdg.chaos import build_G, chaos_basis, enumerate_indices, evaluate_basis, legendre_eval


def test_basis_sizes():
    assert enumerate_indices(3, 2).size == 10
    assert enumerate_indices(7, 3).size == 120
    assert enumerate_indices(9, 3).size == 220


def test_single_variable_indices():
    assert enumerate_indices(1, 4).indices.ravel().tolist() == [0, 1, 2, 3, 4]


def test_first_order_block_is_unit_vectors():
    idx = enumerate_indices(4, 2).indices
    assert np.array_equal(idx[0], np.zeros(4))
    assert np.array_equal(idx[1:5], np.eye(4, dtype=int))


@settings(max_examples=30, deadline=None)
@given(N=st.integers(1, 6), Q=st.integers(0, 4))
def test_index_set_properties(N, Q):
    idx = enumerate_indices(N, Q).indices
    assert len(idx) == comb(N + Q, Q)
    assert len({tuple(a) for a in idx.tolist()}) == len(idx)
    deg = idx.sum(axis=1)
    assert np.all(np.diff(deg) >= 0)
    assert deg.max() == Q and idx.min() >= 0


def test_index_errors():
    with pytest.raises(ValueError):
        enumerate_indices(0, 2)
    with pytest.raises(ValueError):
        enumerate_indices(2, -1)
    with pytest.raises(ValueError):
        enumerate_indices(60, 60)
    with pytest.raises(ValueError):
        legendre_eval(-1, 0.0)


def test_low_degree_polynomials():
    x = np.linspace(-1.7, 1.7, 11)
    assert np.allclose(legendre_eval(0, x), 1)
    assert np.allclose(legendre_eval(1, x), x)
    # orthonormal P2 on (-sqrt3, sqrt3): sqrt5 (3 t^2 - 1) / 2 with t = x / sqrt3
    assert np.allclose(legendre_eval(2, x), np.sqrt(5) * (x**2 - 1) / 2)


def test_orthonormality_by_quadrature():
    x, w = gauss_legendre_uniform(20)
    V = np.array([legendre_eval(k, x) for k in range(9)])
    assert np.abs((V * w) @ V.T - np.eye(9)).max() <= 1e-12


def test_known_G_entries():
    G1 = build_G(enumerate_indices(1, 2)).G[1].toarray()
    assert G1[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert G1[1, 2] == pytest.approx(2 * np.sqrt(3) / np.sqrt(15), abs=1e-15)
    assert G1[1, 2] == pytest.approx(0.894427, abs=1e-6)


def quadrature_G(index_set, n=8):
    x, w = gauss_legendre_uniform(n)
    N = index_set.n_vars
    pts = np.array(list(itertools.product(x, repeat=N)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=N))), axis=1)
    psi = evaluate_basis(index_set, pts)
    out = [(psi * wts[:, None]).T @ psi]
    for k in range(N):
        out.append((psi * (wts * pts[:, k])[:, None]).T @ psi)
    return out


@pytest.mark.parametrize("N,Q", [(N, Q) for N in (1, 2, 3) for Q in (0, 1, 2, 3)])
def test_G_against_quadrature(N, Q):
    basis = chaos_basis(N, Q)
    ref = quadrature_G(basis.index_set)
    for Gk, R in zip(basis.G, ref):
        D = Gk.toarray()
        assert np.abs(D - R).max() <= 1e-12
        assert np.array_equal(D, D.T)
    assert np.array_equal(basis.G[0].toarray(), np.eye(basis.size))
    for Gk in basis.G[1:]:
        assert np.diff(Gk.indptr).max(initial=0) <= 2
    for Gk, g in zip(basis.G, basis.g):
        assert np.array_equal(Gk.toarray()[:, 0], g)


def test_basis_evaluation_shapes():
    b = chaos_basis(2, 2)
    vals = evaluate_basis(b.index_set, np.zeros((5, 2)))
    assert vals.shape == (5, 6)
    assert np.allclose(vals[:, 0], 1)
