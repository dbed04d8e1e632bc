import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import random_spd_system, small_system
from stochdg.lowrank import KroneckerOperator, LowRankMatrix
from stochdg.precond import apply, apply_inverse, apply_inverse_dense, build, ullmann_coefficients


def test_first_coefficient_is_one(tiny):
    _, system = tiny
    c = ullmann_coefficients(system.op.K)
    assert c[0] == pytest.approx(1.0, abs=1e-15)


def test_coefficients_against_dense_traces():
    _, system = small_system(nx=1, kappa=0.3)
    K = [k.toarray() for k in system.op.K]
    ref = [np.trace(k.T @ K[0]) / np.trace(K[0].T @ K[0]) for k in K]
    assert np.allclose(ullmann_coefficients(system.op.K), ref, rtol=1e-13, atol=1e-16)


def test_zero_fluctuations_reduce_to_mean():
    _, system = small_system(kappa=0.0)
    pc = build("ullmann", system.op)
    assert np.all(pc.coeffs[1:] == 0)
    assert np.allclose(pc.Gt, np.eye(system.basis.size))
    mean = build("mean", system.op)
    X = LowRankMatrix(np.ones((24, 1)), np.arange(10.0))
    assert np.allclose(apply_inverse(pc, X).full(), apply_inverse(mean, X).full())


def test_none_is_identity(tiny):
    _, system = tiny
    pc = build("none", system.op)
    X = LowRankMatrix(np.ones((24, 2)), np.ones((10, 2)))
    assert apply_inverse(pc, X) is X
    assert np.array_equal(apply_inverse_dense(pc, X.full()), X.full())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["mean", "ullmann", "P0", "mean-based"]))
def test_round_trip(seed, kind):
    op, _ = random_spd_system(seed % 1000)
    pc = build(kind, op)
    rng = np.random.default_rng(seed)
    X = LowRankMatrix(rng.standard_normal((24, 3)), rng.standard_normal((10, 3)))
    Y = apply_inverse(pc, X)
    assert Y.rank == X.rank
    assert np.linalg.norm(apply(pc, Y).full() - X.full()) <= 1e-10 * np.linalg.norm(X.full())
    assert np.allclose(apply_inverse_dense(pc, X.full()), Y.full(), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kind", ["mean", "ullmann"])
def test_inverse_matches_explicit_kronecker(kind):
    op, _ = random_spd_system(3)
    pc = build(kind, op)
    if kind == "mean":
        P = np.kron(np.eye(10), op.K[0].toarray())
    else:
        P = np.kron(pc.Gt, op.K[0].toarray())
    rng = np.random.default_rng(4)
    X = LowRankMatrix(rng.standard_normal((24, 2)), rng.standard_normal((10, 2)))
    ref = np.linalg.solve(P, X.full().ravel(order="F")).reshape((24, 10), order="F")
    assert np.allclose(apply_inverse(pc, X).full(), ref, rtol=1e-11, atol=1e-12)


def test_exact_for_deterministic_problem():
    _, system = small_system(kappa=0.0)
    pc = build("mean", system.op)
    A = system.op.to_sparse().toarray()
    cols = []
    for j in range(A.shape[1]):
        U = A[:, j].reshape(system.op.shape, order="F")
        cols.append(apply_inverse_dense(pc, U).ravel(order="F"))
    assert np.abs(np.column_stack(cols) - np.eye(A.shape[0])).max() <= 1e-10


def test_errors():
    op, _ = random_spd_system(0)
    with pytest.raises(ValueError):
        build("jacobi", op)
    singular = KroneckerOperator([sp.identity(3)], [sp.csr_matrix((4, 4))])
    with pytest.raises(RuntimeError):
        build("mean", singular)
    from stochdg.precond import Preconditioner
    with pytest.raises(RuntimeError):
        apply_inverse(Preconditioner("mean"), LowRankMatrix(np.ones((4, 1)), np.ones((3, 1))))
