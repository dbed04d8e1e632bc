import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from oracles import DenseSIPG
from stochdg.dg_assembly import (EDGE_WEIGHTS, TRI_WEIGHTS, ProblemData, assemble_K0,
                                 assemble_Ki, assemble_mass, assemble_rhs, assemble_spatial,
                                 energy_error, evaluate_dg)
from stochdg.mesh import build_rect_mesh, classify_edges


def const(c):
    return lambda x, y: np.full(np.broadcast(x, y).shape, float(c))


def vel(bx, by):
    return lambda x, y: (np.full(np.broadcast(x, y).shape, float(bx)),
                         np.full(np.broadcast(x, y).shape, float(by)))


zero = const(0.0)
a_poly = lambda x, y: 1.0 + x**2 + 0.5 * x * y
b_poly = lambda x, y: (1.0 + 0.3 * x * y, 0.5 - 0.2 * x**2)
a_mode = lambda x, y: 0.3 * x - 0.2 * y**2
b_mode = lambda x, y: (0.1 * y, -0.2 + 0.1 * x)
ud_poly = lambda x, y: 1.0 + x - 2 * y + x * y


def test_quadrature_weights_normalised():
    assert np.isclose(TRI_WEIGHTS.sum(), 1.0)
    assert np.isclose(EDGE_WEIGHTS.sum(), 1.0)


def test_pure_diffusion_symmetric_positive_definite():
    m = build_rect_mesh(0, 1, 0, 1, 4, 4)
    K = assemble_K0(m, ProblemData(const(1.0), vel(0, 0), zero, zero, sigma=10.0))
    D = K.toarray()
    assert np.abs(D - D.T).max() <= 1e-12
    assert np.linalg.eigvalsh(0.5 * (D + D.T)).min() > 0


def test_constants_in_kernel_away_from_boundary():
    m = build_rect_mesh(0, 1, 0, 1, 4, 4)
    K = assemble_K0(m, ProblemData(const(0.7), vel(1.0, 0.4), zero, zero))
    r = K @ np.ones(m.n_dofs)
    touches = np.zeros(m.n_triangles, bool)
    touches[m.edge_tri[m.boundary, 0]] = True
    inner_dofs = np.repeat(~touches, 3)
    assert np.abs(r[inner_dofs]).max() <= 1e-12


@pytest.mark.parametrize("shape", [(0, 1, 0, 1, 1, 1), (0, 1, 0, 1, 2, 2), (-1, 0.5, 0, 2, 2, 3)])
def test_K0_against_dense_oracle(shape):
    m = build_rect_mesh(*shape)
    oracle = DenseSIPG(m.vertices, m.triangles)
    data = ProblemData(a_poly, b_poly, zero, zero, sigma=10.0)
    ref = oracle.matrix(a_poly, b_poly, 10.0)
    assert np.abs(assemble_K0(m, data).toarray() - ref).max() <= 1e-12 * np.abs(ref).max()


@pytest.mark.parametrize("penalty", [False, True])
def test_Ki_against_dense_oracle(penalty):
    m = build_rect_mesh(0, 1, 0, 1, 2, 2)
    oracle = DenseSIPG(m.vertices, m.triangles)
    data = ProblemData(a_poly, b_poly, zero, zero, modes=[(a_mode, b_mode)],
                       sigma=7.0, penalty_in_modes=penalty)
    ref = oracle.matrix(a_mode, b_mode, 7.0 if penalty else None, upwind=b_poly)
    got = assemble_Ki(m, data, 1).toarray()
    assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


def test_zero_mode_is_penalty_only():
    m = build_rect_mesh(0, 1, 0, 1, 1, 1)
    oracle = DenseSIPG(m.vertices, m.triangles)
    data = ProblemData(const(1.0), vel(0, 0), zero, zero, modes=[(zero, None)], penalty_in_modes=True)
    assert np.allclose(assemble_Ki(m, data, 1).toarray(), oracle.matrix(sigma=10.0), atol=1e-12)
    data.penalty_in_modes = False
    assert abs(assemble_Ki(m, data, 1)).max() == 0


def test_diffusion_mode_symmetric():
    m = build_rect_mesh(0, 1, 0, 1, 3, 3)
    data = ProblemData(const(1.0), vel(1, 1), zero, zero, modes=[(a_mode, None)])
    D = assemble_Ki(m, data, 1).toarray()
    assert np.abs(D - D.T).max() <= 1e-12


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-0.5, 0.5))
def test_operator_affine_in_coefficients(c):
    m = build_rect_mesh(0, 1, 0, 1, 2, 2)
    data = ProblemData(a_poly, b_poly, zero, zero, modes=[(a_mode, b_mode)])
    combined = ProblemData(lambda x, y: a_poly(x, y) + c * a_mode(x, y),
                           lambda x, y: tuple(p + c * q for p, q in zip(b_poly(x, y), b_mode(x, y))),
                           zero, zero)
    # same inflow pattern as the mean velocity
    m2 = build_rect_mesh(0, 1, 0, 1, 2, 2)
    m2._cache[("labels", id(combined.velocity))] = classify_edges(m, b_poly)
    lhs = assemble_K0(m2, combined).toarray()
    rhs = (assemble_K0(m, data) + c * assemble_Ki(m, data, 1)).toarray()
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_rhs_against_dense_oracle():
    m = build_rect_mesh(0, 1, 0, 1, 2, 2)
    oracle = DenseSIPG(m.vertices, m.triangles)
    f = lambda x, y: 1 + x * y
    data = ProblemData(a_poly, b_poly, f, ud_poly, modes=[(a_mode, b_mode)], sigma=10.0)
    ref0 = oracle.load(f, ud_poly, a_poly, b_poly, 10.0)
    assert np.allclose(assemble_rhs(m, data, 0), ref0, atol=1e-12, rtol=0)
    ref1 = oracle.load(None, ud_poly, a_mode, b_mode, None, upwind=b_poly)
    assert np.allclose(assemble_rhs(m, data, 1), ref1, atol=1e-12, rtol=0)


def test_unit_source_integrals():
    m = build_rect_mesh(0, 1, 0, 1, 1, 1)
    f = assemble_rhs(m, ProblemData(const(1.0), vel(0, 0), const(1.0), zero), 0)
    assert np.allclose(f, np.repeat(m.areas, 3) / 3, atol=1e-15)


def test_homogeneous_data():
    m = build_rect_mesh(0, 1, 0, 1, 3, 3)
    data = ProblemData(const(1.0), vel(1, 0), zero, zero, modes=[(a_mode, b_mode), (a_mode, None)])
    for i in range(3):
        assert not np.any(assemble_rhs(m, data, i))
    data.source = const(2.0)
    assert not np.any(assemble_rhs(m, data, 1)) and not np.any(assemble_rhs(m, data, 2))


def test_mass_matrix():
    m = build_rect_mesh(-1, 2, 0, 1, 3, 2)
    M = assemble_mass(m)
    one = np.ones(m.n_dofs)
    assert np.isclose(one @ M @ one, 3.0)
    block = M[:3, :3].toarray()
    assert np.allclose(block, m.areas[0] / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]))
    assert np.linalg.eigvalsh(M.toarray()).min() > 0
    oracle = DenseSIPG(m.vertices, m.triangles)
    # mass entries from the oracle basis: integrate phi_i phi_j
    from oracles import triangle_rule
    pts, w = triangle_rule(m.vertices[m.triangles[4]])
    ph = oracle.phi(4, pts)
    assert np.allclose(M[12:15, 12:15].toarray(), (ph * w[:, None]).T @ ph, atol=1e-15)


@pytest.mark.parametrize("b", [(0.0, 0.0), (1.0, 0.5), (-0.3, 1.0)])
def test_linear_solution_reproduced(b):
    u = lambda x, y: 1 + 2 * x - y
    f = lambda x, y: np.full(np.broadcast(x, y).shape, 2 * b[0] - b[1])
    m = build_rect_mesh(0, 1, 0, 1, 4, 3)
    data = ProblemData(const(0.5), vel(*b), f, u)
    sp_ = assemble_spatial(m, data)
    uh = spla.spsolve(sp_.K[0].tocsc(), sp_.f[0])
    xy = m.dof_coordinates
    assert np.abs(uh - u(xy[:, 0], xy[:, 1])).max() <= 1e-10
    grad = lambda x, y: (np.full_like(x, 2.0), np.full_like(x, -1.0))
    assert energy_error(m, uh, 10.0, data.diffusion, data.velocity, u, grad) <= 1e-9


def test_energy_norm_of_zero_and_constant():
    m = build_rect_mesh(0, 1, 0, 1, 2, 2)
    assert energy_error(m, np.zeros(m.n_dofs), 10.0, const(1.0)) == 0.0
    # a constant 1 only pays the boundary penalty: sigma * perimeter / h_E summed over faces
    e = energy_error(m, np.ones(m.n_dofs), 10.0, const(1.0))
    assert np.isclose(e**2, 10.0 * m.boundary.sum())


def test_evaluate_dg_interpolates_nodes():
    m = build_rect_mesh(0, 1, 0, 1, 2, 2)
    u = np.arange(m.n_dofs, dtype=float)
    tri = np.arange(m.n_triangles)
    centroid = m.vertices[m.triangles].mean(axis=1)
    assert np.allclose(evaluate_dg(m, u, tri, centroid), u.reshape(-1, 3).mean(axis=1))


def test_assembly_errors():
    m = build_rect_mesh(0, 1, 0, 1, 2, 2)
    with pytest.raises(ValueError):
        assemble_K0(m, ProblemData(const(1.0), vel(0, 0), zero, zero, sigma=0.0))
    with pytest.raises(ValueError):
        assemble_K0(m, ProblemData(const(-1.0), vel(0, 0), zero, zero))
    data = ProblemData(const(1.0), vel(0, 0), zero, zero, modes=[(a_mode, None)])
    with pytest.raises(ValueError):
        assemble_Ki(m, data, 2)
    with pytest.raises(ValueError):
        assemble_Ki(m, data, 0)
    with pytest.raises(ValueError):
        assemble_rhs(m, data, 3)
