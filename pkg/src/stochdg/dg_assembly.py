"""SIPG assembly for piecewise-linear discontinuous elements.

Unknown ``3*t + i`` is the value of the DG function in triangle ``t`` at its
``i``-th vertex; the local basis is the barycentric coordinates.  All matrices
are indexed ``[test, trial]``.

The bilinear form, for a diffusion coefficient ``a`` and velocity ``b``::

    sum_K (a grad u, grad v)_K + (b . grad u, v)_K
  - sum_E <{a grad u} . [v]> + <{a grad v} . [u]> - sigma/h_E <[u], [v]>
  + sum_K <b . n_K (u_ext - u), v>_{inflow part of dK, interior}
  - sum_K <b . n u, v>_{inflow part of dK on the domain boundary}

Inflow sets are fixed from the mean velocity so every stochastic mode is
assembled against the same upwind pattern.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import classify_edges

# 7-point degree-5 rule on the reference triangle, barycentric coordinates,
# weights normalised to unit area
_A1 = (6.0 - np.sqrt(15.0)) / 21.0
_A2 = (6.0 + np.sqrt(15.0)) / 21.0
_W1 = (155.0 - np.sqrt(15.0)) / 1200.0
_W2 = (155.0 + np.sqrt(15.0)) / 1200.0
TRI_POINTS = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
TRI_WEIGHTS = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])

_GL_T, _GL_W = np.polynomial.legendre.leggauss(4)
EDGE_POINTS = 0.5 * (_GL_T + 1.0)
EDGE_WEIGHTS = 0.5 * _GL_W


@dataclass
class ProblemData:
    """Coefficients of one affine stochastic convection-diffusion problem.

    ``modes[k] = (diffusion_k, velocity_k)`` are the already scaled
    fluctuation fields multiplying the k-th random variable; either entry may
    be ``None``.  Callables are vectorised over coordinate arrays; velocities
    return a pair ``(bx, by)``.
    """

    diffusion: object
    velocity: object
    source: object
    dirichlet: object
    modes: list = field(default_factory=list)
    sigma: float = 10.0
    penalty_in_modes: bool = False

    @property
    def n_modes(self):
        return len(self.modes)


@dataclass
class SpatialOperators:
    K: list
    f: list
    M: object

    @property
    def n_dofs(self):
        return self.M.shape[0]


class _Geometry:
    """Quadrature points, weights and basis traces for a mesh."""

    def __init__(self, mesh):
        tri = mesh.triangles
        verts = mesh.vertices[tri]                                  # (nt, 3, 2)
        self.vol_pts = np.einsum("qi,tik->tqk", TRI_POINTS, verts)
        self.vol_w = mesh.areas[:, None] * TRI_WEIGHTS[None, :]
        self.vol_phi = TRI_POINTS                                   # (7, 3)
        self.grads = mesh.barycentric_gradients()

        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        self.edge_pts = a[:, None, :] + EDGE_POINTS[None, :, None] * (b - a)[:, None, :]
        self.edge_w = mesh.edge_length[:, None] * EDGE_WEIGHTS[None, :]

        bnd = mesh.boundary
        self.inner = np.flatnonzero(~bnd)
        self.outer = np.flatnonzero(bnd)
        L = mesh.edge_tri[:, 0]
        R = mesh.edge_tri[:, 1]
        self.L_in, self.R_in = L[self.inner], R[self.inner]
        self.L_bd = L[self.outer]
        n = mesh.edge_normal
        self.n_in, self.n_bd = n[self.inner], n[self.outer]
        self.h_in = mesh.edge_length[self.inner]
        self.h_bd = mesh.edge_length[self.outer]
        self.pts_in = self.edge_pts[self.inner]
        self.pts_bd = self.edge_pts[self.outer]
        self.w_in = self.edge_w[self.inner]
        self.w_bd = self.edge_w[self.outer]
        self.phiL_in = mesh.barycentric(np.repeat(self.L_in[:, None], 4, 1), self.pts_in)
        self.phiR_in = mesh.barycentric(np.repeat(self.R_in[:, None], 4, 1), self.pts_in)
        self.phi_bd = mesh.barycentric(np.repeat(self.L_bd[:, None], 4, 1), self.pts_bd)
        self.gL_in = np.einsum("eik,ek->ei", self.grads[self.L_in], self.n_in)
        self.gR_in = np.einsum("eik,ek->ei", self.grads[self.R_in], self.n_in)
        self.g_bd = np.einsum("eik,ek->ei", self.grads[self.L_bd], self.n_bd)
        self.dofs_in = np.concatenate([3 * self.L_in[:, None] + np.arange(3),
                                       3 * self.R_in[:, None] + np.arange(3)], axis=1)
        self.dofs_bd = 3 * self.L_bd[:, None] + np.arange(3)
        self.dofs_vol = 3 * np.arange(mesh.n_triangles)[:, None] + np.arange(3)


def geometry(mesh):
    if "geometry" not in mesh._cache:
        mesh._cache["geometry"] = _Geometry(mesh)
    return mesh._cache["geometry"]


def _scalar(fn, pts):
    return np.broadcast_to(np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float),
                           pts.shape[:-1])


def _vector(fn, pts):
    bx, by = fn(pts[..., 0], pts[..., 1])
    shape = pts.shape[:-1]
    return np.stack([np.broadcast_to(np.asarray(bx, dtype=float), shape),
                     np.broadcast_to(np.asarray(by, dtype=float), shape)], axis=-1)


class _Coo:
    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, dofs, local):
        k = dofs.shape[1]
        self.rows.append(np.repeat(dofs, k, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, k)).ravel())
        self.vals.append(local.ravel())

    def tocsr(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        A = sp.coo_matrix((np.concatenate(self.vals),
                           (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        return A


def _inflow_labels(mesh, data):
    key = ("labels", id(data.velocity))
    if key not in mesh._cache:
        mesh._cache[key] = classify_edges(mesh, data.velocity)
    return mesh._cache[key]


def _bilinear(mesh, diffusion, velocity, sigma, labels):
    geo = geometry(mesh)
    coo = _Coo(mesh.n_dofs)
    w = geo.vol_w

    # element terms
    loc = np.zeros((mesh.n_triangles, 3, 3))
    if diffusion is not None:
        a_int = np.sum(w * _scalar(diffusion, geo.vol_pts), axis=1)
        loc += a_int[:, None, None] * np.einsum("tik,tjk->tij", geo.grads, geo.grads)
    if velocity is not None:
        b = _vector(velocity, geo.vol_pts)                           # (nt, 7, 2)
        bgrad = np.einsum("tqk,tjk->tqj", b, geo.grads)
        loc += np.einsum("tq,qi,tqj->tij", w, geo.vol_phi, bgrad)
    coo.add(geo.dofs_vol, loc)

    # interior edges
    jmp = np.concatenate([geo.phiL_in, -geo.phiR_in], axis=2)         # (ne, 4, 6)
    loc = np.zeros((len(geo.inner), 6, 6))
    if diffusion is not None:
        a = _scalar(diffusion, geo.pts_in)
        g = np.concatenate([geo.gL_in, geo.gR_in], axis=1)            # (ne, 6)
        cons = np.einsum("eq,eqi,ej->eij", 0.5 * geo.w_in * a, jmp, g)
        loc -= cons + cons.transpose(0, 2, 1)
    if sigma is not None:
        loc += (sigma / geo.h_in)[:, None, None] * np.einsum("eq,eqi,eqj->eij", geo.w_in, jmp, jmp)
    if velocity is not None:
        bn = np.einsum("eqk,ek->eq", _vector(velocity, geo.pts_in), geo.n_in)
        lab = labels[geo.inner]
        left = lab < 0
        if left.any():
            # inflow for the left triangle: <b.n (u_R - u_L), v_L>
            trial = np.concatenate([-geo.phiL_in, geo.phiR_in], axis=2)
            loc[left, :3, :] += np.einsum("eq,eqi,eqj->eij", (geo.w_in * bn)[left],
                                          geo.phiL_in[left], trial[left])
        right = lab > 0
        if right.any():
            # inflow for the right triangle, whose outward normal is -n
            trial = np.concatenate([geo.phiL_in, -geo.phiR_in], axis=2)
            loc[right, 3:, :] += np.einsum("eq,eqi,eqj->eij", -(geo.w_in * bn)[right],
                                           geo.phiR_in[right], trial[right])
    coo.add(geo.dofs_in, loc)

    # boundary edges
    phi = geo.phi_bd
    loc = np.zeros((len(geo.outer), 3, 3))
    if diffusion is not None:
        a = _scalar(diffusion, geo.pts_bd)
        cons = np.einsum("eq,eqi,ej->eij", geo.w_bd * a, phi, geo.g_bd)
        loc -= cons + cons.transpose(0, 2, 1)
    if sigma is not None:
        loc += (sigma / geo.h_bd)[:, None, None] * np.einsum("eq,eqi,eqj->eij", geo.w_bd, phi, phi)
    if velocity is not None:
        inflow = labels[geo.outer] < 0
        if inflow.any():
            bn = np.einsum("eqk,ek->eq", _vector(velocity, geo.pts_bd), geo.n_bd)
            loc[inflow] -= np.einsum("eq,eqi,eqj->eij", (geo.w_bd * bn)[inflow],
                                     phi[inflow], phi[inflow])
    coo.add(geo.dofs_bd, loc)
    return coo.tocsr()


def _linear(mesh, source, dirichlet, diffusion, velocity, sigma, labels):
    geo = geometry(mesh)
    rhs = np.zeros(mesh.n_dofs)
    if source is not None:
        fq = _scalar(source, geo.vol_pts)
        np.add.at(rhs, geo.dofs_vol, np.einsum("tq,qi->ti", geo.vol_w * fq, geo.vol_phi))
    ud = _scalar(dirichlet, geo.pts_bd)
    phi = geo.phi_bd
    loc = np.zeros((len(geo.outer), 3))
    if sigma is not None:
        loc += (sigma / geo.h_bd)[:, None] * np.einsum("eq,eqi->ei", geo.w_bd * ud, phi)
    if diffusion is not None:
        a = _scalar(diffusion, geo.pts_bd)
        loc -= np.sum(geo.w_bd * ud * a, axis=1)[:, None] * geo.g_bd
    if velocity is not None:
        inflow = labels[geo.outer] < 0
        bn = np.einsum("eqk,ek->eq", _vector(velocity, geo.pts_bd), geo.n_bd)
        term = np.einsum("eq,eqi->ei", geo.w_bd * bn * ud, phi)
        loc[inflow] -= term[inflow]
    np.add.at(rhs, geo.dofs_bd, loc)
    return rhs


def _check_data(mesh, data):
    if not data.sigma > 0:
        raise ValueError("penalty parameter sigma must be positive")
    geo = geometry(mesh)
    a = _scalar(data.diffusion, geo.vol_pts)
    if not np.all(a > 0):
        raise ValueError("mean diffusion must be uniformly positive")


def assemble_K0(mesh, data):
    """Mean stiffness matrix: SIPG diffusion, penalty and upwind convection."""
    _check_data(mesh, data)
    labels = _inflow_labels(mesh, data)
    return _bilinear(mesh, data.diffusion, data.velocity, data.sigma, labels)


def assemble_Ki(mesh, data, i):
    """Stiffness matrix of fluctuation mode ``i`` (1-based)."""
    if not 1 <= i <= data.n_modes:
        raise ValueError(f"mode index {i} outside 1..{data.n_modes}")
    if not data.sigma > 0:
        raise ValueError("penalty parameter sigma must be positive")
    diff, vel = data.modes[i - 1]
    labels = _inflow_labels(mesh, data)
    sigma = data.sigma if data.penalty_in_modes else None
    return _bilinear(mesh, diff, vel, sigma, labels)


def assemble_rhs(mesh, data, i=0):
    """Load vector of mode ``i``; mode 0 carries the source and mean coefficients."""
    if not 0 <= i <= data.n_modes:
        raise ValueError(f"mode index {i} outside 0..{data.n_modes}")
    labels = _inflow_labels(mesh, data)
    if i == 0:
        return _linear(mesh, data.source, data.dirichlet, data.diffusion,
                       data.velocity, data.sigma, labels)
    diff, vel = data.modes[i - 1]
    sigma = data.sigma if data.penalty_in_modes else None
    return _linear(mesh, None, data.dirichlet, diff, vel, sigma, labels)


def assemble_mass(mesh):
    """Block-diagonal DG mass matrix, exact for linear elements."""
    block = (np.ones((3, 3)) + np.eye(3)) / 12.0
    loc = mesh.areas[:, None, None] * block[None]
    coo = _Coo(mesh.n_dofs)
    coo.add(geometry(mesh).dofs_vol, loc)
    return coo.tocsr()


def assemble_spatial(mesh, data):
    K = [assemble_K0(mesh, data)] + [assemble_Ki(mesh, data, i) for i in range(1, data.n_modes + 1)]
    f = [assemble_rhs(mesh, data, i) for i in range(data.n_modes + 1)]
    return SpatialOperators(K, f, assemble_mass(mesh))


def energy_error(mesh, u, sigma, diffusion, velocity=None, exact=None, exact_grad=None):
    """DG energy norm of ``exact - u`` for fixed coefficients.

    With ``exact=None`` this is the energy norm of ``u`` itself.  The exact
    solution is assumed continuous, so interior jumps come from ``u`` alone.
    """
    geo = geometry(mesh)
    U = np.asarray(u, dtype=float).reshape(-1, 3)

    grad_h = np.einsum("ti,tik->tk", U, geo.grads)                   # (nt, 2)
    err_grad = -np.broadcast_to(grad_h[:, None, :], geo.vol_pts.shape)
    if exact_grad is not None:
        err_grad = err_grad + _vector(exact_grad, geo.vol_pts)
    a = _scalar(diffusion, geo.vol_pts)
    total = np.sum(geo.vol_w * a * np.sum(err_grad**2, axis=-1))

    uL = np.einsum("eqi,ei->eq", geo.phiL_in, U[geo.L_in])
    uR = np.einsum("eqi,ei->eq", geo.phiR_in, U[geo.R_in])
    jump2 = (uL - uR) ** 2
    total += np.sum((sigma / geo.h_in)[:, None] * geo.w_in * jump2)

    ub = np.einsum("eqi,ei->eq", geo.phi_bd, U[geo.L_bd])
    eb = -ub if exact is None else _scalar(exact, geo.pts_bd) - ub
    total += np.sum((sigma / geo.h_bd)[:, None] * geo.w_bd * eb**2)

    if velocity is not None:
        bn_in = np.einsum("eqk,ek->eq", _vector(velocity, geo.pts_in), geo.n_in)
        bn_bd = np.einsum("eqk,ek->eq", _vector(velocity, geo.pts_bd), geo.n_bd)
        total += 0.5 * np.sum(geo.w_in * np.abs(bn_in) * jump2)
        total += 0.5 * np.sum(geo.w_bd * np.abs(bn_bd) * eb**2)
    return float(np.sqrt(total))


def evaluate_dg(mesh, u, tri, pts):
    """Value of DG function ``u`` at points ``pts`` lying in triangles ``tri``."""
    U = np.asarray(u, dtype=float).reshape(-1, 3)
    lam = mesh.barycentric(tri, pts)
    return np.einsum("...i,...i->...", lam, U[tri])
