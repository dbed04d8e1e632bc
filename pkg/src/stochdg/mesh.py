"""Structured triangulations of axis-aligned rectangles with DG edge topology."""
from dataclasses import dataclass, field

import numpy as np

# edge boundary tags
INTERIOR, BOTTOM, RIGHT, TOP, LEFT = -1, 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with per-edge neighbour, normal and boundary data.

    ``edge_tri[e] = (left, right)``; ``right == -1`` on the boundary.
    ``edge_normal[e]`` is the unit normal pointing out of the left triangle
    (into the right one, or out of the domain).
    """

    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counterclockwise
    edges: np.ndarray           # (ne, 2) vertex indices
    edge_tri: np.ndarray        # (ne, 2)
    edge_normal: np.ndarray     # (ne, 2)
    edge_length: np.ndarray     # (ne,)
    edge_tag: np.ndarray        # (ne,) INTERIOR or a side tag
    bounds: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_dofs(self):
        """Number of piecewise-linear DG unknowns (three per triangle)."""
        return 3 * len(self.triangles)

    @property
    def boundary(self):
        return self.edge_tri[:, 1] < 0

    @property
    def areas(self):
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    @property
    def diameters(self):
        if "diam" not in self._cache:
            p = self.vertices[self.triangles]
            lens = np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1)
                             for i in range(3)], axis=1)
            self._cache["diam"] = lens.max(axis=1)
        return self._cache["diam"]

    @property
    def h(self):
        return float(self.diameters.max())

    @property
    def edge_midpoints(self):
        return self.vertices[self.edges].mean(axis=1)

    @property
    def dof_coordinates(self):
        """Coordinates of the DG nodes, ordered like the unknowns."""
        return self.vertices[self.triangles].reshape(-1, 2)

    def barycentric_gradients(self):
        """Constant gradients of the three barycentric functions, shape (nt, 3, 2)."""
        if "grads" not in self._cache:
            p = self.vertices[self.triangles]
            twice_area = 2.0 * self.areas
            g = np.empty((len(p), 3, 2))
            for i in range(3):
                a = p[:, (i + 1) % 3]
                b = p[:, (i + 2) % 3]
                # rotate the opposite edge by -90 degrees
                g[:, i, 0] = (a[:, 1] - b[:, 1]) / twice_area
                g[:, i, 1] = (b[:, 0] - a[:, 0]) / twice_area
            self._cache["grads"] = g
        return self._cache["grads"]

    def barycentric(self, tri, pts):
        """Barycentric coordinates of ``pts`` (..., 2) in triangles ``tri`` (...)."""
        g = self.barycentric_gradients()[tri]
        p = self.vertices[self.triangles[tri]]
        out = np.empty(pts.shape[:-1] + (3,))
        for i in range(3):
            anchor = p[..., (i + 1) % 3, :]
            out[..., i] = np.einsum("...k,...k->...", pts - anchor, g[..., i, :])
        return out


def build_rect_mesh(x_lo, x_hi, y_lo, y_hi, nx, ny):
    """Split an ``nx`` by ``ny`` grid on a rectangle into ``2*nx*ny`` triangles.

    Every cell is cut along its lower-left to upper-right diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got {nx}, {ny}")
    if not (x_lo < x_hi and y_lo < y_hi):
        raise ValueError("rectangle bounds must satisfy x_lo < x_hi and y_lo < y_hi")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(x_lo, x_hi, nx + 1)
    ys = np.linspace(y_lo, y_hi, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    # collect unique edges; local edge k joins vertices k and k+1
    nt = len(triangles)
    local = np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1)
    flat = local.reshape(-1, 2)
    key = np.sort(flat, axis=1)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    owner = np.repeat(np.arange(nt), 3)

    ne = len(uniq)
    edge_tri = np.full((ne, 2), -1, dtype=np.int64)
    edge_tri[:, 0] = owner[first]
    # the oriented copy of each edge from its left triangle
    edges = flat[first].copy()
    if np.bincount(inverse, minlength=ne).max() > 2:
        raise RuntimeError("non-manifold edge in triangulation")
    other = owner != edge_tri[inverse, 0]
    edge_tri[inverse[other], 1] = owner[other]

    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    d = b - a
    length = np.linalg.norm(d, axis=1)
    # counterclockwise triangles: outward normal of edge a->b is (dy, -dx)
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

    tag = np.full(ne, INTERIOR, dtype=np.int64)
    bnd = edge_tri[:, 1] < 0
    mid = 0.5 * (a + b)
    tol = 1e-12 * max(x_hi - x_lo, y_hi - y_lo)
    tag[bnd & (np.abs(mid[:, 1] - y_lo) < tol)] = BOTTOM
    tag[bnd & (np.abs(mid[:, 0] - x_hi) < tol)] = RIGHT
    tag[bnd & (np.abs(mid[:, 1] - y_hi) < tol)] = TOP
    tag[bnd & (np.abs(mid[:, 0] - x_lo) < tol)] = LEFT

    return Mesh(vertices, triangles, edges, edge_tri, normal, length, tag,
                (float(x_lo), float(x_hi), float(y_lo), float(y_hi)))


def classify_edges(mesh, velocity):
    """Sign of ``b . n`` at edge midpoints, relative to the stored normal.

    Returns an integer array: for interior edges ``-1`` means the edge is
    inflow for the left triangle, ``+1`` inflow for the right triangle, and
    ``0`` outflow for both (``b . n == 0``).  For boundary edges ``-1`` marks
    domain inflow and ``0`` outflow.
    """
    mid = mesh.edge_midpoints
    bx, by = velocity(mid[:, 0], mid[:, 1])
    bn = (np.asarray(bx, dtype=float) * mesh.edge_normal[:, 0]
          + np.asarray(by, dtype=float) * mesh.edge_normal[:, 1])
    bn = np.broadcast_to(bn, (len(mid),))
    label = np.zeros(len(mid), dtype=np.int64)
    label[bn < 0] = -1
    label[(bn > 0) & ~mesh.boundary] = 1
    return label
