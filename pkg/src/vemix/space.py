"""Local and global velocity DoF layouts.

Local DoF ordering on an element with n_E vertices and degree k:

* boundary nodes b = 0..k*n_E-1 (the n_E vertices counterclockwise, then for
  each edge i -> i+1 its k-1 interior Gauss-Lobatto points in edge
  direction); node b carries DoFs 2b (x-component) and 2b+1 (y-component);
* npoly(k-3) moments (1/|E|) int v . m_perp m_i;
* npoly(k-1) - 1 moments (hE/|E|) int div(v) m_l for l = 2..npoly(k-1).

Globally, vertex v owns DoFs (2v, 2v+1); edge points follow, numbered along
the edge from its lower to its higher global vertex; then each element's
interior moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import poly
from .mesh import ElementGeometry, PolygonalMesh
from .poly import npoly
from .quadrature import gauss_legendre, gauss_lobatto, lagrange_matrix, polygon_rule


class UnsupportedDegreeError(ValueError):
    pass


def local_ndof(k: int, n_vertices: int) -> int:
    return 2 * n_vertices * k + (k - 1) * (k - 2) // 2 + (k + 1) * k // 2 - 1


def element_rule_degree(k: int) -> int:
    return max(2 * k, 3 * k - 1)


# Working precision of every element-level integral.  Boundary integrals of
# high-degree scaled monomials cancel heavily, so double precision would cap
# the accuracy of the degree-6 projectors near 1e-9.
WORK_DTYPE = np.longdouble


class LocalSpace:
    """DoF layout and the DoF-computable geometric data of one element.

    Geometric arrays (edge points, weights, normals, element rule) are held in
    ``WORK_DTYPE``; the public interpolation results are float64.
    """

    def __init__(self, k: int, geometry: ElementGeometry):
        if k < 2:
            raise UnsupportedDegreeError(f"degree k must be >= 2, got {k}")
        self.k = k
        self.geometry = geometry
        self.frame = geometry.frame
        self.n_vertices = geometry.n_vertices
        nE = self.n_vertices
        self.n_boundary = 2 * k * nE
        self.n_mperp = npoly(k - 3)
        self.n_div = npoly(k - 1) - 1
        self.ndof = self.n_boundary + self.n_mperp + self.n_div
        self.mperp_slice = slice(self.n_boundary, self.n_boundary + self.n_mperp)
        self.div_slice = slice(self.n_boundary + self.n_mperp, self.ndof)

        wp = WORK_DTYPE
        self.h = wp(self.frame.diameter)
        self.area = wp(self.frame.area)
        lob = gauss_lobatto(k + 1, wp)
        v = geometry.vertices.astype(wp)
        p0, p1 = v, np.roll(v, -1, axis=0)
        tangent = p1 - p0
        lengths = np.sqrt((tangent * tangent).sum(axis=1))
        self.normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]
        self.perimeter = lengths.sum()
        t = np.asarray(lob.nodes)
        # (nE, k+1, 2) positions of the closed-edge Lobatto points
        self.edge_points = (p0 + p1)[:, None, :] / 2 + t[None, :, None] * tangent[:, None, :] / 2
        interior = self.edge_points[:, 1:-1, :].reshape(-1, 2)
        self.nodes = np.vstack([v, interior])
        self.edge_nodes = np.empty((nE, k + 1), dtype=int)
        for e in range(nE):
            self.edge_nodes[e, 0] = e
            self.edge_nodes[e, 1:-1] = nE + e * (k - 1) + np.arange(k - 1)
            self.edge_nodes[e, -1] = (e + 1) % nE
        half = lengths / 2
        self.lobatto_weights = half[:, None] * np.asarray(lob.weights)[None, :]
        # Gauss rule of degree 2k+1 plus the map from Lobatto values to Gauss values
        gl = gauss_legendre(k + 1, wp)
        tg = np.asarray(gl.nodes)
        self.gauss_points = (p0 + p1)[:, None, :] / 2 + tg[None, :, None] * tangent[:, None, :] / 2
        self.gauss_weights = half[:, None] * np.asarray(gl.weights)[None, :]
        self.lobatto_to_gauss = lagrange_matrix(t, tg)

    @property
    def frame_h(self) -> float:
        return self.frame.diameter

    # ------------------------------------------------------------------
    # element integrals of monomials

    @cached_property
    def rule(self):
        return polygon_rule(self.geometry.vertices, element_rule_degree(self.k), self.geometry.centroid, WORK_DTYPE)

    def float_rule(self, degree: int):
        """Double-precision element rule of the given degree, for integrands given as callables."""
        cache = self.__dict__.setdefault("_float_rules", {})
        if degree not in cache:
            cache[degree] = polygon_rule(self.geometry.vertices, degree, self.geometry.centroid)
        return cache[degree]

    @cached_property
    def monomial_integrals(self) -> np.ndarray:
        """int_E m_g for all |g| <= 2k + 1."""
        deg = max(2 * self.k + 1, element_rule_degree(self.k))
        m = poly.eval_monomials(deg, self.frame, self.rule.points)
        return self.rule.weights @ m

    def gram(self, n1: int, n2: int) -> np.ndarray:
        """[int_E m_i m_j] for |i| <= n1, |j| <= n2."""
        if n1 < 0 or n2 < 0:
            return np.zeros((npoly(n1), npoly(n2)), dtype=WORK_DTYPE)
        a = poly.multi_indices(n1)[:, None, :] + poly.multi_indices(n2)[None, :, :]
        d = a.sum(-1)
        pos = (d * (d + 1)) // 2 + a[..., 1]
        return self.monomial_integrals[pos]

    def vector_gram(self, n: int) -> np.ndarray:
        g = self.gram(n, n)
        z = np.zeros_like(g)
        return np.block([[g, z], [z, g]])

    def matrix_gram(self, n: int) -> np.ndarray:
        g = self.gram(n, n)
        return np.kron(np.eye(4), g)

    # ------------------------------------------------------------------
    # boundary functionals

    @cached_property
    def _scatter(self) -> np.ndarray:
        # maps per-(edge, point, component) contributions to local DoFs
        nE, kp1 = self.edge_nodes.shape
        s = np.zeros((nE * kp1 * 2, self.ndof), dtype=WORK_DTYPE)
        idx = (2 * self.edge_nodes[:, :, None] + np.arange(2)[None, None, :]).ravel()
        s[np.arange(idx.size), idx] = 1.0
        return s

    def boundary_rows(self, values: np.ndarray, rule: str = "lobatto") -> np.ndarray:
        """Rows r_t with r_t . dofs = sum_e int_e v . g_t.

        ``values`` holds g_t at the edge points of ``rule``: shape
        (ntest, nE, npts, 2).  The Lobatto rule uses the edge DoFs directly
        (exact up to degree 2k-1); the Gauss rule reconstructs the trace from
        them (exact up to degree 2k+1).
        """
        values = np.asarray(values)
        if rule == "lobatto":
            contrib = values * self.lobatto_weights[None, :, :, None]
        elif rule == "gauss":
            contrib = np.einsum("eq,teqc,qa->teac", self.gauss_weights, values, self.lobatto_to_gauss)
        else:
            raise ValueError(rule)
        return contrib.reshape(values.shape[0], -1) @ self._scatter

    def edge_points_for(self, rule: str) -> np.ndarray:
        return self.edge_points if rule == "lobatto" else self.gauss_points

    def edge_weights_for(self, rule: str) -> np.ndarray:
        return self.lobatto_weights if rule == "lobatto" else self.gauss_weights

    def rule_for_degree(self, degree: int) -> str:
        return "lobatto" if degree <= 2 * self.k - 1 else "gauss"

    # ------------------------------------------------------------------
    # interpolation

    @cached_property
    def monomial_dofs(self) -> np.ndarray:
        """DoF values of every vector monomial of [M_k]^2; shape (ndof, 2 npoly(k))."""
        return self.monomial_dofs_ext.astype(float)

    @cached_property
    def monomial_dofs_ext(self) -> np.ndarray:
        k, h, area = self.k, self.h, self.area
        pk = npoly(k)
        out = np.zeros((self.ndof, 2 * pk), dtype=WORK_DTYPE)
        vals = poly.eval_monomials(k, self.frame, self.nodes)
        out[0: self.n_boundary: 2, :pk] = vals
        out[1: self.n_boundary: 2, pk:] = vals
        if self.n_mperp:
            # (1/|E|) int m_j . m_perp m_i
            g = self.gram(k - 3, k + 1)
            out[self.mperp_slice, :pk] = g @ poly.mult_matrix(k, (0, 1)) / area
            out[self.mperp_slice, pk:] = -g @ poly.mult_matrix(k, (1, 0)) / area
        div = poly.vector_div_matrix(k, h)
        out[self.div_slice] = (h / area) * (self.gram(k - 1, k - 1) @ div)[1:]
        return out

    def interpolate_polynomial(self, coeffs) -> np.ndarray:
        """DoFs of vector polynomials of degree <= k given in [M_n]^2 coefficients.

        ``coeffs`` is one coefficient vector or a matrix with one polynomial per
        column.  The DoFs are formed in the working precision and rounded once,
        because the monomial DoF values cancel heavily at high degree.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        n = _vector_degree(coeffs.shape[0])
        padded = pad_vector(coeffs.T, n, self.k).T
        return (self.monomial_dofs_ext @ padded.astype(WORK_DTYPE)).astype(float)

    def interpolate(self, v, div_v, rule=None) -> np.ndarray:
        """DoFs of a smooth field from pointwise callables ``v(pts) -> (n, 2)`` and ``div_v(pts) -> (n,)``."""
        rule = rule or self.rule
        k, h, area = self.k, self.frame.diameter, self.frame.area
        pts = np.asarray(rule.points, dtype=float)
        weights = np.asarray(rule.weights, dtype=float)
        out = np.empty(self.ndof)
        out[: self.n_boundary] = np.asarray(v(self.nodes.astype(float))).ravel()
        m = poly.eval_monomials(k - 1, self.frame, pts)
        if self.n_mperp:
            vals = np.asarray(v(pts))
            xi = self.frame.scaled(pts)
            dot = vals[:, 0] * xi[:, 1] - vals[:, 1] * xi[:, 0]
            out[self.mperp_slice] = (weights * dot) @ m[:, : self.n_mperp] / area
        dv = np.asarray(div_v(pts))
        out[self.div_slice] = (h / area) * ((weights * dv) @ m)[1:]
        return out


def _vector_degree(size: int) -> int:
    n = 0
    while 2 * npoly(n) < size:
        n += 1
    if 2 * npoly(n) != size:
        raise ValueError(f"{size} is not a vector polynomial coefficient count")
    return n


def pad_vector(c, n_from: int, n_to: int) -> np.ndarray:
    """Re-embed [P_n_from]^2 coefficients into [P_n_to]^2 (n_to >= n_from)."""
    c = np.asarray(c)
    pf, pt = npoly(n_from), npoly(n_to)
    out = np.zeros(c.shape[:-1] + (2 * pt,)) if c.ndim > 1 else np.zeros(2 * pt)
    out[..., :pf] = c[..., :pf]
    out[..., pt: pt + pf] = c[..., pf:]
    return out


def build_local_space(k: int, geometry: ElementGeometry) -> LocalSpace:
    return LocalSpace(k, geometry)


# --------------------------------------------------------------------------
# global numbering


@dataclass
class GlobalDoFMap:
    k: int
    local_to_global: list[np.ndarray]
    n_velocity: int
    boundary_mask: np.ndarray
    pressure_offsets: np.ndarray
    n_pressure: int
    node_coords: np.ndarray  # coordinates of each global boundary-type node (vertex or edge point)

    @property
    def gndof(self) -> int:
        return self.n_velocity


def build_global_map(mesh: PolygonalMesh, k: int) -> GlobalDoFMap:
    if k < 2:
        raise UnsupportedDegreeError(f"degree k must be >= 2, got {k}")
    nv = mesh.n_vertices
    edges = mesh.edges
    n_edge_pts = k - 1
    n_nodes = nv + len(edges) * n_edge_pts
    node_coords = np.empty((n_nodes, 2))
    node_coords[:nv] = mesh.vertices
    t = np.asarray(gauss_lobatto(k + 1).nodes)[1:-1]
    a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    pts = 0.5 * (a + b)[:, None, :] + 0.5 * t[None, :, None] * (b - a)[:, None, :]
    node_coords[nv:] = pts.reshape(-1, 2)

    n_interior = npoly(k - 3) + npoly(k - 1) - 1
    offset = 2 * n_nodes
    l2g = []
    for ei, loop in enumerate(mesh.elements):
        nE = len(loop)
        nodes = np.empty(k * nE, dtype=int)
        nodes[:nE] = loop
        for e in range(nE):
            va, vb = loop[e], loop[(e + 1) % nE]
            gid = mesh.edge_index[(min(va, vb), max(va, vb))]
            local = nv + gid * n_edge_pts + np.arange(n_edge_pts)
            if va > vb:
                local = local[::-1]
            nodes[nE + e * n_edge_pts: nE + (e + 1) * n_edge_pts] = local
        dofs = np.empty(2 * k * nE + n_interior, dtype=int)
        dofs[0: 2 * k * nE: 2] = 2 * nodes
        dofs[1: 2 * k * nE: 2] = 2 * nodes + 1
        dofs[2 * k * nE:] = offset + np.arange(n_interior)
        offset += n_interior
        l2g.append(dofs)

    mask = np.zeros(offset, dtype=bool)
    bverts = np.flatnonzero(mesh.boundary_vertices)
    bnodes = [bverts]
    for gid in np.flatnonzero(mesh.boundary_edges):
        bnodes.append(nv + gid * n_edge_pts + np.arange(n_edge_pts))
    bnodes = np.concatenate(bnodes)
    mask[2 * bnodes] = True
    mask[2 * bnodes + 1] = True

    npk = npoly(k - 1)
    return GlobalDoFMap(k, l2g, offset, mask, np.arange(mesh.n_elements) * npk, mesh.n_elements * npk, node_coords)
