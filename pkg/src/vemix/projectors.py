"""Divergence reconstruction and polynomial projectors computed from DoFs only.

Every routine returns a dense matrix whose columns are the polynomial
coefficients of the projection of one local basis function, so that the
projection of a virtual function with DoF vector ``d`` is ``P @ d``.

The element integrals of virtual functions are reduced to DoFs through the
scaled decomposition

    (m_a, 0) = hE/(|a|+1) grad m_(a1+1, a2) + a2/(|a|+1) m_perp m_(a1, a2-1)

and integration by parts, so the only interior data used are the moments
against m_perp m_i and the divergence moments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from . import poly
from .poly import npoly
from .space import WORK_DTYPE, LocalSpace

log = logging.getLogger(__name__)

COND_WARNING = 1e12


class IllConditionedElementError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ProjectorMatrix:
    kind: str
    matrix: np.ndarray

    def __matmul__(self, other):
        return self.matrix @ other


REFINEMENT_STEPS = 3


def _solve(lhs: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve a small dense system to working precision.

    LAPACK only factors in double, so the factorization is double and the
    solution is refined with residuals evaluated in the working precision.
    """
    # row/column equilibration: scaled monomials of high degree have small norms
    r = 1 / np.sqrt(np.abs(lhs).max(axis=1))
    c = 1 / np.sqrt(np.abs(lhs).max(axis=0))
    lhs = r[:, None] * lhs * c[None, :]
    rhs = r[:, None] * rhs
    lhs64 = lhs.astype(float)
    try:
        lu = sla.lu_factor(lhs64, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise IllConditionedElementError(f"{what}: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise IllConditionedElementError(f"{what}: singular local system")
    cond = np.linalg.cond(lhs64)
    if cond > COND_WARNING:
        log.warning("%s: local system condition number %.2e", what, cond)
    x = sla.lu_solve(lu, rhs.astype(float)).astype(lhs.dtype)
    for _ in range(REFINEMENT_STEPS):
        x += sla.lu_solve(lu, (rhs - lhs @ x).astype(float))
    return c[:, None] * x


class ElementProjectors:
    """All DoF-to-polynomial maps of one element, computed lazily.

    Attribute names follow the kind labels: ``divergence``, ``nabla_k``,
    ``eps_k``, ``zero_k``, ``zero_km1_grad``, ``zero_km1_eps``.  They are
    read-only arrays in the working precision (``WORK_DTYPE``): at high
    degree the entries reach 1e9 with heavy cancellation, and rounding them
    to float64 alone costs about two digits of reproduction accuracy.
    :meth:`as_float` returns cached float64 copies.
    """

    def __init__(self, space: LocalSpace):
        self.space = space
        self.k = space.k
        self.h = space.h
        self.area = space.area

    # ------------------------------------------------------------------
    # DoF-computable element integrals

    @cached_property
    def _flux_rows(self) -> np.ndarray:
        # int_dE (v . n) m_b for |b| <= k+1
        sp, k = self.space, self.k
        rows = np.zeros((npoly(k + 1), sp.ndof), dtype=WORK_DTYPE)
        normals = sp.normals
        for rule, sel in (("lobatto", slice(0, npoly(k - 1))), ("gauss", slice(npoly(k - 1), npoly(k + 1)))):
            pts = sp.edge_points_for(rule)
            m = poly.eval_monomials(k + 1, sp.frame, pts.reshape(-1, 2))[:, sel]
            m = m.reshape(pts.shape[0], pts.shape[1], -1)
            vals = np.einsum("eqt,ec->teqc", m, normals)
            rows[sel] = sp.boundary_rows(vals, rule)
        return rows

    @cached_property
    def _div_moment_rows(self) -> np.ndarray:
        # int_E div(v) m_b for |b| <= k+1
        k = self.k
        rows = np.zeros((npoly(k + 1), self.space.ndof), dtype=WORK_DTYPE)
        rows[0] = self._flux_rows[0]
        sp = self.space
        idx = np.arange(sp.div_slice.start, sp.div_slice.stop)
        rows[np.arange(1, npoly(k - 1)), idx] = self.area / self.h
        # beyond the DoF range use the reconstructed divergence polynomial
        rows[npoly(k - 1):] = sp.gram(k + 1, k - 1)[npoly(k - 1):] @ self._divergence
        return rows

    @cached_property
    def _grad_moment_rows(self) -> np.ndarray:
        # int_E v . grad m_b = -int div(v) m_b + int_dE (v . n) m_b
        return self._flux_rows - self._div_moment_rows

    def _perp_moment_rows(self, n: int) -> np.ndarray:
        # int_E v . m_perp m_b for |b| <= n  (n <= k-1)
        k, sp = self.k, self.space
        rows = np.zeros((npoly(n), sp.ndof), dtype=WORK_DTYPE)
        low = min(npoly(n), npoly(k - 3))
        rows[np.arange(low), np.arange(sp.mperp_slice.start, sp.mperp_slice.start + low)] = self.area
        if npoly(n) > low:
            # enhancing condition: these moments equal those of the nabla projection
            target = poly.mperp_times(n) @ np.eye(npoly(n))[:, low:]
            g = sp.vector_gram(k)[:, : 2 * npoly(k)]
            rows[low:] = (pad_to(target, n + 1, k).T @ g) @ self._nabla_k
        return rows

    def vector_moment_rows(self, n: int) -> np.ndarray:
        """Rows r_j with r_j . dofs = int_E v . m_j for every m_j in [M_n]^2, n <= k."""
        g, q = poly.decomposition_matrices(n, self.h, WORK_DTYPE)
        out = g.T @ self._grad_moment_rows[: npoly(n + 1)]
        if n >= 1:
            out = out + q.T @ self._perp_moment_rows(n - 1)
        return out

    @cached_property
    def _low_moments(self) -> np.ndarray:
        # [M_{k-2}]^2 moments: only use DoF moments directly
        return self.vector_moment_rows(self.k - 2)

    def _edge_values(self, coeffs_vec: np.ndarray, n: int, rule: str) -> np.ndarray:
        # values of vector polynomials (columns of coeffs_vec over [M_n]^2) at edge points
        pts = self.space.edge_points_for(rule)
        m = poly.eval_monomials(n, self.space.frame, pts.reshape(-1, 2))
        c = coeffs_vec.reshape(2, npoly(n), -1)
        vals = np.einsum("pi,cit->tpc", m, c)
        return vals.reshape(-1, pts.shape[0], pts.shape[1], 2)

    def _edge_matrix_values(self, coeffs_mat: np.ndarray, n: int, rule: str) -> np.ndarray:
        # values of (M n_e) at edge points for matrix polynomials M (columns over [M_n]^{2x2})
        sp = self.space
        pts = sp.edge_points_for(rule)
        m = poly.eval_monomials(n, sp.frame, pts.reshape(-1, 2)).reshape(pts.shape[0], pts.shape[1], -1)
        c = coeffs_mat.reshape(2, 2, npoly(n), -1)
        return np.einsum("eqi,rsit,es->teqr", m, c, sp.normals)

    # ------------------------------------------------------------------
    # projectors

    @cached_property
    def _divergence(self) -> np.ndarray:
        # coefficients of div(v) over M_{k-1}; shape (npoly(k-1), ndof)
        k, sp = self.k, self.space
        rhs = np.zeros((npoly(k - 1), sp.ndof), dtype=WORK_DTYPE)
        rhs[0] = self._flux_rows[0]
        idx = np.arange(sp.div_slice.start, sp.div_slice.stop)
        rhs[np.arange(1, npoly(k - 1)), idx] = self.area / self.h
        return _solve(sp.gram(k - 1, k - 1), rhs, "divergence")

    @cached_property
    def _nabla_k(self) -> np.ndarray:
        k, sp, h = self.k, self.space, self.h
        pk = npoly(k)
        grad = poly.vector_grad_matrix(k, h)
        lhs = grad.T @ sp.matrix_gram(k - 1) @ grad
        # int grad v : grad m_j = -int v . lap m_j + sum_e int_e v . (grad m_j n_e)
        lap = poly.vector_laplacian_matrix(k, h)
        rhs = -pad_to(lap, k - 2, k - 2).T @ self._low_moments
        rhs += sp.boundary_rows(self._edge_matrix_values(grad, k - 1, "lobatto"), "lobatto")
        const = [0, pk]
        lhs[const], rhs[const] = self._boundary_average_rows(np.eye(2 * pk)[:, const])
        return _solve(lhs, rhs, "nabla projection")

    def _boundary_average_rows(self, test: np.ndarray):
        # int_dE m_i . q  (lhs) and int_dE v . q (rhs) for vector polynomials q of degree <= 1
        sp, k = self.space, self.k
        pk = npoly(k)
        test1 = pad_to(test, k, 1) if test.shape[0] == 2 * pk else test
        pts = sp.gauss_points.reshape(-1, 2)
        w = sp.gauss_weights.ravel()
        m = poly.eval_monomials(k, sp.frame, pts)
        q = np.einsum("pi,cit->pct", poly.eval_monomials(1, sp.frame, pts), test1.reshape(2, 3, -1))
        lhs = np.concatenate([m.T @ (w[:, None] * q[:, 0, :]), m.T @ (w[:, None] * q[:, 1, :])]).T
        rhs = sp.boundary_rows(self._edge_values(test1, 1, "lobatto"), "lobatto")
        scale = 1 / sp.perimeter
        return lhs * scale, rhs * scale

    @cached_property
    def _eps_k(self) -> np.ndarray:
        k, sp, h = self.k, self.space, self.h
        pk = npoly(k)
        eps = poly.vector_eps_matrix(k, h)
        lhs = eps.T @ sp.matrix_gram(k - 1) @ eps
        diveps = poly.vector_div_eps_matrix(k, h)
        rhs = -pad_to(diveps, k - 2, k - 2).T @ self._low_moments
        rhs += sp.boundary_rows(self._edge_matrix_values(eps, k - 1, "lobatto"), "lobatto")
        # rigid motions: (1,0), (0,1), m_perp.  The test monomial (0, m_(1,0)) carries the
        # same condition as (m_(0,1), 0) modulo m_perp, so its row is replaced too.
        rows = [0, pk, pk + 1]
        kernel = np.zeros((2 * pk, 3), dtype=WORK_DTYPE)
        kernel[0, 0] = 1.0
        kernel[pk, 1] = 1.0
        kernel[2, 2] = 1.0     # m_(0,1) in the x-slot
        kernel[pk + 1, 2] = -1.0  # -m_(1,0) in the y-slot
        lhs[rows], rhs[rows] = self._boundary_average_rows(kernel)
        return _solve(lhs, rhs, "eps projection")

    @cached_property
    def _zero_k(self) -> np.ndarray:
        sp, k = self.space, self.k
        return _solve(sp.vector_gram(k), self.vector_moment_rows(k), "L2 projection")

    @cached_property
    def _zero_km1_grad(self) -> np.ndarray:
        return _solve(self.space.matrix_gram(self.k - 1), self._matrix_rhs(), "L2 gradient projection")

    @cached_property
    def _zero_km1_eps(self) -> np.ndarray:
        sym = poly.sym_matrix(self.k - 1)
        out = _solve(self.space.matrix_gram(self.k - 1), sym @ self._matrix_rhs(), "L2 strain projection")
        # exact in exact arithmetic; re-applied so the off-diagonal slots agree bit for bit
        return sym @ out

    def _matrix_rhs(self) -> np.ndarray:
        # int grad v : M_j = -int v . div M_j + sum_e int_e v . (M_j n_e)
        k, sp = self.k, self.space
        ident = np.eye(4 * npoly(k - 1), dtype=WORK_DTYPE)
        div = poly.matrix_div_matrix(k - 1, self.h)
        rhs = -pad_to(div, k - 2, k - 2).T @ self._low_moments
        rhs += sp.boundary_rows(self._edge_matrix_values(ident, k - 1, "lobatto"), "lobatto")
        return rhs

    # ------------------------------------------------------------------
    # public matrices (working precision) and their float64 copies

    def _public(self, name: str) -> np.ndarray:
        out = getattr(self, name).view()
        out.setflags(write=False)
        return out

    @property
    def divergence(self) -> np.ndarray:
        """Coefficients of div(v) over M_{k-1}; shape (npoly(k-1), ndof)."""
        return self._public("_divergence")

    @property
    def nabla_k(self) -> np.ndarray:
        """H1-seminorm projection onto [P_k]^2; shape (2 npoly(k), ndof)."""
        return self._public("_nabla_k")

    @property
    def eps_k(self) -> np.ndarray:
        """Energy projection for the strain form onto [P_k]^2."""
        return self._public("_eps_k")

    @property
    def zero_k(self) -> np.ndarray:
        """L2 projection onto [P_k]^2."""
        return self._public("_zero_k")

    @property
    def zero_km1_grad(self) -> np.ndarray:
        """L2 projection of the gradient onto [P_{k-1}]^{2x2}."""
        return self._public("_zero_km1_grad")

    @property
    def zero_km1_eps(self) -> np.ndarray:
        """L2 projection of the strain onto [P_{k-1}]^{2x2}."""
        return self._public("_zero_km1_eps")

    def as_float(self, kind: str) -> np.ndarray:
        """float64 copy of one projector, cached; for BLAS-speed products in the solver."""
        if kind not in KINDS:
            raise KeyError(f"unknown projector kind {kind!r}")
        cache = self.__dict__.setdefault("_float_cache", {})
        if kind not in cache:
            cache[kind] = getattr(self, "_" + kind).astype(float)
        return cache[kind]

    def matrix(self, kind: str) -> ProjectorMatrix:
        if kind not in KINDS:
            raise KeyError(f"unknown projector kind {kind!r}")
        return ProjectorMatrix(kind, getattr(self, kind))


KINDS = ("divergence", "nabla_k", "eps_k", "zero_k", "zero_km1_grad", "zero_km1_eps")


def pad_to(c: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    """Re-embed the rows of a [P_n_from]^2 coefficient matrix into [P_n_to]^2 (truncating if smaller)."""
    pf, pt = npoly(n_from), npoly(n_to)
    m = min(pf, pt)
    out = np.zeros((2 * pt,) + c.shape[1:], dtype=np.result_type(c, float))
    out[:m] = c[:m]
    out[pt: pt + m] = c[pf: pf + m]
    return out


# --------------------------------------------------------------------------
# functional interface


def divergence_matrix(space: LocalSpace) -> ProjectorMatrix:
    return ElementProjectors(space).matrix("divergence")


def pi_nabla_matrix(space: LocalSpace) -> ProjectorMatrix:
    return ElementProjectors(space).matrix("nabla_k")


def pi_eps_matrix(space: LocalSpace) -> ProjectorMatrix:
    return ElementProjectors(space).matrix("eps_k")


def pi_zero_matrix(space: LocalSpace) -> ProjectorMatrix:
    return ElementProjectors(space).matrix("zero_k")


def pi_zero_grad_matrix(space: LocalSpace) -> ProjectorMatrix:
    return ElementProjectors(space).matrix("zero_km1_grad")


def pi_zero_eps_matrix(space: LocalSpace) -> ProjectorMatrix:
    return ElementProjectors(space).matrix("zero_km1_eps")


def dump_csv(projectors: ElementProjectors, element: int, path) -> None:
    """Write every projector matrix of one element as CSV blocks."""
    with open(path, "w") as fh:
        for kind in KINDS:
            mat = getattr(projectors, kind)
            fh.write(f"# kind={kind} element={element} k={projectors.k} rows={mat.shape[0]} cols={mat.shape[1]}\n")
            np.savetxt(fh, mat, delimiter=",", fmt="%.17g")
