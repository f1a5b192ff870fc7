"""Scaled monomial algebra on a polygon.

Scalar polynomials of degree ``n`` are stored as dense coefficient vectors of
length ``npoly(n)`` over the scaled monomials

    m_a(x, y) = ((x - xE) / hE) ** a1 * ((y - yE) / hE) ** a2

in graded order: degree 0, then degree 1, ... and, inside one degree, the
x-exponent descending.  Because the ordering is graded, the basis of P_n is a
prefix of the basis of P_m for m >= n.

Vector polynomials stack the x-component block and then the y-component block
(length ``2 * npoly(n)``); matrix polynomials stack the (1,1), (1,2), (2,1),
(2,2) blocks (length ``4 * npoly(n)``).

All differential operators are returned as dense matrices acting on those
coefficient vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class InvalidIndexError(ValueError):
    pass


def npoly(n: int) -> int:
    """Dimension of P_n; zero for n < 0."""
    if n < 0:
        return 0
    return (n + 1) * (n + 2) // 2


@dataclass(frozen=True)
class MultiIndex:
    alpha1: int
    alpha2: int

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise InvalidIndexError(f"negative exponent in {self}")

    @property
    def degree(self) -> int:
        return self.alpha1 + self.alpha2

    def __iter__(self):
        return iter((self.alpha1, self.alpha2))


def index_to_multiindex(i: int) -> MultiIndex:
    """1-based linear index -> multi-index (1 -> (0,0), 2 -> (1,0), 3 -> (0,1), ...)."""
    if i < 1:
        raise InvalidIndexError(f"monomial indices start at 1, got {i}")
    d = 0
    while npoly(d) < i:
        d += 1
    offset = i - npoly(d - 1) - 1
    return MultiIndex(d - offset, offset)


def multiindex_to_index(alpha) -> int:
    """Inverse of :func:`index_to_multiindex` (1-based)."""
    a1, a2 = alpha
    if a1 < 0 or a2 < 0:
        raise InvalidIndexError(f"negative exponent in {alpha}")
    d = a1 + a2
    return npoly(d - 1) + a2 + 1


def _pos(a1: int, a2: int) -> int:
    # 0-based position, -1 for the null monomial
    if a1 < 0 or a2 < 0:
        return -1
    return npoly(a1 + a2 - 1) + a2


@lru_cache(maxsize=None)
def multi_indices(n: int) -> np.ndarray:
    """Exponent table of shape (npoly(n), 2) in basis order."""
    out = np.zeros((npoly(n), 2), dtype=int)
    for d in range(n + 1):
        for a2 in range(d + 1):
            out[npoly(d - 1) + a2] = (d - a2, a2)
    out.setflags(write=False)
    return out


def degrees(n: int) -> np.ndarray:
    return multi_indices(n).sum(axis=1)


@dataclass(frozen=True)
class ElementFrame:
    """Centroid, diameter and area of an element."""

    centroid: tuple[float, float]
    diameter: float
    area: float

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError("element diameter must be positive")
        if not self.area > 0:
            raise ValueError("element area must be positive")

    def scaled(self, pts) -> np.ndarray:
        """Scaled coordinates (x - xE) / hE, in the precision of ``pts`` (at least double)."""
        pts = np.asarray(pts)
        pts = pts.astype(np.result_type(pts, float), copy=False)
        return (pts - np.asarray(self.centroid, dtype=pts.dtype)) / pts.dtype.type(self.diameter)


def eval_monomials(n: int, frame: ElementFrame, pts) -> np.ndarray:
    """Values of all scaled monomials of degree <= n; shape (npts, npoly(n))."""
    xi = frame.scaled(np.atleast_2d(pts))
    if n < 0:
        return np.zeros((xi.shape[0], 0), dtype=xi.dtype)
    mi = multi_indices(n)
    px = xi[:, :1] ** np.arange(n + 1)
    py = xi[:, 1:] ** np.arange(n + 1)
    return px[:, mi[:, 0]] * py[:, mi[:, 1]]


def eval_monomial(alpha, frame: ElementFrame, x) -> float:
    if alpha is None:
        return 0.0
    a1, a2 = alpha
    xi = frame.scaled(x)
    return float(xi[0] ** a1 * xi[1] ** a2)


def eval_poly(coeffs, n: int, frame: ElementFrame, pts) -> np.ndarray:
    return eval_monomials(n, frame, pts) @ np.asarray(coeffs)


def eval_vector_poly(coeffs, n: int, frame: ElementFrame, pts) -> np.ndarray:
    """Values of a vector polynomial; shape (npts, 2)."""
    m = eval_monomials(n, frame, pts)
    c = np.asarray(coeffs).reshape(2, -1)
    return m @ c.T


def eval_matrix_poly(coeffs, n: int, frame: ElementFrame, pts) -> np.ndarray:
    """Values of a matrix polynomial; shape (npts, 2, 2)."""
    m = eval_monomials(n, frame, pts)
    c = np.asarray(coeffs).reshape(4, -1)
    return (m @ c.T).reshape(-1, 2, 2)


# --------------------------------------------------------------------------
# coefficient-space operators


@lru_cache(maxsize=None)
def _diff_unit(n: int, axis: int) -> np.ndarray:
    # derivative w.r.t. the scaled variable, P_n -> P_{n-1}
    out = np.zeros((npoly(n - 1), npoly(n)))
    for j, (a1, a2) in enumerate(multi_indices(n)):
        if axis == 0 and a1 > 0:
            out[_pos(a1 - 1, a2), j] = a1
        elif axis == 1 and a2 > 0:
            out[_pos(a1, a2 - 1), j] = a2
    out.setflags(write=False)
    return out


def diff_matrix(n: int, axis: int, h: float) -> np.ndarray:
    """d/dx (axis 0) or d/dy (axis 1) as a map P_n -> P_{n-1}."""
    return _diff_unit(n, axis) / h


def embed_matrix(n: int, m: int) -> np.ndarray:
    """Inclusion P_n -> P_m (m >= n)."""
    return np.eye(npoly(m), npoly(n))


@lru_cache(maxsize=None)
def mult_matrix(n: int, alpha: tuple[int, int]) -> np.ndarray:
    """Multiplication by m_alpha as a map P_n -> P_{n + |alpha|}."""
    a1, a2 = alpha
    out = np.zeros((npoly(n + a1 + a2), npoly(n)))
    for j, (b1, b2) in enumerate(multi_indices(n)):
        out[_pos(a1 + b1, a2 + b2), j] = 1.0
    out.setflags(write=False)
    return out


def grad_matrix(n: int, h: float) -> np.ndarray:
    """Gradient P_n -> [P_{n-1}]^2."""
    return np.vstack([diff_matrix(n, 0, h), diff_matrix(n, 1, h)])


def vector_grad_matrix(n: int, h: float) -> np.ndarray:
    """Gradient [P_n]^2 -> [P_{n-1}]^{2x2}; slot (r, c) holds d v_r / d x_c."""
    dx, dy = diff_matrix(n, 0, h), diff_matrix(n, 1, h)
    z = np.zeros_like(dx)
    return np.block([[dx, z], [dy, z], [z, dx], [z, dy]])


def vector_div_matrix(n: int, h: float) -> np.ndarray:
    """Divergence [P_n]^2 -> P_{n-1}."""
    return np.hstack([diff_matrix(n, 0, h), diff_matrix(n, 1, h)])


def vector_eps_matrix(n: int, h: float) -> np.ndarray:
    """Symmetric gradient [P_n]^2 -> [P_{n-1}]^{2x2}."""
    return sym_matrix(n - 1) @ vector_grad_matrix(n, h)


def sym_matrix(n: int) -> np.ndarray:
    """Symmetric part (M + M^T) / 2 acting on [P_n]^{2x2} coefficients."""
    p = npoly(n)
    eye = np.eye(p)
    z = np.zeros((p, p))
    return np.block([
        [eye, z, z, z],
        [z, eye / 2, eye / 2, z],
        [z, eye / 2, eye / 2, z],
        [z, z, z, eye],
    ])


def matrix_div_matrix(n: int, h: float) -> np.ndarray:
    """Row-wise divergence [P_n]^{2x2} -> [P_{n-1}]^2."""
    dx, dy = diff_matrix(n, 0, h), diff_matrix(n, 1, h)
    z = np.zeros_like(dx)
    return np.block([[dx, dy, z, z], [z, z, dx, dy]])


def vector_laplacian_matrix(n: int, h: float) -> np.ndarray:
    """Component-wise Laplacian [P_n]^2 -> [P_{n-2}]^2."""
    lap = diff_matrix(n - 1, 0, h) @ diff_matrix(n, 0, h) + diff_matrix(n - 1, 1, h) @ diff_matrix(n, 1, h)
    z = np.zeros_like(lap)
    return np.block([[lap, z], [z, lap]])


def vector_div_eps_matrix(n: int, h: float) -> np.ndarray:
    """div(eps(v)) = (lap v + grad div v) / 2 as a map [P_n]^2 -> [P_{n-2}]^2."""
    return matrix_div_matrix(n - 1, h) @ vector_eps_matrix(n, h)


def mperp_times(n: int) -> np.ndarray:
    """q -> m_perp q with m_perp = (m_(0,1), -m_(1,0)); P_n -> [P_{n+1}]^2."""
    return np.vstack([mult_matrix(n, (0, 1)), -mult_matrix(n, (1, 0))])


def unit(size: int, i: int) -> np.ndarray:
    e = np.zeros(size)
    e[i] = 1.0
    return e


# --------------------------------------------------------------------------
# monomial-level helpers


@dataclass(frozen=True)
class ScalarPolynomial:
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != npoly(self.degree):
            raise ValueError(f"expected {npoly(self.degree)} coefficients, got {len(self.coeffs)}")


@dataclass(frozen=True)
class VectorPolynomial:
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != 2 * npoly(self.degree):
            raise ValueError(f"expected {2 * npoly(self.degree)} coefficients, got {len(self.coeffs)}")

    @property
    def x(self) -> np.ndarray:
        return self.coeffs[: npoly(self.degree)]

    @property
    def y(self) -> np.ndarray:
        return self.coeffs[npoly(self.degree):]


@dataclass(frozen=True)
class MatrixPolynomial:
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != 4 * npoly(self.degree):
            raise ValueError(f"expected {4 * npoly(self.degree)} coefficients, got {len(self.coeffs)}")


@dataclass(frozen=True)
class GradPerpDecomposition:
    """p = grad(grad_part) + m_perp * perp_part.

    ``grad_part`` has degree n + 1 and no constant term, ``perp_part`` has
    degree n - 1 (empty for n = 0).
    """

    grad_part: ScalarPolynomial
    perp_part: ScalarPolynomial


def vector_slot(n: int, i: int) -> tuple[int, tuple[int, int]]:
    """0-based index into [M_n]^2 -> (component, exponent pair)."""
    p = npoly(n)
    comp, j = divmod(i, p)
    return comp, tuple(int(a) for a in multi_indices(n)[j])


def grad_monomial(alpha, frame: ElementFrame) -> VectorPolynomial:
    """Gradient of m_alpha as a vector polynomial of degree |alpha| - 1."""
    a1, a2 = alpha
    n = a1 + a2
    c = np.zeros(npoly(n))
    c[_pos(a1, a2)] = 1.0
    return VectorPolynomial(n - 1 if n > 0 else 0, _pad_vector(grad_matrix(n, frame.diameter) @ c, n - 1, max(n - 1, 0)))


def _pad_vector(c: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    # re-embed a [P_{n_from}]^2 coefficient vector into [P_{n_to}]^2
    p_from, p_to = npoly(n_from), npoly(n_to)
    out = np.zeros(2 * p_to)
    out[:p_from] = c[:p_from]
    out[p_to: p_to + p_from] = c[p_from:]
    return out


def laplacian_vector_monomial(n: int, i: int, frame: ElementFrame) -> VectorPolynomial:
    """Laplacian of the i-th (0-based) vector monomial of [M_n]^2, degree n - 2."""
    c = vector_laplacian_matrix(n, frame.diameter) @ unit(2 * npoly(n), i)
    return VectorPolynomial(max(n - 2, 0), _pad_vector(c, n - 2, max(n - 2, 0)))


def div_eps_vector_monomial(n: int, i: int, frame: ElementFrame) -> VectorPolynomial:
    c = vector_div_eps_matrix(n, frame.diameter) @ unit(2 * npoly(n), i)
    return VectorPolynomial(max(n - 2, 0), _pad_vector(c, n - 2, max(n - 2, 0)))


def div_matrix_monomial(n: int, j: int, frame: ElementFrame) -> VectorPolynomial:
    """Row-wise divergence of the j-th (0-based) matrix monomial of [M_n]^{2x2}."""
    c = matrix_div_matrix(n, frame.diameter) @ unit(4 * npoly(n), j)
    return VectorPolynomial(max(n - 1, 0), _pad_vector(c, n - 1, max(n - 1, 0)))


@lru_cache(maxsize=None)
def _decomposition_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    # (grad-part table for h = 1, perp-part table); grad part scales with h
    # built in long double so that extended-precision callers keep the exact ratios
    p = npoly(n)
    g = np.zeros((npoly(n + 1), 2 * p), dtype=np.longdouble)
    q = np.zeros((npoly(n - 1), 2 * p), dtype=np.longdouble)
    one = np.longdouble(1)
    for i in range(2 * p):
        comp, (a1, a2) = vector_slot(n, i)
        d = a1 + a2 + 1
        if comp == 0:
            g[_pos(a1 + 1, a2), i] = one / d
            if a2 > 0:
                q[_pos(a1, a2 - 1), i] = a2 * one / d
        else:
            g[_pos(a1, a2 + 1), i] = one / d
            if a1 > 0:
                q[_pos(a1 - 1, a2), i] = -a1 * one / d
    g.setflags(write=False)
    q.setflags(write=False)
    return g, q


def decomposition_matrices(n: int, h: float, dtype=float) -> tuple[np.ndarray, np.ndarray]:
    """Linear maps [P_n]^2 -> P_{n+1} (grad part) and [P_n]^2 -> P_{n-1} (perp part)."""
    g, q = _decomposition_unit(n)
    return g.astype(dtype) * np.dtype(dtype).type(h), q.astype(dtype)


def decompose_vector_monomial(n: int, i: int, frame: ElementFrame) -> GradPerpDecomposition:
    g, q = decomposition_matrices(n, frame.diameter)
    return GradPerpDecomposition(ScalarPolynomial(n + 1, g[:, i].copy()),
                                 ScalarPolynomial(n - 1, q[:, i].copy()))


def decompose_vector_polynomial(p: VectorPolynomial, frame: ElementFrame) -> GradPerpDecomposition:
    g, q = decomposition_matrices(p.degree, frame.diameter)
    return GradPerpDecomposition(ScalarPolynomial(p.degree + 1, g @ p.coeffs),
                                 ScalarPolynomial(p.degree - 1, q @ p.coeffs))


def reconstruct(dec: GradPerpDecomposition, frame: ElementFrame) -> VectorPolynomial:
    """grad(grad_part) + m_perp * perp_part."""
    n = dec.grad_part.degree - 1
    out = grad_matrix(n + 1, frame.diameter) @ dec.grad_part.coeffs
    if n >= 1:
        out = out + mperp_times(n - 1) @ dec.perp_part.coeffs
    return VectorPolynomial(n, out)
