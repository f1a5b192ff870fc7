"""1D Gauss rules and polygon quadrature by centroid-fan triangulation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


class DegenerateElementError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule1D:
    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _legendre_with_derivatives(n: int, x: np.ndarray):
    """P_n, P_n' and P_n'' at ``x`` by the three-term recurrence (dtype of ``x``)."""
    one = np.ones_like(x)
    p0, p1 = one, x.copy()
    d0, d1 = 0 * x, one
    s0, s1 = 0 * x, 0 * x
    if n == 0:
        return p0, d0, s0
    for j in range(1, n):
        p0, p1 = p1, ((2 * j + 1) * x * p1 - j * p0) / (j + 1)
        d0, d1 = d1, d0 + (2 * j + 1) * p0
        s0, s1 = s1, s0 + (2 * j + 1) * d0
    return p1, d1, s1


def _polish(x0: np.ndarray, f) -> np.ndarray:
    # Newton iterations in long double from double-precision starting values
    x = np.asarray(x0, dtype=np.longdouble)
    for _ in range(6):
        val, der = f(x)
        x = x - val / der
    return x


@lru_cache(maxsize=None)
def _lobatto_ext(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    n = npoints - 1
    pn = legendre.Legendre.basis(n)
    interior = np.sort(pn.deriv().roots().real) if n > 1 else np.array([])
    if interior.size:
        interior = _polish(interior, lambda x: _legendre_with_derivatives(n, x)[1:])
    x = np.concatenate([np.array([-1.0], dtype=np.longdouble), interior, np.array([1.0], dtype=np.longdouble)])
    x = (x - x[::-1]) / 2  # exact symmetry
    w = np.longdouble(2) / (n * (n + 1) * _legendre_with_derivatives(n, x)[0] ** 2)
    return x, (w + w[::-1]) / 2


@lru_cache(maxsize=None)
def _legendre_ext(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    x, _ = legendre.leggauss(npoints)
    x = _polish(x, lambda t: _legendre_with_derivatives(npoints, t)[:2])
    x = (x - x[::-1]) / 2
    dp = _legendre_with_derivatives(npoints, x)[1]
    w = np.longdouble(2) / ((1 - x * x) * dp * dp)
    return x, (w + w[::-1]) / 2


def _rule(x, w, degree, dtype) -> QuadratureRule1D:
    x, w = x.astype(dtype), w.astype(dtype)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule1D(x, w, degree)


@lru_cache(maxsize=None)
def gauss_lobatto(npoints: int, dtype=float) -> QuadratureRule1D:
    """Gauss-Lobatto rule on [-1, 1], exact up to degree 2 * npoints - 3.

    Nodes and weights are computed in long double and rounded to ``dtype``.
    """
    if npoints < 2:
        raise ValueError(f"Gauss-Lobatto needs at least 2 points, got {npoints}")
    return _rule(*_lobatto_ext(npoints), 2 * npoints - 3, dtype)


@lru_cache(maxsize=None)
def gauss_legendre(npoints: int, dtype=float) -> QuadratureRule1D:
    """Gauss-Legendre rule on [-1, 1], exact up to degree 2 * npoints - 1."""
    if npoints < 1:
        raise ValueError(f"Gauss-Legendre needs at least 1 point, got {npoints}")
    return _rule(*_legendre_ext(npoints), 2 * npoints - 1, dtype)


def gauss_legendre_for_degree(degree: int, dtype=float) -> QuadratureRule1D:
    return gauss_legendre(max(1, (degree + 2) // 2), dtype)


def lagrange_matrix(nodes, points) -> np.ndarray:
    """Values at ``points`` of the Lagrange basis on ``nodes``; shape (npoints, nnodes)."""
    nodes = np.asarray(nodes)
    points = np.asarray(points)
    out = np.ones((points.size, nodes.size), dtype=np.result_type(nodes, points, float))
    for a in range(nodes.size):
        for b in range(nodes.size):
            if a != b:
                out[:, a] *= (points - nodes[b]) / (nodes[a] - nodes[b])
    return out


def integrate_edge_trace(p0, p1, trace, weight=None, degree: int | None = None) -> float:
    """Integral over the segment p0 -> p1 of trace * weight.

    ``trace`` is either an array of values at the (len+1)-point Gauss-Lobatto
    nodes mapped to the edge (a polynomial of degree len - 1), or a callable of
    the edge parameter t in [-1, 1].  ``weight`` is a callable of t (default 1).
    ``degree`` bounds the degree of the integrand; Gauss-Legendre with
    ceil((degree + 1) / 2) points is used.
    """
    length = float(np.hypot(*(np.asarray(p1, float) - np.asarray(p0, float))))
    if callable(trace):
        trace_fn = trace
        if degree is None:
            raise ValueError("degree is required for callable traces")
    else:
        vals = np.asarray(trace, dtype=float)
        lob = gauss_lobatto(vals.size)
        trace_fn = lambda t: lagrange_matrix(lob.nodes, t) @ vals  # noqa: E731
        if degree is None:
            degree = vals.size - 1
    rule = gauss_legendre(max(1, -(-(degree + 1) // 2)))
    t = np.asarray(rule.nodes)
    w = np.ones_like(t) if weight is None else np.asarray(weight(t), dtype=float)
    return 0.5 * length * float(np.sum(rule.weights * trace_fn(t) * w))


# --------------------------------------------------------------------------
# polygons


@dataclass(frozen=True)
class PolygonRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def _duffy_reference(degree: int, dtype=float) -> tuple[np.ndarray, np.ndarray]:
    # collapsed tensor Gauss rule on the reference triangle (0,0),(1,0),(0,1)
    # u carries the Jacobian factor, so it needs one extra degree
    gu = gauss_legendre_for_degree(degree + 1, dtype)
    gv = gauss_legendre_for_degree(degree, dtype)
    u = (gu.nodes + 1) / 2
    v = (gv.nodes + 1) / 2
    wu = gu.weights / 2
    wv = gv.weights / 2
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv) * uu
    lam1 = (uu * (1 - vv)).ravel()
    lam2 = (uu * vv).ravel()
    return np.column_stack([lam1, lam2]), ww.ravel()


def triangle_rule(a, b, c, degree: int, dtype=float) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = (np.asarray(p, dtype=dtype) for p in (a, b, c))
    lam, w = _duffy_reference(degree, np.dtype(dtype).type)
    jac = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    pts = a + lam[:, :1] * (b - a) + lam[:, 1:] * (c - a)
    return pts, w * abs(jac)


def signed_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area_centroid(poly) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    if a == 0:
        raise DegenerateElementError("zero-area polygon")
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def _centroid_in_kernel(poly, c) -> bool:
    nxt = np.roll(poly, -1, axis=0)
    e = nxt - poly
    r = c - poly
    cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
    return bool(np.all(cross > 1e-14 * np.max(np.abs(e)) ** 2))


def ear_clip(poly) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping."""
    poly = np.asarray(poly, dtype=float)
    idx = list(range(len(poly)))
    tris = []

    def is_convex(i, j, k):
        a, b, c = poly[i], poly[j], poly[k]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0

    def inside(p, a, b, c):
        def s(u, v, w):
            return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
        return s(a, b, p) >= 0 and s(b, c, p) >= 0 and s(c, a, p) >= 0

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise DegenerateElementError("ear clipping failed")
        n = len(idx)
        for t in range(n):
            i, j, k = idx[t - 1], idx[t], idx[(t + 1) % n]
            if not is_convex(i, j, k):
                continue
            if any(inside(poly[m], poly[i], poly[j], poly[k]) for m in idx if m not in (i, j, k)):
                continue
            tris.append((i, j, k))
            idx.pop(t)
            break
        else:
            raise DegenerateElementError("no ear found; polygon not simple")
    tris.append(tuple(idx))
    return tris


def polygon_rule(poly, degree: int, centroid=None, dtype=float) -> PolygonRule:
    """Quadrature on a CCW polygon, exact for polynomials of total degree <= ``degree``.

    Fans from the centroid when the element is star-shaped with respect to it,
    otherwise falls back to ear clipping.  ``dtype`` selects the working
    precision of the returned points and weights.
    """
    poly = np.asarray(poly, dtype=float)
    if signed_area(poly) <= 0:
        raise DegenerateElementError("polygon must be counterclockwise with positive area")
    c = area_centroid(poly) if centroid is None else np.asarray(centroid, dtype=float)
    pts, wts = [], []
    if _centroid_in_kernel(poly, c):
        nxt = np.roll(poly, -1, axis=0)
        for a, b in zip(poly, nxt):
            p, w = triangle_rule(c, a, b, degree, dtype)
            pts.append(p)
            wts.append(w)
    else:
        for i, j, k in ear_clip(poly):
            p, w = triangle_rule(poly[i], poly[j], poly[k], degree, dtype)
            pts.append(p)
            wts.append(w)
    return PolygonRule(np.vstack(pts), np.concatenate(wts), degree)
