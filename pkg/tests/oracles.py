"""Independent reference values used by the tests.

Nothing here calls into vemix: polygon moments come from the closed-form
simplex formula, and 1D moments from the antiderivative.
"""

from functools import lru_cache
from math import comb, factorial

import numpy as np


def monomial_integral_1d(d: int) -> float:
    """Exact integral of t^d over [-1, 1]."""
    return 0.0 if d % 2 else 2.0 / (d + 1)


@lru_cache(maxsize=None)
def _trinomials(n: int):
    return [(i, j, n - i - j, comb(n, i) * comb(n - i, j)) for i in range(n + 1) for j in range(n + 1 - i)]


def triangle_moment(tri, a: int, b: int) -> float:
    """Signed integral of x^a y^b over the triangle tri (3x2), exactly.

    x and y are linear in the barycentric coordinates, so the monomial
    expands into barycentric monomials, each integrated by
    int_T l1^i l2^j l3^k = 2|T| i! j! k! / (i + j + k + 2)!.
    """
    tri = np.asarray(tri, dtype=float)
    (x0, y0), (x1, y1), (x2, y2) = tri
    area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    total = 0.0
    for i, j, k, cx in _trinomials(a):
        px = cx * x0**i * x1**j * x2**k
        for p, q, r, cy in _trinomials(b):
            g = (i + p, j + q, k + r)
            total += px * cy * y0**p * y1**q * y2**r * factorial(g[0]) * factorial(g[1]) * factorial(g[2])
    return 2.0 * area * total / factorial(a + b + 2)


def polygon_moment(vertices, a: int, b: int, centre=(0.0, 0.0), h: float = 1.0) -> float:
    """Integral over a simple polygon of ((x-cx)/h)^a ((y-cy)/h)^b.

    Uses a signed fan from the origin of the shifted, scaled coordinates,
    which is valid for any simple counterclockwise polygon.
    """
    v = (np.asarray(vertices, dtype=float) - np.asarray(centre, dtype=float)) / h
    o = np.zeros(2)
    s = sum(triangle_moment([o, v[i], v[(i + 1) % len(v)]], a, b) for i in range(len(v)))
    return s * h * h
