"""Projection matrices: polynomial reproduction, rigid motions and moment preservation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import projector_targets, relative_error
from oracles import polygon_moment
from vemix import poly
from vemix.mesh import generate_mesh, polygon_geometry
from vemix.poly import npoly
from vemix.projectors import (KINDS, ElementProjectors, divergence_matrix, dump_csv, pi_eps_matrix,
                              pi_nabla_matrix, pi_zero_eps_matrix, pi_zero_grad_matrix, pi_zero_matrix)
from vemix.space import LocalSpace

CENTRED_SQUARE = polygon_geometry([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
MESHES = {fam: generate_mesh(fam, 4, seed=7) for fam in ("quad", "hexa", "voro")}


def _projectors(family, element, k):
    return ElementProjectors(LocalSpace(k, MESHES[family].geometries[element]))


def _rotation(k, h):
    # x_perp = (y - yE, -(x - xE)) in [M_k]^2 coefficients
    c = np.zeros(2 * npoly(k))
    c[2] = h
    c[npoly(k) + 1] = -h
    return c


@settings(max_examples=25, deadline=None)
@given(family=st.sampled_from(sorted(MESHES)), element=st.integers(0, 15), k=st.integers(2, 5),
       seed=st.integers(0, 2**31))
def test_polynomial_reproduction(family, element, k, seed):
    pr = _projectors(family, element, k)
    C = np.random.default_rng(seed).standard_normal((2 * npoly(k), 4))
    D = pr.space.interpolate_polynomial(C)
    for kind, target in projector_targets(k, pr.space.frame.diameter, C).items():
        assert relative_error(getattr(pr, kind) @ D, target) <= 1e-11, kind


def test_divergence_examples():
    pr = ElementProjectors(LocalSpace(2, CENTRED_SQUARE))
    d = pr.space.interpolate(lambda p: p, lambda p: np.full(len(p), 2.0))
    np.testing.assert_allclose(pr.divergence @ d, [2, 0, 0], atol=1e-14)
    h = CENTRED_SQUARE.diameter
    d = pr.space.interpolate(lambda p: np.column_stack([p[:, 0] ** 2, 0 * p[:, 0]]), lambda p: 2 * p[:, 0])
    np.testing.assert_allclose(pr.divergence @ d, [0, 2 * h, 0], atol=1e-14)
    d = pr.space.interpolate(lambda p: np.tile([3.0, -1.0], (len(p), 1)), lambda p: np.zeros(len(p)))
    np.testing.assert_allclose(pr.divergence @ d, 0, atol=1e-14)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_rigid_motions(k):
    pr = _projectors("voro", 6, k)
    h = pr.space.frame.diameter
    rot = _rotation(k, h)
    rigid = rot.copy()
    rigid[0] += 0.3
    rigid[npoly(k)] -= 1.2
    d_rot = pr.space.interpolate_polynomial(rot)
    np.testing.assert_allclose(pr.nabla_k @ d_rot, rot, atol=1e-12)
    np.testing.assert_allclose(pr.eps_k @ pr.space.interpolate_polynomial(rigid), rigid, atol=1e-12)
    np.testing.assert_allclose(pr.zero_km1_eps @ d_rot, 0, atol=1e-12)
    grad = (pr.zero_km1_grad @ d_rot).reshape(4, npoly(k - 1))
    np.testing.assert_allclose(grad[:, 0], [0, 1, -1, 0], atol=1e-12)
    np.testing.assert_allclose(grad[:, 1:], 0, atol=1e-12)


@pytest.mark.parametrize("kind", ["nabla_k", "eps_k", "zero_k"])
def test_constants_and_zero(kind):
    pr = _projectors("hexa", 3, 3)
    c = np.zeros(2 * npoly(3))
    c[0], c[npoly(3)] = 0.7, -2.0
    np.testing.assert_allclose(getattr(pr, kind) @ pr.space.interpolate_polynomial(c), c, atol=1e-13)
    assert not np.any(getattr(pr, kind) @ np.zeros(pr.space.ndof))
    np.testing.assert_allclose(pr.zero_km1_grad @ pr.space.interpolate_polynomial(c), 0, atol=1e-12)


def test_symmetric_strain_output():
    pr = _projectors("voro", 1, 4)
    out = (pr.zero_km1_eps @ np.random.default_rng(0).standard_normal(pr.space.ndof)).reshape(4, -1)
    np.testing.assert_array_equal(out[1], out[2])


@pytest.mark.parametrize("k", [3, 4, 5])
def test_zero_projection_preserves_perp_moments(k):
    # holds for every DoF vector: m_perp m_i (|i| <= k-3) lies in the target space
    pr = _projectors("voro", 9, k)
    sp, geom = pr.space, pr.space.geometry
    d = np.random.default_rng(k).standard_normal(sp.ndof)
    c = (pr.zero_k @ d).reshape(2, npoly(k))
    ctr, h = geom.centroid, geom.diameter
    idx = poly.multi_indices(k)
    for i, (a, b) in enumerate(poly.multi_indices(k - 3)):
        # (v . m_perp) m_i = (v_x m01 - v_y m10) m_i
        total = sum(cx * polygon_moment(geom.vertices, p + a, q + b + 1, ctr, h)
                    - cy * polygon_moment(geom.vertices, p + a + 1, q + b, ctr, h)
                    for (p, q), cx, cy in zip(idx, c[0], c[1]))
        assert total / geom.area == pytest.approx(d[sp.mperp_slice][i], rel=1e-10, abs=1e-11)


def test_projector_matrix_wrappers(tmp_path):
    sp = LocalSpace(3, MESHES["quad"].geometries[0])
    pr = ElementProjectors(sp)
    for fn, kind in zip((divergence_matrix, pi_nabla_matrix, pi_eps_matrix, pi_zero_matrix,
                         pi_zero_grad_matrix, pi_zero_eps_matrix), KINDS):
        pm = fn(sp)
        assert pm.kind == kind
        np.testing.assert_allclose(pm.matrix, getattr(pr, kind), atol=1e-13)
    path = tmp_path / "proj.csv"
    dump_csv(pr, 0, path)
    assert path.read_text().strip()
