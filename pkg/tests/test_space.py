"""Local DoF layout, interpolation and global numbering."""

import numpy as np
import pytest

from oracles import polygon_moment
from vemix import poly
from vemix.harness import manufactured_case
from vemix.mesh import PolygonalMesh, generate_mesh, polygon_geometry
from vemix.poly import npoly
from vemix.space import LocalSpace, UnsupportedDegreeError, build_global_map, local_ndof

SQUARE = polygon_geometry([(0, 0), (1, 0), (1, 1), (0, 1)])
CENTRED_SQUARE = polygon_geometry([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
TRIANGLE = polygon_geometry([(0, 0), (1, 0), (0, 1)])


@pytest.mark.parametrize("k, geom, expected", [(2, SQUARE, 18), (3, SQUARE, 30), (2, TRIANGLE, 14)])
def test_local_dof_counts(k, geom, expected):
    sp = LocalSpace(k, geom)
    assert sp.ndof == expected == local_ndof(k, geom.n_vertices)
    assert sp.div_slice.stop == sp.ndof


def test_degree_below_two_rejected():
    with pytest.raises(UnsupportedDegreeError):
        LocalSpace(1, SQUARE)


def test_interpolate_constant():
    geom = generate_mesh("voro", 4, seed=1).geometries[3]
    k = 4
    sp = LocalSpace(k, geom)
    d = sp.interpolate(lambda p: np.tile([1.0, 0.0], (len(p), 1)), lambda p: np.zeros(len(p)))
    np.testing.assert_array_equal(d[0: sp.n_boundary: 2], 1.0)
    np.testing.assert_array_equal(d[1: sp.n_boundary: 2], 0.0)
    np.testing.assert_array_equal(d[sp.div_slice], 0.0)
    # (1/|E|) int (1,0).(m01, -m10) m_i = (1/|E|) int m01 m_i
    c, h = geom.centroid, geom.diameter
    ref = [polygon_moment(geom.vertices, a, b + 1, c, h) / geom.area for a, b in poly.multi_indices(k - 3)]
    np.testing.assert_allclose(d[sp.mperp_slice], ref, atol=1e-14)


def test_interpolate_linear_field_on_centred_square():
    sp = LocalSpace(2, CENTRED_SQUARE)
    d = sp.interpolate(lambda p: p, lambda p: np.full(len(p), 2.0))
    # l = 2 divergence moment: (h/|E|) int 2 m10 = 0 by symmetry
    assert abs(d[sp.div_slice][0]) < 1e-15


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_interpolate_agrees_with_monomial_dofs(k):
    geom = generate_mesh("hexa", 4, seed=2).geometries[5]
    sp = LocalSpace(k, geom)
    rng = np.random.default_rng(k)
    c = rng.standard_normal(2 * npoly(k))
    div_c = poly.vector_div_matrix(k, geom.diameter) @ c
    d1 = sp.interpolate(lambda p: poly.eval_vector_poly(c, k, geom.frame, p),
                        lambda p: poly.eval_poly(div_c, k - 1, geom.frame, p))
    d2 = sp.interpolate_polynomial(c)
    np.testing.assert_allclose(d1, d2, rtol=1e-11, atol=1e-11 * np.abs(d2).max())


def test_interpolation_of_smooth_field_is_deterministic():
    case = manufactured_case("stokes_s51", "eps", 3)
    geom = generate_mesh("voro", 4, seed=0).geometries[2]
    sp = LocalSpace(3, geom)
    a, b = sp.interpolate(case.u, case.div_u), sp.interpolate(case.u, case.div_u)
    assert np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, b)


def test_global_count_quad2():
    m = build_global_map(generate_mesh("quad", 2), 2)
    assert m.gndof == 50
    used = np.unique(np.concatenate(m.local_to_global))
    np.testing.assert_array_equal(used, np.arange(50))


def test_single_element_and_shared_edge():
    one = PolygonalMesh(np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float), [np.arange(4)])
    assert build_global_map(one, 2).gndof == LocalSpace(2, SQUARE).ndof
    two = PolygonalMesh(np.array([(0, 0), (1, 0), (2, 0), (2, 1), (1, 1), (0, 1)], float),
                        [np.array([0, 1, 4, 5]), np.array([1, 2, 3, 4])])
    assert build_global_map(two, 2).gndof == 30


@pytest.mark.parametrize("k", [2, 3, 4])
def test_shared_dofs_sit_at_the_same_points(k):
    mesh = generate_mesh("voro", 4, seed=1)
    dm = build_global_map(mesh, k)
    for e, geom in enumerate(mesh.geometries):
        sp = LocalSpace(k, geom)
        g = dm.local_to_global[e][0: sp.n_boundary: 2] // 2
        np.testing.assert_allclose(dm.node_coords[g], sp.nodes.astype(float), atol=1e-14)
