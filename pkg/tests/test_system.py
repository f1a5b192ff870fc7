"""Local forms, assembly, the linear saddle-point solve and Picard iteration."""

import numpy as np
import pytest
import scipy.sparse as sps
import sympy as sy

from oracles import polygon_moment
from vemix import poly
from vemix.harness import manufactured_case
from vemix.mesh import PolygonalMesh, generate_mesh, polygon_geometry
from vemix.poly import npoly
from vemix.projectors import ElementProjectors
from vemix.space import LocalSpace, build_global_map
from vemix.system import (MissingProjectorError, PicardNotConvergedError, assemble, convection_matrix,
                          dump_matrices, local_b_matrix, local_convection, local_loads, local_sigma,
                          local_stiffness, solve_linear, solve_navier_stokes)

CENTRED_SQUARE = polygon_geometry([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
VORO = generate_mesh("voro", 4, seed=11)


def _gram(geom, n):
    """Exact scalar Gram matrix of the scaled monomials of degree <= n."""
    idx = poly.multi_indices(n)
    c, h = geom.centroid, geom.diameter
    return np.array([[polygon_moment(geom.vertices, a + p, b + q, c, h) for p, q in idx] for a, b in idx])


def _block(g, copies):
    return np.kron(np.eye(copies), g)


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("element", [0, 7])
def test_consistency_on_polynomials(k, element):
    geom = VORO.geometries[element]
    pr = ElementProjectors(LocalSpace(k, geom))
    h = geom.diameter
    C = np.random.default_rng(k).standard_normal((2 * npoly(k), 3))
    X = pr.space.interpolate_polynomial(C)
    exact = {
        "zero": C.T @ _block(_gram(geom, k), 2) @ C,
        "grad": (poly.vector_grad_matrix(k, h) @ C).T @ _block(_gram(geom, k - 1), 4) @ (poly.vector_grad_matrix(k, h) @ C),
        "eps": (poly.vector_eps_matrix(k, h) @ C).T @ _block(_gram(geom, k - 1), 4) @ (poly.vector_eps_matrix(k, h) @ C),
    }
    for kind, ref in exact.items():
        got = X.T @ local_stiffness(kind, pr) @ X
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("kind, dim", [("zero", 0), ("grad", 2), ("eps", 3)])
def test_kernel_dimension(k, kind, dim):
    for geom in VORO.geometries[:4]:
        K = local_stiffness(kind, ElementProjectors(LocalSpace(k, geom)))
        np.testing.assert_allclose(K, K.T, atol=1e-14 * np.abs(K).max())
        ev = np.linalg.eigvalsh(K)
        assert np.sum(np.abs(ev) < 1e-12 * np.abs(ev).max()) == dim


def test_kernels_contain_constants_and_rigid_motions():
    k = 3
    pr = ElementProjectors(LocalSpace(k, VORO.geometries[2]))
    h = pr.space.frame.diameter
    const = pr.space.interpolate_polynomial(np.r_[1.0, np.zeros(npoly(k) - 1), 2.0, np.zeros(npoly(k) - 1)])
    rot = np.zeros(2 * npoly(k))
    rot[2], rot[npoly(k) + 1] = h, -h
    assert np.abs(local_stiffness("grad", pr) @ const).max() < 1e-12
    assert np.abs(local_stiffness("eps", pr) @ pr.space.interpolate_polynomial(rot)).max() < 1e-12


def test_stabilization_is_dof_dot_product():
    k = 3
    pr = ElementProjectors(LocalSpace(k, VORO.geometries[4]))
    h, sp = pr.space.frame.diameter, pr.space
    op = poly.vector_grad_matrix(k, h)
    mass = op.T @ _block(_gram(sp.geometry, k - 1), 4) @ op
    consistency = pr.nabla_k.T @ mass @ pr.nabla_k
    rem = np.eye(sp.ndof) - sp.monomial_dofs @ pr.nabla_k
    # S(phi_i, phi_j) = delta_ij, so the stabilization is rem^T I rem
    np.testing.assert_allclose(local_stiffness("grad", pr) - consistency, rem.T @ rem, atol=1e-9)


def test_b_matrix_examples():
    pr = ElementProjectors(LocalSpace(3, CENTRED_SQUARE))
    sp = pr.space
    B = local_b_matrix(pr)
    np.testing.assert_array_equal(B[1:, sp.div_slice], np.eye(sp.n_div))
    np.testing.assert_array_equal(B[:, sp.mperp_slice], 0)
    chi = sp.interpolate(lambda p: p, lambda p: np.full(len(p), 2.0))
    assert (B @ chi)[0] == pytest.approx(2 * CENTRED_SQUARE.diameter, rel=1e-14)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_b_matches_divergence_moments(k):
    for geom in VORO.geometries[:5]:
        pr = ElementProjectors(LocalSpace(k, geom))
        chi = np.random.default_rng(1).standard_normal(pr.space.ndof)
        div = pr.divergence @ chi
        ref = (geom.diameter / geom.area) * _gram(geom, k - 1) @ div
        np.testing.assert_allclose(local_b_matrix(pr) @ chi, ref, atol=1e-12 * np.abs(ref).max())


def test_sigma_and_load_examples():
    pr = ElementProjectors(LocalSpace(2, CENTRED_SQUARE))
    h = CENTRED_SQUARE.diameter
    sigma = local_sigma(pr.space)
    assert sigma[0] == h
    assert abs(sigma[1]) < 1e-15
    f_E, g_E = local_loads(None, None, pr)
    assert not f_E.any() and not g_E.any()
    zero = lambda p: np.zeros((len(p), 2))  # noqa: E731
    assert not local_loads(zero, None, pr)[0].any()
    _, g_E = local_loads(None, lambda p: np.ones(len(p)), pr)
    assert g_E[0] == pytest.approx(h)
    _, g_E = local_loads(None, lambda p: p[:, 0] / h, pr)
    assert abs(g_E[0]) < 1e-15


def test_convection_against_symbolic_integral():
    k = 2
    geom = VORO.geometries[3]
    pr = ElementProjectors(LocalSpace(k, geom))
    x, y = sy.symbols("x y")
    p = sy.Matrix([x**2, x * y])
    w = sy.Matrix([1 + y, 2 - x])
    q = sy.Matrix([y, x])
    integrand = sy.Poly(sy.expand(((p.jacobian([x, y]) * w).T * q)[0]), x, y)
    exact = sum(float(c) * polygon_moment(geom.vertices, a, b) for (a, b), c in integrand.terms())

    def dofs(expr):
        fn = sy.lambdify((x, y), list(expr), "numpy")
        div = sy.lambdify((x, y), sy.diff(expr[0], x) + sy.diff(expr[1], y), "numpy")
        return pr.space.interpolate(lambda pts: np.column_stack(np.broadcast_arrays(*fn(pts[:, 0], pts[:, 1]))),
                                    lambda pts: np.broadcast_to(div(pts[:, 0], pts[:, 1]), (len(pts),)))

    C = local_convection(dofs(w), pr)
    assert dofs(q) @ C @ dofs(p) == pytest.approx(exact, rel=1e-10)
    assert not local_convection(np.zeros(pr.space.ndof), pr).any()
    const = pr.space.interpolate_polynomial(np.r_[1.0, np.zeros(npoly(k) - 1), -1.0, np.zeros(npoly(k) - 1)])
    assert np.abs(C @ const).max() < 1e-12


def test_missing_projectors():
    with pytest.raises(MissingProjectorError):
        local_stiffness("grad", None)
    with pytest.raises(ValueError):
        assemble(generate_mesh("quad", 2), 2, "curl")


@pytest.mark.parametrize("form", ["zero", "grad", "eps"])
def test_assembled_matrix_symmetric(form):
    s = assemble(generate_mesh("hexa", 4, seed=1), 3, form)
    A = s.matrix
    assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
    assert s.size == A.shape[0] == s.n_velocity + 1 + s.n_pressure


def test_picard_matrix_is_symmetric_part_plus_convection():
    s = assemble(generate_mesh("quad", 3), 2, "grad")
    chi = np.random.default_rng(0).standard_normal(s.n_velocity)
    C = convection_matrix(s, chi)
    diff = (s.block_matrix(s.K + C) - s.matrix).tocsr()
    nv = s.n_velocity
    assert abs(diff[:nv, :nv] - C).max() <= 1e-14 * abs(s.K).max()
    assert abs(diff[nv:, :]).max() == 0 and abs(diff[:, nv:]).max() == 0


@pytest.mark.parametrize("family", ["quad", "voro"])
def test_stokes_patch_test(family):
    k = 3
    case = manufactured_case("polynomial_patch", "eps", k)
    mesh = generate_mesh(family, 3, seed=2)
    res = solve_linear(assemble(mesh, k, "eps", case.f, None, case.u))
    exact = case.u(build_nodes(mesh, k)).ravel()
    np.testing.assert_allclose(res.chi[: exact.size], exact, atol=1e-9)
    assert res.div_norm_sq <= 1e-20
    assert abs(res.pressure_integral) < 1e-12


def build_nodes(mesh, k):
    return build_global_map(mesh, k).node_coords


def test_divergence_free_with_zero_g():
    case = manufactured_case("stokes_s51", "eps", 2)
    res = solve_linear(assemble(generate_mesh("voro", 5, seed=0), 2, "eps", case.f, None, case.u))
    assert res.div_norm_sq <= 1e-20
    assert res.residual < 1e-10


def test_navier_stokes_trivial_data():
    res = solve_navier_stokes(generate_mesh("quad", 3), 2)
    assert res.iterations == 1
    assert not res.chi.any() and not res.rho.any()


def _small_data_loads(amplitude):
    # u = a curl(psi), p = 0; f balances the full convective operator
    x, y = sy.symbols("x y")
    psi = amplitude * (x**2 * y + x * y**2 - x**3 / 3)
    u = sy.Matrix([sy.diff(psi, y), -sy.diff(psi, x)])
    J = u.jacobian([x, y])
    f = -sy.Matrix([sy.diff(u[i], x, 2) + sy.diff(u[i], y, 2) for i in range(2)]) + J * u
    fu = sy.lambdify((x, y), list(u), "numpy")
    ff = sy.lambdify((x, y), list(f), "numpy")

    def wrap(fn):
        return lambda p: np.column_stack(np.broadcast_arrays(*fn(p[:, 0], p[:, 1])))
    return wrap(ff), wrap(fu)


def test_navier_stokes_small_data_converges_fast():
    f, u = _small_data_loads(1e-2)
    res = solve_navier_stokes(generate_mesh("voro", 4, seed=1), 2, f, u, tol=1e-10)
    assert res.converged and res.iterations <= 10
    # quadratic velocity, zero pressure: the scheme reproduces it
    nodes = build_nodes(generate_mesh("voro", 4, seed=1), 2)
    np.testing.assert_allclose(res.chi[: 2 * len(nodes)], u(nodes).ravel(), atol=1e-10)


def test_picard_failure_reports_history():
    f, u = _small_data_loads(1.0)
    with pytest.raises(PicardNotConvergedError) as info:
        solve_navier_stokes(generate_mesh("quad", 3), 2, f, u, tol=1e-30, max_iter=2)
    assert len(info.value.history) == 2
    assert info.value.result is not None


def test_matrix_export(tmp_path):
    s = assemble(generate_mesh("quad", 2), 2, "eps")
    paths = dump_matrices(s, tmp_path / "out")
    assert len(paths) == 4
    lines = (tmp_path / "out" / "system.coo").read_text().splitlines()
    data = np.loadtxt(lines[1:])
    A = sps.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=s.matrix.shape)
    assert abs(A - s.matrix).max() == 0
