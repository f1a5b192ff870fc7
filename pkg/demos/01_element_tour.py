"""A walk through one polygonal element.

We build a Voronoi mesh, pick an element, and look at what the virtual
element space knows about it: its degrees of freedom, its projections, and
how well those projections reproduce polynomials as the degree grows.

Run:  python demos/01_element_tour.py
"""

import numpy as np

from vemix import poly
from vemix.mesh import check_regularity, generate_mesh
from vemix.poly import npoly
from vemix.projectors import ElementProjectors
from vemix.space import LocalSpace

mesh = generate_mesh("voro", 6, seed=3)
print(f"Voronoi mesh: {mesh.n_elements} elements, {mesh.n_vertices} vertices")

element = int(np.argmax([g.n_vertices for g in mesh.geometries]))
geom = mesh.geometries[element]
reg = check_regularity(mesh)[element]
print(f"element {element}: {geom.n_vertices} vertices, area {geom.area:.4f}, diameter {geom.diameter:.4f}")
print(f"  star-shapedness ratio {reg.rho_star_shaped:.3f}, vertex separation ratio {reg.rho_edge:.3f}")

# The degrees of freedom: point values on the boundary, then interior moments.
k = 3
space = LocalSpace(k, geom)
print(f"\nk = {k}: {space.ndof} local DoFs "
      f"({space.n_boundary} boundary values, {space.n_mperp} m-perp moments, {space.n_div} divergence moments)")

# The rigid rotation x_perp = (y - yE, -(x - xE)) is a degree-1 polynomial, so
# every projection must hand it back untouched, and its strain must vanish.
rot = np.zeros(2 * npoly(k))
rot[2], rot[npoly(k) + 1] = geom.diameter, -geom.diameter
dofs = space.interpolate_polynomial(rot)
proj = ElementProjectors(space)
print("  nabla projection of x_perp  :", np.round(np.asarray(proj.nabla_k @ dofs, dtype=float)[[2, npoly(k) + 1]], 12))
print("  |strain projection of x_perp|:", f"{np.abs(np.asarray(proj.zero_km1_eps @ dofs, dtype=float)).max():.1e}")

# Reproduction of random polynomials, degree by degree.  The projector
# entries grow quickly with k, which is why they are kept in extended precision.
print("\nreproduction of 20 random vector polynomials")
rng = np.random.default_rng(0)
for k in range(2, 7):
    pr = ElementProjectors(LocalSpace(k, geom))
    C = rng.standard_normal((2 * npoly(k), 20))
    out = np.asarray(pr.zero_k @ pr.space.interpolate_polynomial(C), dtype=float)
    err = (np.abs(out - C).max(axis=0) / np.abs(C).max(axis=0)).max()
    size = np.abs(np.asarray(pr.zero_k, dtype=float)).max()
    print(f"  k = {k}: max relative error {err:.1e}, largest projector entry {size:.1e}")

# The grad/perp split behind the L2 projection: every vector polynomial is a
# gradient plus m_perp times a scalar, and the split is exact.
rot1 = geom.diameter * np.array([0, 0, 1.0, 0, -1.0, 0])
dec = poly.decompose_vector_polynomial(poly.VectorPolynomial(1, rot1), geom.frame)
print(f"\nx_perp = grad({np.round(dec.grad_part.coeffs, 12)}) + m_perp * {dec.perp_part.coeffs}")
