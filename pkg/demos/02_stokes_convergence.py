"""Stokes flow on three mesh families, and what "divergence free" means here.

The manufactured Stokes solution is solved in the strain form on square,
perturbed hexagonal and Voronoi meshes.  We print the error table with its
observed rates and check that the discrete velocity has no divergence at all,
not merely a small one.

Run:  python demos/02_stokes_convergence.py          (about half a minute)
"""

from vemix.harness import CSV_COLUMNS, StudyConfig, manufactured_case, run_study, solve_case
from vemix.mesh import generate_mesh

k = 2
for family in ("quad", "hexa", "voro"):
    rows = run_study(StudyConfig("stokes", "eps", family, (4, 8, 16), (k,), seed=0))[k]
    print(f"\n{family}, k = {k}")
    print("  " + "".join(f"{c:>10}" for c in CSV_COLUMNS[1:]))
    for r in rows:
        cells = [r.n, r.h, r.gndof, r.err_u_h1, r.err_u_l2, r.err_p_l2, r.rate_h1, r.rate_l2, r.rate_p]
        print("  " + "".join(" " * 10 if v is None else f"{v:>10.4g}" for v in cells))

# The pressure space contains the divergence of every discrete velocity, so
# the incompressibility constraint holds exactly, element by element.
case = manufactured_case("stokes_s51", "eps", 3)
sol = solve_case(case, generate_mesh("voro", 8, seed=1), 3)
print(f"\nvoro n=8, k=3: sum over elements of ||div u_h||^2 = {sol.result.div_norm_sq:.1e}")
print(f"               mean pressure constraint sigma . rho = {sol.result.pressure_integral:.1e}")
