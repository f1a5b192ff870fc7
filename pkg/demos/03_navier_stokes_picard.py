"""Navier-Stokes by Picard iteration.

Each Picard step freezes the convecting velocity at the previous iterate and
solves an Oseen problem; the iteration starts from the Stokes solution.  We
watch the increments shrink, then refine the mesh and read off the rates.

Run:  python demos/03_navier_stokes_picard.py
"""

import logging

from vemix.harness import StudyConfig, manufactured_case, run_study
from vemix.mesh import generate_mesh
from vemix.system import solve_navier_stokes

case = manufactured_case("navier_stokes_s53", "grad", 2)
mesh = generate_mesh("voro", 8, seed=2)
result = solve_navier_stokes(mesh, 2, case.f, case.u, tol=1e-10)
print("Picard increments on voro n=8, k=2:")
for i, inc in enumerate(result.history, 1):
    print(f"  step {i}: ||chi_m - chi_(m-1)|| = {inc:.2e}")

logging.basicConfig(level=logging.WARNING)
rows = run_study(StudyConfig("navier-stokes", "grad", "quad", (4, 8, 16), (2,)))[2]
print("\nquad refinement, k = 2")
for r in rows:
    rates = "" if r.rate_h1 is None else f"   rates {r.rate_h1:.2f} / {r.rate_l2:.2f} / {r.rate_p:.2f}"
    print(f"  n={r.n:3d}  H1 {r.err_u_h1:.2e}  L2 {r.err_u_l2:.2e}  p {r.err_p_l2:.2e}  "
          f"({r.iterations} Picard steps){rates}")
