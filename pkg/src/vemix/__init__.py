"""High-order mixed virtual elements for Stokes, Darcy and Navier-Stokes on polygonal meshes."""

from .harness import manufactured_case, run_study, solve_case
from .mesh import generate_mesh, read_mesh, write_mesh
from .projectors import ElementProjectors
from .space import LocalSpace, build_global_map
from .system import assemble, solve_linear, solve_navier_stokes

__all__ = [
    "ElementProjectors",
    "LocalSpace",
    "assemble",
    "build_global_map",
    "generate_mesh",
    "manufactured_case",
    "read_mesh",
    "run_study",
    "solve_case",
    "solve_linear",
    "solve_navier_stokes",
    "write_mesh",
]

__version__ = "0.1.0"
