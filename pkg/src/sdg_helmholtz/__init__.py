"""Staggered discontinuous Galerkin solver for the 2-D Helmholtz equation with impedance
boundary conditions on polygonal meshes."""

from .analytic import ManufacturedSolution, bessel_j, bessel_j_prime, example1, example2
from .assembly import (
    AssembledOperators,
    ComplexSparseSystem,
    assemble_loads,
    assemble_operators,
    build_elliptic_projection_system,
    build_helmholtz_system,
)
from .harness import StudyConfig, run_convergence, run_solve
from .mesh import (
    MeshError,
    StaggeredMesh,
    build_polygonal_mesh,
    build_square_mesh,
    perturb_mesh,
    read_mesh,
    validate_regularity,
    write_mesh,
)
from .solver import SolveReport, SolverError, solve_condensed, solve_direct
from .spaces import FieldVector, build_scalar_space, build_vector_space, evaluate_field, interpolate
from .verify import ConvergenceRecord, ErrorReport, compute_rates, l2_error, project_Ih, project_Jh

__version__ = "0.1.0"
