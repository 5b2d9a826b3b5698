"""Evolving isoparametric finite elements on a harmonically moving domain."""

from .ref_elem import ReferenceElement, QuadratureRule, quadrature, shape_values, shape_gradients
from .mesh import (
    MeshTopology,
    generate_disk_mesh,
    generate_ball_mesh,
    mesh_size,
    element_geometry,
    MeshDegenerationError,
)
from .assembly import assemble_mass, assemble_stiffness, assemble_load, extract_blocks, BlockPartition
from .linsolve import SpdSolver, factorize, SolverError
from .harmonic import trace_boundary_velocity, solve_harmonic_extension
from .evolution import bdf_coefficients, BdfHistory, rk4_reference_positions
from .analysis import ErrorTable, eoc, error_vs_exact, read_error_csv
from .experiments import ExperimentConfig, derive_ex3_data, run_experiment

__version__ = "0.1.0"
