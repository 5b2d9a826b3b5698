"""Discrete harmonic extension of a prescribed boundary velocity.

Solves -A22(x) v_int = A21(x) v_bnd per component, reusing a single
factorization of A22 for all spatial components.
"""

from __future__ import annotations

import numpy as np

from .assembly import assemble_stiffness, extract_blocks
from .linsolve import SpdSolver, factorize
from .mesh import MeshTopology, node_coordinates, split_components

# Fault-injection hook for the self-check suites: when True, the coupling
# block enters the right-hand side with the wrong sign, which must be caught
# by the affine-reproduction check.
FLIP_COUPLING_SIGN = False


def trace_boundary_velocity(field, topology: MeshTopology, x: np.ndarray,
                            t: float) -> np.ndarray:
    """Nodal vector (arity dim) holding the boundary velocity at boundary nodes.

    `field(points, t)` maps an (m, dim) array to (m, dim) velocities.
    Interior entries are zero (the extension choice w_int = 0).
    """
    coords = node_coordinates(topology, x)
    ng = topology.n_boundary
    vb = np.asarray(field(coords[:ng], t), dtype=float)
    if vb.shape != (ng, topology.dim) or not np.all(np.isfinite(vb)):
        raise ValueError("boundary velocity evaluator returned invalid data")
    out = np.zeros((topology.dim, topology.n_nodes))
    out[:, :ng] = vb.T
    return out.reshape(-1)


def solve_harmonic_extension(topology: MeshTopology, x: np.ndarray,
                             v_gamma: np.ndarray, stiffness=None,
                             blocks_solver=None) -> np.ndarray:
    """Full discrete velocity (boundary data + harmonic interior extension).

    Pass `blocks_solver` from :func:`harmonic_solver` to reuse a
    factorization across calls on the same geometry.
    """
    if blocks_solver is None:
        blocks_solver = harmonic_solver(topology, x, stiffness)
    blocks, solver = blocks_solver
    A21 = blocks.A21
    ng = topology.n_boundary
    vg = split_components(v_gamma, topology.dim)  # (dim, N)
    rhs = -(A21 @ vg[:, :ng].T)  # (N_int, dim)
    if FLIP_COUPLING_SIGN:
        rhs = -rhs
    v_int = solver.solve(rhs)
    v = np.array(vg)
    v[:, ng:] = v_int.T
    return v.reshape(-1)


def harmonic_solver(topology: MeshTopology, x: np.ndarray, stiffness=None):
    """Factorize A22(x) once; returns (blocks, solver) for repeated extensions."""
    if stiffness is None:
        stiffness = assemble_stiffness(topology, x)
    blocks = extract_blocks(stiffness, topology.n_boundary)
    return blocks, factorize(blocks.A22, role="harmonic extension A22")
