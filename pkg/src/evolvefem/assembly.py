"""Assembly of position-dependent mass/stiffness matrices and load vectors.

All kernels are vectorized over elements: reference tabulations are
computed once per (topology, exactness) and cached on the topology, so a
reassembly on new nodal positions is a handful of einsums plus a sparse
scatter with a fixed, deterministic pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import MeshDegenerationError, MeshTopology, node_coordinates
from .ref_elem import assembly_exactness, quadrature, tabulate_gradients, tabulate_values

SYMMETRY_TOL = 1e-13


def _volume_scaffold(topology: MeshTopology, exactness: int):
    """Cached reference data and sparsity pattern for volume assembly."""
    key = ("vol", exactness)
    if key in topology.cache:
        return topology.cache[key]
    rule = quadrature(topology.dim, exactness)
    N = tabulate_values(topology.ref, rule.points)  # (nq, nl)
    G = tabulate_gradients(topology.ref, rule.points)  # (nq, nl, dim)
    conn = topology.elements
    nl = topology.ref.n_local
    rows = np.repeat(conn, nl, axis=1).ravel()
    cols = np.tile(conn, (1, nl)).ravel()
    scaffold = {"rule": rule, "N": N, "G": G, "rows": rows, "cols": cols}
    topology.cache[key] = scaffold
    return scaffold


def _det_inv(jac: np.ndarray):
    """Determinants and inverses for an (..., d, d) stack, d in {2, 3}."""
    d = jac.shape[-1]
    if d == 2:
        a, b = jac[..., 0, 0], jac[..., 0, 1]
        c, e = jac[..., 1, 0], jac[..., 1, 1]
        det = a * e - b * c
        inv = np.empty_like(jac)
        inv[..., 0, 0] = e
        inv[..., 0, 1] = -b
        inv[..., 1, 0] = -c
        inv[..., 1, 1] = a
        inv /= det[..., None, None]
        return det, inv
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    return det, inv


def element_jacobians(topology: MeshTopology, x: np.ndarray, exactness: int | None = None,
                      context: str = ""):
    """Per-element, per-quadrature-point geometry.

    Returns (scaffold, points, det, inv_jac) with shapes
    points (ne, nq, dim), det (ne, nq), inv_jac (ne, nq, dim, dim).
    Raises MeshDegenerationError if any det <= 0.
    """
    if exactness is None:
        exactness = assembly_exactness(topology.dim, topology.degree)
    sc = _volume_scaffold(topology, exactness)
    coords = node_coordinates(topology, x)
    xe = coords[topology.elements]  # (ne, nl, dim)
    pts = np.matmul(sc["N"][None], xe)  # (ne, nq, dim)
    # jac[e,q,a,b] = sum_l xe[e,l,a] G[q,l,b], as a broadcast batched matmul
    jac = np.matmul(xe.transpose(0, 2, 1)[:, None], sc["G"][None])
    det, inv = _det_inv(jac)
    if np.any(det <= 0) or not np.all(np.isfinite(det)):
        bad = int(np.argwhere(~(det > 0))[0][0])
        raise MeshDegenerationError(bad, float(det[bad].min()), context)
    return sc, pts, det, inv


def _to_csr(values: np.ndarray, scaffold, n: int) -> sp.csr_matrix:
    K = sp.coo_matrix((values.ravel(), (scaffold["rows"], scaffold["cols"])), shape=(n, n))
    return K.tocsr()


def assemble_mass(topology: MeshTopology, x: np.ndarray,
                  exactness: int | None = None) -> sp.csr_matrix:
    """Mass matrix M(x)_jk = integral of phi_j phi_k over the discrete domain."""
    sc, _, det, _ = element_jacobians(topology, x, exactness, "mass assembly")
    w = sc["rule"].weights[None, :] * det  # (ne, nq)
    # sqrt-weighted factors keep the element matrices bitwise symmetric
    Ns = sc["N"][None] * np.sqrt(w)[:, :, None]  # (ne, nq, nl)
    Me = np.matmul(Ns.transpose(0, 2, 1), Ns)
    return _to_csr(Me, sc, topology.n_nodes)


def assemble_stiffness(topology: MeshTopology, x: np.ndarray,
                       exactness: int | None = None) -> sp.csr_matrix:
    """Stiffness matrix A(x)_jk = integral of grad phi_j . grad phi_k."""
    sc, _, det, inv = element_jacobians(topology, x, exactness, "stiffness assembly")
    w = sc["rule"].weights[None, :] * det
    # physical gradients B[e,q,l,:] = G[q,l,:] @ inv[e,q], sqrt-weighted so
    # the Gram product below is bitwise symmetric
    B = np.matmul(sc["G"][None], inv) * np.sqrt(w)[:, :, None, None]
    Bf = B.transpose(0, 2, 1, 3).reshape(len(B), topology.ref.n_local, -1)
    Ae = np.matmul(Bf, Bf.transpose(0, 2, 1))
    return _to_csr(Ae, sc, topology.n_nodes)


def _face_scaffold(topology: MeshTopology, exactness: int):
    """Cached boundary-face tabulation for surface integrals."""
    key = ("face", exactness)
    if key in topology.cache:
        return topology.cache[key]
    ref = topology.ref
    rule = quadrature(topology.dim - 1, exactness)
    # face reference element: segment (via dim-1 Gauss points) or triangle
    if topology.dim == 2:
        from .ref_elem import ReferenceElement

        # 1D Lagrange basis on [0,1]: endpoints (+ midpoint for degree 2)
        s = rule.points[:, 0]
        if ref.degree == 1:
            vals = np.column_stack([1 - s, s])
            ders = np.tile(np.array([-1.0, 1.0]), (len(s), 1))[:, :, None]
        else:
            vals = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
            ders = np.stack(
                [4 * s - 3, 4 * s - 1, 4 - 8 * s], axis=1
            )[:, :, None]
    else:
        from .ref_elem import ReferenceElement

        face_ref = ReferenceElement(2, ref.degree)
        vals = tabulate_values(face_ref, rule.points)
        ders = tabulate_gradients(face_ref, rule.points)
    # global node indices per boundary face
    face_conn = np.array(
        [
            [topology.elements[e][v] for v in ref.face_nodes(f)]
            for e, f in topology.boundary_faces
        ],
        dtype=np.int64,
    )
    scaffold = {"rule": rule, "vals": vals, "ders": ders, "conn": face_conn}
    topology.cache[key] = scaffold
    return scaffold


def boundary_quadrature(topology: MeshTopology, x: np.ndarray, exactness: int | None = None):
    """Surface quadrature data: (scaffold, points (nf,nq,dim), measure (nf,nq))."""
    if exactness is None:
        exactness = 2 * topology.degree + topology.dim - 1
    sc = _face_scaffold(topology, exactness)
    coords = node_coordinates(topology, x)
    xf = coords[sc["conn"]]  # (nf, nlf, dim)
    pts = np.einsum("ql,eld->eqd", sc["vals"], xf)
    tang = np.einsum("eld,qlt->eqdt", xf, sc["ders"])  # (nf, nq, dim, dim-1)
    if topology.dim == 2:
        meas = np.linalg.norm(tang[..., 0], axis=-1)
    else:
        cross = np.cross(tang[..., 0], tang[..., 1])
        meas = np.linalg.norm(cross, axis=-1)
    return sc, pts, meas


def assemble_load(topology: MeshTopology, x: np.ndarray, f_eval, g_eval, t: float,
                  beta: float = 1.0) -> np.ndarray:
    """Load vector: volume term for f plus beta-weighted Neumann boundary term for g.

    Evaluators take an (m, dim) point array and the time t; either may be
    None (treated as zero).
    """
    b = np.zeros(topology.n_nodes)
    if f_eval is not None:
        sc, pts, det, _ = element_jacobians(topology, x, None, "load assembly")
        fv = f_eval(pts.reshape(-1, topology.dim), t).reshape(det.shape)
        w = sc["rule"].weights[None, :] * det
        be = np.einsum("eq,eq,qa->ea", w, fv, sc["N"])
        np.add.at(b, topology.elements.ravel(), be.ravel())
    if g_eval is not None and beta != 0.0:
        fs, fpts, meas = boundary_quadrature(topology, x)
        gv = g_eval(fpts.reshape(-1, topology.dim), t).reshape(meas.shape)
        w = fs["rule"].weights[None, :] * meas
        bf = beta * np.einsum("eq,eq,qa->ea", w, gv, fs["vals"])
        np.add.at(b, fs["conn"].ravel(), bf.ravel())
    return b


def domain_volume(topology: MeshTopology, x: np.ndarray) -> float:
    """|Omega_h(x)| by quadrature."""
    sc, _, det, _ = element_jacobians(topology, x, None, "volume")
    return float(np.sum(sc["rule"].weights[None, :] * det))


def boundary_measure(topology: MeshTopology, x: np.ndarray) -> float:
    """|Gamma_h(x)| by surface quadrature."""
    fs, _, meas = boundary_quadrature(topology, x)
    return float(np.sum(fs["rule"].weights[None, :] * meas))


@dataclass
class BlockPartition:
    """(boundary, interior) block views of a symmetric matrix."""

    n_split: int
    A11: sp.csr_matrix
    A12: sp.csr_matrix
    A21: sp.csr_matrix
    A22: sp.csr_matrix


def extract_blocks(K: sp.spmatrix, n_boundary: int) -> BlockPartition:
    """Split at the boundary/interior index boundary (boundary-first ordering)."""
    n = K.shape[0]
    if not 0 < n_boundary < n:
        raise ValueError(f"split index {n_boundary} out of range for size {n}")
    K = K.tocsr()
    g = n_boundary
    return BlockPartition(
        n_split=g,
        A11=K[:g, :g],
        A12=K[:g, g:],
        A21=K[g:, :g],
        A22=K[g:, g:],
    )


def symmetry_defect(K: sp.spmatrix) -> float:
    """max |K - K^T| relative to max |K|."""
    d = abs(K - K.T)
    mx = abs(K).max()
    return float(d.max() / mx) if mx > 0 else 0.0


def write_coo(K: sp.spmatrix, path) -> None:
    """Debug dump in coordinate text format: row, col, value per line."""
    C = K.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(C.row, C.col, C.data):
            fh.write(f"{r} {c} {v:.17g}\n")
