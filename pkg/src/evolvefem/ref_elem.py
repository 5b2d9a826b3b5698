"""Reference simplices, Lagrange shape functions and quadrature rules.

Everything downstream (mesh geometry, matrix assembly) pulls back to the
unit simplex handled here.  Supported: triangles and tetrahedra with
Lagrange elements of degree 1 or 2.  Node ordering is vertices first,
then edge midpoints in the fixed edge enumeration ``EDGES[dim]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

# Fixed edge enumeration (pairs of local vertex indices).
EDGES = {
    2: ((0, 1), (1, 2), (2, 0)),
    3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
}

# Local faces of codimension 1: edges of the triangle, faces of the tet.
# Vertex indices only; midpoint nodes are appended for degree 2.
FACE_VERTICES = {
    2: ((0, 1), (1, 2), (2, 0)),
    3: ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)),
}

MAX_EXACTNESS = {1: 19, 2: 8, 3: 8}

_CONTAINMENT_TOL = 1e-12


def _local_nodes(dim: int, degree: int) -> np.ndarray:
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    if degree == 1:
        return verts
    mids = np.array([(verts[a] + verts[b]) / 2.0 for a, b in EDGES[dim]])
    return np.vstack([verts, mids])


@dataclass(frozen=True)
class ReferenceElement:
    """Reference simplex with Lagrange basis of degree 1 or 2.

    Immutable; safe to share across threads.
    """

    dim: int
    degree: int
    local_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        if self.degree not in (1, 2):
            raise ValueError(f"unsupported degree {self.degree}")
        object.__setattr__(self, "local_nodes", _local_nodes(self.dim, self.degree))

    @property
    def n_local(self) -> int:
        return len(self.local_nodes)

    @property
    def edges(self):
        return EDGES[self.dim]

    def face_nodes(self, face: int) -> tuple[int, ...]:
        """Local node indices on codim-1 face `face`.

        Vertices in FACE_VERTICES order, then (for degree 2) the midpoints
        of consecutive vertex pairs in the same cyclic order, matching the
        node ordering of the face's own reference element.
        """
        fverts = FACE_VERTICES[self.dim][face]
        nodes = list(fverts)
        if self.degree == 2:
            nv = self.dim + 1
            edge_index = {frozenset(e): i for i, e in enumerate(EDGES[self.dim])}
            nf = len(fverts)
            pairs = [(fverts[i], fverts[(i + 1) % nf]) for i in range(nf)] \
                if nf == 3 else [fverts]
            for a, b in pairs:
                nodes.append(nv + edge_index[frozenset((a, b))])
        return tuple(nodes)

    @property
    def n_faces(self) -> int:
        return len(FACE_VERTICES[self.dim])


def _barycentric(pts: np.ndarray) -> np.ndarray:
    lam0 = 1.0 - pts.sum(axis=-1, keepdims=True)
    return np.concatenate([lam0, pts], axis=-1)


def tabulate_values(elem: ReferenceElement, pts: np.ndarray) -> np.ndarray:
    """Shape function values at an (m, dim) array of reference points -> (m, n_local)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lam = _barycentric(pts)  # (m, dim+1)
    if elem.degree == 1:
        return lam
    vert = lam * (2.0 * lam - 1.0)
    mids = np.stack([4.0 * lam[:, a] * lam[:, b] for a, b in elem.edges], axis=1)
    return np.concatenate([vert, mids], axis=1)


def tabulate_gradients(elem: ReferenceElement, pts: np.ndarray) -> np.ndarray:
    """Reference gradients at an (m, dim) array of points -> (m, n_local, dim)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m, dim = pts.shape
    lam = _barycentric(pts)  # (m, dim+1)
    # dlam[i, d]: gradient of barycentric coordinate i w.r.t. reference coord d
    dlam = np.vstack([-np.ones(dim), np.eye(dim)])  # (dim+1, dim)
    if elem.degree == 1:
        return np.broadcast_to(dlam, (m, dim + 1, dim)).copy()
    grad_vert = (4.0 * lam - 1.0)[:, :, None] * dlam[None, :, :]
    grad_mids = np.stack(
        [4.0 * (lam[:, a, None] * dlam[b] + lam[:, b, None] * dlam[a]) for a, b in elem.edges],
        axis=1,
    )
    return np.concatenate([grad_vert, grad_mids], axis=1)


def _check_inside(elem: ReferenceElement, p: np.ndarray) -> None:
    p = np.asarray(p, dtype=float)
    if p.shape != (elem.dim,):
        raise ValueError(f"expected point of dimension {elem.dim}, got shape {p.shape}")
    if np.any(p < -_CONTAINMENT_TOL) or p.sum() > 1.0 + _CONTAINMENT_TOL:
        raise ValueError(f"point {p} outside the closed reference simplex")


def shape_values(elem: ReferenceElement, p) -> np.ndarray:
    """Lagrange basis values at a single reference point -> (n_local,)."""
    p = np.asarray(p, dtype=float)
    _check_inside(elem, p)
    return tabulate_values(elem, p[None, :])[0]


def shape_gradients(elem: ReferenceElement, p) -> np.ndarray:
    """Reference gradients of the Lagrange basis at a point -> (n_local, dim)."""
    p = np.asarray(p, dtype=float)
    _check_inside(elem, p)
    return tabulate_gradients(elem, p[None, :])[0]


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference simplex (or unit interval for dim=1)."""

    dim: int
    points: np.ndarray
    weights: np.ndarray
    exactness: int


def _gauss01(m: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes/weights on [0,1] for weight function (1-x)^alpha."""
    if alpha == 0:
        t, w = roots_legendre(m)
    else:
        t, w = roots_jacobi(m, alpha, 0.0)
    x = (1.0 + t) / 2.0
    # dt = 2 dx and (1-t)^alpha = (2(1-x))^alpha
    w = w / 2.0 ** (alpha + 1)
    return x, w


def quadrature(dim: int, exactness: int) -> QuadratureRule:
    """Conical-product Gauss rule exact for all polynomials of total degree <= exactness.

    All weights are positive and sum to the reference simplex measure
    (1 for dim=1, 1/2 for dim=2, 1/6 for dim=3).
    """
    if dim not in MAX_EXACTNESS:
        raise ValueError(f"unsupported dimension {dim}")
    if exactness < 0 or exactness > MAX_EXACTNESS[dim]:
        raise ValueError(
            f"exactness {exactness} not available in dimension {dim} "
            f"(maximum {MAX_EXACTNESS[dim]})"
        )
    m = exactness // 2 + 1
    if dim == 1:
        x, w = _gauss01(m, 0)
        return QuadratureRule(1, x[:, None], w, exactness)
    if dim == 2:
        xi, wxi = _gauss01(m, 1)
        eta, weta = _gauss01(m, 0)
        X = np.repeat(xi, m)
        E = np.tile(eta, m)
        pts = np.column_stack([X, E * (1.0 - X)])
        wts = np.repeat(wxi, m) * np.tile(weta, m)
        return QuadratureRule(2, pts, wts, exactness)
    xi, wxi = _gauss01(m, 2)
    eta, weta = _gauss01(m, 1)
    zeta, wzeta = _gauss01(m, 0)
    X = np.repeat(xi, m * m)
    E = np.tile(np.repeat(eta, m), m)
    Z = np.tile(zeta, m * m)
    pts = np.column_stack([X, E * (1.0 - X), Z * (1.0 - X) * (1.0 - E)])
    wts = np.repeat(wxi, m * m) * np.tile(np.repeat(weta, m), m) * np.tile(wzeta, m * m)
    return QuadratureRule(3, pts, wts, exactness)


def assembly_exactness(dim: int, degree: int) -> int:
    """Volume quadrature exactness used for mass/stiffness/load assembly."""
    return 2 * degree + dim
