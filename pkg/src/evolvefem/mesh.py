"""Mesh generation and per-element geometry for the unit disk and ball.

A mesh is a fixed :class:`MeshTopology` (connectivity, boundary-first node
enumeration) plus a nodal position vector; the domain at time t is
determined solely by the positions.  Vector-valued nodal data is stored
component-major: a field with arity n over N nodes is a flat array of
length n*N whose c-th block of length N holds component c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ref_elem import ReferenceElement


class MeshDegenerationError(RuntimeError):
    """An element Jacobian determinant became non-positive."""

    def __init__(self, element: int, det: float, context: str = ""):
        self.element = element
        self.det = det
        msg = f"degenerate element {element} (det = {det:.3e})"
        if context:
            msg += f" during {context}"
        super().__init__(msg)


@dataclass
class MeshTopology:
    """Fixed connectivity of an evolving mesh.

    Global node indices ``0 .. n_boundary-1`` are exactly the boundary
    nodes.  Immutable after generation; ``cache`` is used internally to
    memoize assembly scaffolding keyed by quadrature exactness.
    """

    dim: int
    degree: int
    elements: np.ndarray  # (n_elem, n_local) int
    n_nodes: int
    n_boundary: int
    boundary_faces: list  # [(element, local_face)]
    ref: ReferenceElement = None
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.ref is None:
            self.ref = ReferenceElement(self.dim, self.degree)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_interior(self) -> int:
        return self.n_nodes - self.n_boundary


def split_components(vec: np.ndarray, n: int) -> np.ndarray:
    """View a flat component-major vector of length n*N as an (n, N) array."""
    vec = np.asarray(vec)
    return vec.reshape(n, -1)


def join_components(comps: np.ndarray) -> np.ndarray:
    """Inverse of :func:`split_components`."""
    return np.asarray(comps).reshape(-1)


def node_coordinates(topology: MeshTopology, x: np.ndarray) -> np.ndarray:
    """Positions as an (N, dim) array from a flat position vector."""
    return split_components(x, topology.dim).T


def positions_from_coordinates(coords: np.ndarray) -> np.ndarray:
    """Flat component-major position vector from an (N, dim) array."""
    return join_components(np.asarray(coords, dtype=float).T)


# ---------------------------------------------------------------------------
# generators


def _strip_triangles(inner: list[int], outer: list[int], inner_xy, outer_xy):
    """Triangulate the annular strip between two closed node rings.

    Classic two-pointer sweep: always advance the ring whose candidate
    diagonal is shorter.  Both rings are ordered by angle, starting near
    angle zero.
    """
    tris = []
    ni, no = len(inner), len(outer)
    i = j = 0
    while i < ni or j < no:
        ip, jp = inner[i % ni], outer[j % no]
        inext, jnext = inner[(i + 1) % ni], outer[(j + 1) % no]
        adv_outer = False
        if i == ni:
            adv_outer = True
        elif j < no:
            d_outer = np.linalg.norm(inner_xy[i % ni] - outer_xy[(j + 1) % no])
            d_inner = np.linalg.norm(outer_xy[j % no] - inner_xy[(i + 1) % ni])
            # keep the sweep balanced: advance the ring that lags in angle
            frac_i = (i + 1) / ni
            frac_j = (j + 1) / no
            adv_outer = (frac_j, d_outer) < (frac_i, d_inner)
        if adv_outer:
            tris.append((ip, jp, jnext))
            j += 1
        else:
            tris.append((ip, jp, inext))
            i += 1
    return tris


def _disk_vertices_and_triangles(n_rings: int):
    """Concentric-ring triangulation of the unit disk (P1 vertices)."""
    ring_nodes = []
    coords = [np.array([0.0, 0.0])]
    ring_nodes.append([0])
    nxt = 1
    for r in range(1, n_rings + 1):
        count = 6 * r
        theta = 2 * np.pi * np.arange(count) / count
        # stagger alternate rings for better-shaped triangles
        if r % 2 == 0:
            theta += np.pi / count
        radius = r / n_rings
        for t in theta:
            coords.append(radius * np.array([np.cos(t), np.sin(t)]))
        ring_nodes.append(list(range(nxt, nxt + count)))
        nxt += count
    coords = np.array(coords)

    tris = []
    # center fan
    first = ring_nodes[1]
    for a in range(6):
        tris.append((0, first[a], first[(a + 1) % 6]))
    for r in range(1, n_rings):
        inner, outer = ring_nodes[r], ring_nodes[r + 1]
        tris.extend(_strip_triangles(inner, outer, coords[inner], coords[outer]))
    tris = np.array(tris, dtype=np.int64)

    # enforce positive orientation
    v0 = coords[tris[:, 1]] - coords[tris[:, 0]]
    v1 = coords[tris[:, 2]] - coords[tris[:, 0]]
    flip = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0] < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    boundary_vertices = set(ring_nodes[n_rings])
    return coords, tris, boundary_vertices


def _cube_kuhn_tetrahedra(s: int):
    """Kuhn (6-tet) subdivision of an s x s x s grid on [-1, 1]^3."""
    grid = np.linspace(-1.0, 1.0, s + 1)
    X, Y, Z = np.meshgrid(grid, grid, grid, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (s + 1) + j) * (s + 1) + k

    # six tetrahedra per cube, all sharing the main diagonal (0,0,0)-(1,1,1)
    kuhn = [
        (0b000, 0b100, 0b110, 0b111),
        (0b000, 0b110, 0b010, 0b111),
        (0b000, 0b010, 0b011, 0b111),
        (0b000, 0b011, 0b001, 0b111),
        (0b000, 0b001, 0b101, 0b111),
        (0b000, 0b101, 0b100, 0b111),
    ]
    tets = []
    for i in range(s):
        for j in range(s):
            for k in range(s):
                corner = {}
                for c in range(8):
                    di, dj, dk = (c >> 2) & 1, (c >> 1) & 1, c & 1
                    corner[c] = vid(i + di, j + dj, k + dk)
                for t in kuhn:
                    tets.append(tuple(corner[c] for c in t))
    tets = np.array(tets, dtype=np.int64)

    # orient positively
    p = coords[tets]
    det = np.linalg.det(p[:, 1:] - p[:, :1])
    flip = det < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return coords, tets


def _ball_map(coords: np.ndarray) -> np.ndarray:
    """Map the cube [-1,1]^3 radially onto the unit ball (sup-norm scaling)."""
    r2 = np.linalg.norm(coords, axis=1)
    rinf = np.max(np.abs(coords), axis=1)
    scale = np.ones_like(r2)
    nz = r2 > 0
    scale[nz] = rinf[nz] / r2[nz]
    return coords * scale[:, None]


def _boundary_faces_and_vertices(elements: np.ndarray, ref: ReferenceElement):
    """Faces occurring in exactly one element; also checks conformity."""
    face_map = {}
    for e, elem_nodes in enumerate(elements):
        for f in range(ref.n_faces):
            fverts = tuple(elem_nodes[v] for v in ref.face_nodes(f)[: ref.dim])
            key = tuple(sorted(fverts))
            face_map.setdefault(key, []).append((e, f))
    boundary = []
    for key, occ in face_map.items():
        if len(occ) == 1:
            boundary.append(occ[0])
        elif len(occ) != 2:
            raise ValueError(f"non-conforming mesh: face {key} in {len(occ)} elements")
    boundary.sort()
    return boundary


def _finalize_mesh(dim, degree, vertex_coords, elements, on_sphere):
    """Add degree-2 midpoint nodes, curve boundary edges, renumber boundary-first.

    `on_sphere(points) -> points` projects boundary midpoints onto the
    curved boundary (radial projection for circle/sphere).
    """
    ref1 = ReferenceElement(dim, 1)
    boundary = _boundary_faces_and_vertices(elements, ref1)
    bvert = set()
    bedges = set()
    for e, f in boundary:
        fnodes = [elements[e][v] for v in ref1.face_nodes(f)]
        bvert.update(fnodes)
        if dim == 2:
            bedges.add(tuple(sorted(fnodes)))
        else:
            for a in range(3):
                bedges.add(tuple(sorted((fnodes[a], fnodes[(a + 1) % 3]))))

    coords = np.asarray(vertex_coords, dtype=float)
    if degree == 2:
        from .ref_elem import EDGES

        edge_ids = {}
        mid_coords = []
        nv = len(coords)
        elems2 = []
        for elem_nodes in elements:
            row = list(elem_nodes)
            for a, b in EDGES[dim]:
                key = tuple(sorted((elem_nodes[a], elem_nodes[b])))
                if key not in edge_ids:
                    mid = (coords[key[0]] + coords[key[1]]) / 2.0
                    if key in bedges:
                        mid = on_sphere(mid)
                    edge_ids[key] = nv + len(mid_coords)
                    mid_coords.append(mid)
                row.append(edge_ids[key])
            elems2.append(row)
        coords = np.vstack([coords, np.array(mid_coords)])
        elements = np.array(elems2, dtype=np.int64)
        bnodes = bvert | {edge_ids[e] for e in bedges}
    else:
        bnodes = bvert

    # boundary-first renumbering, deterministic by old index
    n_nodes = len(coords)
    old_b = sorted(bnodes)
    old_i = [j for j in range(n_nodes) if j not in bnodes]
    perm = np.empty(n_nodes, dtype=np.int64)
    perm[old_b] = np.arange(len(old_b))
    perm[old_i] = len(old_b) + np.arange(len(old_i))
    coords = coords[np.argsort(perm)]
    elements = perm[elements]

    ref = ReferenceElement(dim, degree)
    topo = MeshTopology(
        dim=dim,
        degree=degree,
        elements=elements,
        n_nodes=n_nodes,
        n_boundary=len(old_b),
        boundary_faces=_boundary_faces_and_vertices(
            elements[:, : dim + 1], ReferenceElement(dim, 1)
        ),
        ref=ref,
    )
    return topo, positions_from_coordinates(coords)


def generate_disk_mesh(h_target: float, k: int):
    """Quasi-uniform isoparametric triangulation of the unit disk.

    Boundary vertices lie on the unit circle; for k=2, boundary edge
    midpoints are projected radially onto the circle.  Guarantees
    ``mesh_size(topology, x0) <= h_target``.
    """
    if not 0 < h_target < 1:
        raise ValueError(f"h_target must be in (0, 1), got {h_target}")
    n_rings = int(np.ceil(2.0 / h_target))
    if n_rings > 2000:
        raise ValueError(f"h_target {h_target} below generator limit")

    def project(p):
        return p / np.linalg.norm(p)

    for _ in range(4):
        coords, tris, _ = _disk_vertices_and_triangles(n_rings)
        topo, x0 = _finalize_mesh(2, k, coords, tris, project)
        if mesh_size(topo, x0) <= h_target:
            return topo, x0
        n_rings = int(np.ceil(n_rings * 1.25))
    raise RuntimeError("disk generator failed to reach target mesh size")


def generate_ball_mesh(h_target: float, k: int):
    """Quasi-uniform isoparametric tetrahedral mesh of the unit ball.

    Kuhn-subdivided cube grid mapped radially onto the ball; boundary
    vertices lie on the unit sphere, k=2 boundary-face edge midpoints
    are projected radially.
    """
    if not 0 < h_target < 2:
        raise ValueError(f"h_target must be in (0, 2), got {h_target}")
    s = max(2, int(np.ceil(2.0 * np.sqrt(3.0) / h_target)))
    if s > 40:
        raise ValueError(f"h_target {h_target} below generator limit")

    def project(p):
        return p / np.linalg.norm(p)

    while s <= 64:
        cube_coords, tets = _cube_kuhn_tetrahedra(s)
        coords = _ball_map(cube_coords)
        topo, x0 = _finalize_mesh(3, k, coords, tets, project)
        if mesh_size(topo, x0) <= h_target:
            return topo, x0
        s += 1
    raise RuntimeError("ball generator failed to reach target mesh size")


# ---------------------------------------------------------------------------
# geometry


def mesh_size(topology: MeshTopology, x: np.ndarray) -> float:
    """Maximal element diameter: max over elements of max pairwise node distance."""
    coords = node_coordinates(topology, x)
    p = coords[topology.elements]  # (ne, nl, dim)
    d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)
    return float(d.max())


def element_geometry(topology: MeshTopology, x: np.ndarray, element: int, p):
    """Isoparametric map data at reference point p: (physical point, Jacobian, det).

    Raises :class:`MeshDegenerationError` when det <= 0.
    """
    from .ref_elem import shape_gradients, shape_values

    coords = node_coordinates(topology, x)
    xe = coords[topology.elements[element]]  # (nl, dim)
    N = shape_values(topology.ref, p)
    G = shape_gradients(topology.ref, p)
    point = N @ xe
    jac = xe.T @ G  # (dim, dim)
    det = float(np.linalg.det(jac))
    if det <= 0:
        raise MeshDegenerationError(element, det)
    return point, jac, det


def export_mesh(topology: MeshTopology, x: np.ndarray, path) -> None:
    """Plain-text dump: one node per line (index, coords), then one element per line."""
    coords = node_coordinates(topology, x)
    with open(path, "w") as fh:
        fh.write(f"# nodes {topology.n_nodes} dim {topology.dim} "
                 f"degree {topology.degree} boundary {topology.n_boundary}\n")
        for j, c in enumerate(coords):
            fh.write(f"{j} " + " ".join(f"{v:.17g}" for v in c) + "\n")
        fh.write(f"# elements {topology.n_elements}\n")
        for row in topology.elements:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
