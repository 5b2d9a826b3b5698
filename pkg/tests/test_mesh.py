"""Mesh generator and geometry tests for the disk and ball families."""

import numpy as np
import pytest

from evolvefem.assembly import domain_volume
from evolvefem.mesh import (
    MeshDegenerationError,
    MeshTopology,
    element_geometry,
    generate_ball_mesh,
    generate_disk_mesh,
    mesh_size,
    node_coordinates,
    positions_from_coordinates,
    split_components,
)


def test_disk_area_quadratic():
    topo, x0 = generate_disk_mesh(0.1, 2)
    assert abs(domain_volume(topo, x0) - np.pi) < 5e-6


def test_disk_area_linear_underestimates():
    # straight-edged polygons inscribed in the circle have area < pi
    topo, x0 = generate_disk_mesh(0.2, 1)
    area = domain_volume(topo, x0)
    assert area < np.pi
    assert abs(area - np.pi) < 0.05


def test_ball_volume_quadratic():
    topo, x0 = generate_ball_mesh(0.5, 2)
    assert abs(domain_volume(topo, x0) - 4 * np.pi / 3) < 2e-3


def test_boundary_nodes_on_unit_sphere():
    for gen, h in ((generate_disk_mesh, 0.15), (generate_ball_mesh, 0.7)):
        topo, x0 = gen(h, 2)
        coords = node_coordinates(topo, x0)
        radii = np.linalg.norm(coords[: topo.n_boundary], axis=1)
        assert np.abs(radii - 1.0).max() < 1e-12, gen.__name__
        # interior nodes are strictly inside
        assert np.linalg.norm(coords[topo.n_boundary:], axis=1).max() < 1.0


def test_mesh_size_honors_target():
    for h in (0.35, 0.18, 0.1):
        topo, x0 = generate_disk_mesh(h, 2)
        assert mesh_size(topo, x0) <= h


def test_halving_h_scales_element_count():
    t1, _ = generate_disk_mesh(0.3, 1)
    t2, _ = generate_disk_mesh(0.15, 1)
    ratio = t2.n_elements / t1.n_elements
    assert 2.5 < ratio < 6.5  # ~4 for a 2d family


def test_ball_element_count_growth():
    t1, x1 = generate_ball_mesh(0.8, 1)
    t2, x2 = generate_ball_mesh(0.4, 1)
    hr = mesh_size(t1, x1) / mesh_size(t2, x2)
    ratio = t2.n_elements / t1.n_elements
    # ~ hr^3 for a 3d family
    assert 0.4 * hr ** 3 < ratio < 2.5 * hr ** 3


def test_positive_jacobians_everywhere():
    for gen, h in ((generate_disk_mesh, 0.25), (generate_ball_mesh, 0.8)):
        for k in (1, 2):
            topo, x0 = gen(h, k)
            center = np.full(topo.dim, 1.0 / (topo.dim + 1))
            for e in range(topo.n_elements):
                _, _, det = element_geometry(topo, x0, e, center)
                assert det > 0


def test_boundary_first_enumeration():
    topo, x0 = generate_disk_mesh(0.25, 2)
    coords = node_coordinates(topo, x0)
    on_circle = np.abs(np.linalg.norm(coords, axis=1) - 1.0) < 1e-12
    assert on_circle[: topo.n_boundary].all()
    assert not on_circle[topo.n_boundary:].any()


def test_single_unit_triangle_geometry():
    # reference triangle as its own mesh: identity map
    elements = np.array([[0, 1, 2]])
    topo = MeshTopology(dim=2, degree=1, elements=elements, n_nodes=3,
                        n_boundary=3, boundary_faces=[(0, 0), (0, 1), (0, 2)])
    x = positions_from_coordinates(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert mesh_size(topo, x) == pytest.approx(np.sqrt(2.0))
    pt, jac, det = element_geometry(topo, x, 0, np.array([0.25, 0.25]))
    assert np.allclose(pt, [0.25, 0.25])
    assert np.allclose(jac, np.eye(2))
    assert det == pytest.approx(1.0)


def test_degenerate_element_detected():
    elements = np.array([[0, 1, 2]])
    topo = MeshTopology(dim=2, degree=1, elements=elements, n_nodes=3,
                        n_boundary=3, boundary_faces=[(0, 0), (0, 1), (0, 2)])
    # reversed orientation: negative determinant
    x = positions_from_coordinates(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(MeshDegenerationError):
        element_geometry(topo, x, 0, np.array([0.25, 0.25]))


def test_scaling_and_translation_of_positions():
    topo, x0 = generate_disk_mesh(0.3, 2)
    coords = node_coordinates(topo, x0)
    moved = positions_from_coordinates(2.0 * coords + np.array([3.0, -1.0]))
    assert domain_volume(topo, moved) == pytest.approx(4.0 * domain_volume(topo, x0))
    assert mesh_size(topo, moved) == pytest.approx(2.0 * mesh_size(topo, x0))


def test_component_major_layout_roundtrip():
    topo, x0 = generate_disk_mesh(0.35, 1)
    comps = split_components(x0, 2)
    assert comps.shape == (2, topo.n_nodes)
    coords = node_coordinates(topo, x0)
    assert np.array_equal(coords[:, 0], comps[0])
    assert np.array_equal(positions_from_coordinates(coords), x0)


def test_generator_rejects_bad_target():
    with pytest.raises(ValueError):
        generate_disk_mesh(0.0, 2)
    with pytest.raises(ValueError):
        generate_ball_mesh(2.5, 1)


def test_quadratic_midpoints_shared_between_elements():
    topo, _ = generate_disk_mesh(0.3, 2)
    # each interior edge's midpoint node appears in exactly the elements
    # sharing that edge: total node count matches Euler-style bookkeeping
    n_vertex_slots = topo.elements[:, :3]
    n_mid_slots = topo.elements[:, 3:]
    assert n_mid_slots.min() >= 0
    assert topo.n_nodes == len(np.unique(topo.elements))
