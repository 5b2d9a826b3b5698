import math

import numpy as np
import pytest

from evolvefem.ref_elem import (
    MAX_EXACTNESS,
    QuadratureRule,
    ReferenceElement,
    quadrature,
    shape_gradients,
    shape_values,
)

ELEMS = [ReferenceElement(d, k) for d in (2, 3) for k in (1, 2)]


def random_simplex_points(dim, n, rng):
    # uniform barycentric samples inside the closed simplex
    pts = rng.dirichlet(np.ones(dim + 1), size=n)[:, 1:]
    return pts


@pytest.mark.parametrize("elem", ELEMS, ids=lambda e: f"d{e.dim}k{e.degree}")
def test_local_node_count(elem):
    k, n = elem.degree, elem.dim
    if n == 2:
        expected = (k + 1) * (k + 2) // 2
    else:
        expected = (k + 1) * (k + 2) * (k + 3) // 6
    assert elem.n_local == expected
    # nodes pairwise distinct, inside closed simplex
    d = np.linalg.norm(elem.local_nodes[:, None] - elem.local_nodes[None, :], axis=-1)
    assert np.min(d + np.eye(elem.n_local)) > 0.1
    assert np.all(elem.local_nodes >= 0)
    assert np.all(elem.local_nodes.sum(axis=1) <= 1 + 1e-15)


@pytest.mark.parametrize("elem", ELEMS, ids=lambda e: f"d{e.dim}k{e.degree}")
def test_partition_of_unity(elem):
    rng = np.random.default_rng(7)
    for p in random_simplex_points(elem.dim, 100, rng):
        vals = shape_values(elem, p)
        assert abs(vals.sum() - 1.0) < 1e-13
        grads = shape_gradients(elem, p)
        assert np.max(np.abs(grads.sum(axis=0))) < 1e-13


@pytest.mark.parametrize("elem", ELEMS, ids=lambda e: f"d{e.dim}k{e.degree}")
def test_nodal_basis(elem):
    for i, node in enumerate(elem.local_nodes):
        vals = shape_values(elem, node)
        expected = np.zeros(elem.n_local)
        expected[i] = 1.0
        np.testing.assert_allclose(vals, expected, atol=1e-14)


def test_quadratic_triangle_midpoint_node():
    elem = ReferenceElement(2, 2)
    # midpoint between local vertices 1 and 2 is local node 4 (edge (1,2))
    p = (elem.local_nodes[1] + elem.local_nodes[2]) / 2
    vals = shape_values(elem, p)
    assert vals[4] == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(np.delete(vals, 4))) < 1e-14


def test_linear_triangle_vertex_gradient():
    elem = ReferenceElement(2, 1)
    # basis at origin vertex is 1 - xi - eta
    g = shape_gradients(elem, [0.3, 0.2])
    np.testing.assert_allclose(g[0], [-1.0, -1.0], atol=1e-15)


@pytest.mark.parametrize("elem", ELEMS, ids=lambda e: f"d{e.dim}k{e.degree}")
def test_gradients_match_finite_differences(elem):
    rng = np.random.default_rng(11)
    h = 1e-6
    for p in random_simplex_points(elem.dim, 10, rng) * 0.5 + 0.1:
        grads = shape_gradients(elem, p)
        for d in range(elem.dim):
            pp, pm = p.copy(), p.copy()
            pp[d] += h
            pm[d] -= h
            fd = (shape_values(elem, pp) - shape_values(elem, pm)) / (2 * h)
            np.testing.assert_allclose(grads[:, d], fd, atol=5e-10)


def test_rejects_point_outside():
    elem = ReferenceElement(2, 1)
    with pytest.raises(ValueError):
        shape_values(elem, [0.7, 0.7])
    with pytest.raises(ValueError):
        shape_gradients(elem, [-1e-6, 0.5])


def simplex_monomial_integral(exponents):
    # int over unit simplex of prod x_i^a_i = prod(a_i!) / (sum(a_i) + dim)!
    dim = len(exponents)
    num = 1
    for a in exponents:
        num *= math.factorial(a)
    return num / math.factorial(sum(exponents) + dim)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("exactness", range(0, 9))
def test_quadrature_monomial_exactness(dim, exactness):
    if exactness > MAX_EXACTNESS[dim]:
        pytest.skip("above tabulated range")
    rule = quadrature(dim, exactness)
    assert np.all(rule.weights > 0)
    measure = 0.5 if dim == 2 else 1.0 / 6.0
    assert rule.weights.sum() == pytest.approx(measure, rel=1e-14)
    for total in range(exactness + 1):
        for expo in monomials(dim, total):
            approx = np.sum(rule.weights * np.prod(rule.points**np.array(expo), axis=1))
            exact = simplex_monomial_integral(expo)
            assert approx == pytest.approx(exact, rel=1e-13, abs=1e-16), expo


def monomials(dim, total):
    if dim == 1:
        yield (total,)
        return
    for a in range(total + 1):
        for rest in monomials(dim - 1, total - a):
            yield (a,) + rest


def test_quadrature_rejects_unsupported():
    with pytest.raises(ValueError):
        quadrature(2, 9)
    with pytest.raises(ValueError):
        quadrature(3, 100)


def test_interval_rule():
    rule = quadrature(1, 5)
    assert isinstance(rule, QuadratureRule)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
    for a in range(6):
        approx = np.sum(rule.weights * rule.points[:, 0] ** a)
        assert approx == pytest.approx(1.0 / (a + 1), rel=1e-13)
