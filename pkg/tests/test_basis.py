import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qoip.basis import (
    MAX_EDGE_DEGREE,
    MAX_TRIANGLE_DEGREE,
    edge_nodes,
    face_barycentric,
    integrate_barycentric_monomial,
    lagrange_eval,
    lagrange_tabulate,
    quad_rule_edge,
    quad_rule_triangle,
    quad_rule_triangle_split,
    triangle_nodes,
)
from qoip.errors import InvalidArgumentError, UnsupportedDegreeError


def test_monomial_examples():
    assert integrate_barycentric_monomial((1, 0, 0), 2) == pytest.approx(1 / 3)
    assert integrate_barycentric_monomial((0, 0), 1) == pytest.approx(1.0)
    assert integrate_barycentric_monomial((4, 4), 1) == pytest.approx(1 / 630, rel=1e-15)
    assert integrate_barycentric_monomial((0, 1, 1), 2, 2.0) == pytest.approx(1 / 6)


def test_monomial_bad_index():
    with pytest.raises(InvalidArgumentError):
        integrate_barycentric_monomial((1, 0), 2)
    with pytest.raises(InvalidArgumentError):
        integrate_barycentric_monomial((1, 0, 0), 3)


def _triangle_error(rule, alpha):
    val = rule.integrate(np.prod(rule.points ** np.array(alpha), axis=1))
    ref = integrate_barycentric_monomial(alpha, 2)
    return abs(val - ref) / ref


@pytest.mark.parametrize("degree", [0, 1, 2, 5, 9, 14, 20, 22, 30])
def test_triangle_rule_oracle(degree):
    rule = quad_rule_triangle(degree)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                assert _triangle_error(rule, (a, b, c)) <= 1e-12


@pytest.mark.parametrize("degree", [0, 1, 3, 8, 17, 30, 40])
def test_edge_rule_oracle(degree):
    rule = quad_rule_edge(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = rule.integrate(rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            ref = integrate_barycentric_monomial((a, b), 1)
            assert abs(val - ref) <= 1e-12 * ref


def test_split_rule_integrates_monomials():
    rule = quad_rule_triangle_split(6)
    for alpha in itertools.product(range(4), repeat=3):
        if sum(alpha) <= 6:
            assert _triangle_error(rule, alpha) <= 1e-12


def test_rule_examples():
    r = quad_rule_triangle(2)
    assert r.integrate(r.points[:, 1] * r.points[:, 2]) == pytest.approx(1 / 12, rel=1e-14)
    e = quad_rule_edge(8)
    assert e.integrate((e.points[:, 0] * e.points[:, 1]) ** 4) == pytest.approx(1 / 630, rel=1e-13)
    assert r.integrate(np.ones(len(r.weights)), 0.5) == pytest.approx(0.5, rel=1e-15)


def test_unsupported_degree():
    with pytest.raises(UnsupportedDegreeError):
        quad_rule_triangle(MAX_TRIANGLE_DEGREE + 1)
    with pytest.raises(UnsupportedDegreeError):
        quad_rule_edge(MAX_EDGE_DEGREE + 1)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_node_counts_and_nesting(p):
    nodes = triangle_nodes(p).nodes
    assert len(nodes) == (p + 1) * (p + 2) // 2
    assert len(edge_nodes(p).nodes) == p + 1
    # nodes on face 0 (lambda_0 = 0) are exactly the edge nodes
    on_face = nodes[np.isclose(nodes[:, 0], 0)]
    assert len(on_face) == p + 1
    assert set(np.round(on_face[:, 2] * p).astype(int)) == set(range(p + 1))


@pytest.mark.parametrize("p", [1, 2, 3])
def test_kronecker_property(p):
    nodes = triangle_nodes(p).nodes
    V = lagrange_tabulate(p, nodes)[0]
    assert np.allclose(V, np.eye(len(nodes)), atol=1e-13)


def test_lagrange_eval_examples():
    v, _ = lagrange_eval(1, (1.0, 0.0, 0.0), (1.0, 0.0, 0.0))
    assert v == pytest.approx(1.0)
    v, _ = lagrange_eval(2, (0.0, 0.5, 0.5), (1.0, 0.0, 0.0))
    assert v == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(InvalidArgumentError):
        lagrange_eval(2, (0.3, 0.3, 0.4), (1.0, 0.0, 0.0))


@settings(max_examples=20, deadline=None)
@given(p=st.integers(1, 5), seed=st.integers(0, 2**31 - 1))
def test_partition_of_unity(p, seed):
    b = np.random.default_rng(seed).dirichlet(np.ones(3), size=20)
    vals, grads = lagrange_tabulate(p, b, 1)
    assert np.abs(vals.sum(axis=0) - 1).max() <= 1e-14 * (p + 1) ** 2
    # gradient of the sum is zero in every tangent direction
    g = grads.sum(axis=0)
    assert np.abs(g - g.mean(axis=-1, keepdims=True)).max() <= 1e-12


@pytest.mark.parametrize("p", [1, 2, 3])
def test_trace_nestedness(p):
    rule = quad_rule_edge(2 * p)
    t = rule.points[:, 1]
    tri = triangle_nodes(p).nodes
    edge = lagrange_tabulate(p, rule.points)[0]
    edge_idx = np.round(edge_nodes(p).nodes[:, 1] * p).astype(int)
    for i in range(3):
        vals = lagrange_tabulate(p, face_barycentric(i, t))[0]
        on = np.flatnonzero(np.isclose(tri[:, i], 0))
        off = np.setdiff1d(np.arange(len(tri)), on)
        assert np.abs(vals[off]).max() <= 1e-13
        for z in on:
            s = tri[z, (i + 2) % 3]  # position along the face
            j = int(np.flatnonzero(edge_idx == round(s * p))[0])
            assert np.abs(vals[z] - edge[j]).max() <= 1e-13
