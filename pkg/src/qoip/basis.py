"""Barycentric calculus on simplices: Lagrange bases and quadrature.

Quadrature weights are normalised to sum to one, so a rule integrates
``f / |C|``; multiply by the measure of the simplex.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import InvalidArgumentError, UnsupportedDegreeError

MAX_TRIANGLE_DEGREE = 30
MAX_EDGE_DEGREE = 40


def integrate_barycentric_monomial(alpha, n, measure=1.0):
    """Exact integral of ``prod_z lambda_z**alpha_z`` over an ``n``-simplex.

    Equals ``n! * alpha! / (n + |alpha|)! * measure``.
    """
    alpha = tuple(int(a) for a in alpha)
    if n not in (1, 2):
        raise InvalidArgumentError("simplex dimension must be 1 or 2")
    if len(alpha) != n + 1 or any(a < 0 for a in alpha):
        raise InvalidArgumentError(f"need {n + 1} nonnegative exponents, got {alpha}")
    num = factorial(n)
    for a in alpha:
        num *= factorial(a)
    return num / factorial(n + sum(alpha)) * measure


# ----------------------------------------------------------------------
# Lagrange nodes and bases
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class LagrangeNodeSet:
    degree: int
    multi_indices: np.ndarray  # (nloc, n+1) int

    @property
    def nodes(self):
        """Barycentric coordinates of the nodes."""
        if self.degree == 0:
            k = self.multi_indices.shape[1]
            return np.full((1, k), 1.0 / k)
        return self.multi_indices / self.degree

    def __len__(self):
        return len(self.multi_indices)


@lru_cache(maxsize=None)
def triangle_nodes(p):
    """Degree-``p`` nodes: vertices, then edge interiors per local face, then interior.

    Edge ``i`` nodes run from local vertex ``i+1`` towards ``i+2``.
    """
    if p < 0:
        raise InvalidArgumentError("degree must be nonnegative")
    if p == 0:
        return LagrangeNodeSet(0, np.zeros((1, 3), dtype=int))
    idx = [tuple(p if j == i else 0 for j in range(3)) for i in range(3)]
    for i in range(3):
        for k in range(1, p):
            a = [0, 0, 0]
            a[(i + 1) % 3] = p - k
            a[(i + 2) % 3] = k
            idx.append(tuple(a))
    for a in range(p - 1, 0, -1):
        for b in range(p - a - 1, 0, -1):
            idx.append((a, b, p - a - b))
    return LagrangeNodeSet(p, np.array(idx, dtype=int))


@lru_cache(maxsize=None)
def edge_nodes(p):
    """Degree-``p`` nodes on an edge, ordered by increasing ``t = mu_1``."""
    if p < 0:
        raise InvalidArgumentError("degree must be nonnegative")
    if p == 0:
        return LagrangeNodeSet(0, np.zeros((1, 2), dtype=int))
    return LagrangeNodeSet(p, np.array([(p - k, k) for k in range(p + 1)], dtype=int))


def n_triangle_nodes(p):
    return (p + 1) * (p + 2) // 2


@lru_cache(maxsize=None)
def _factor_polys(p):
    # L_a(t) = prod_{j<a} (p t - j) / (j + 1), a = 0..p, with two derivatives
    out = []
    for a in range(p + 1):
        c = np.polynomial.Polynomial([1.0])
        for j in range(a):
            c = c * np.polynomial.Polynomial([-j / (j + 1), p / (j + 1)])
        out.append((c, c.deriv(1), c.deriv(2)))
    return out


def lagrange_tabulate(p, bary, order=0):
    """Tabulate the degree-``p`` Lagrange basis on a simplex.

    Parameters
    ----------
    p : int
    bary : (npts, n+1) array
        Barycentric coordinates; ``n + 1 = 3`` for triangles, ``2`` for edges.
    order : int
        Highest derivative order (0, 1 or 2) with respect to the barycentric
        coordinates, treated as independent variables.

    Returns
    -------
    list
        ``[values (nloc, npts)]`` followed by ``(nloc, npts, n+1)`` and
        ``(nloc, npts, n+1, n+1)`` derivative arrays up to ``order``.
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    k = bary.shape[1]
    nodes = triangle_nodes(p) if k == 3 else edge_nodes(p)
    A = nodes.multi_indices
    nloc, npts = len(A), len(bary)
    if p == 0:
        out = [np.ones((1, npts))]
        if order >= 1:
            out.append(np.zeros((1, npts, k)))
        if order >= 2:
            out.append(np.zeros((1, npts, k, k)))
        return out
    polys = _factor_polys(p)
    F = np.empty((3, p + 1, k, npts))  # derivative order, exponent, coordinate, point
    for a in range(p + 1):
        for d in range(3):
            F[d, a] = polys[a][d](bary.T)
    cols = np.arange(k)
    f0 = F[0][A, cols]  # (nloc, k, npts)
    vals = f0.prod(axis=1)
    out = [vals]
    if order >= 1:
        f1 = F[1][A, cols]
        grad = np.empty((nloc, npts, k))
        for i in range(k):
            others = np.delete(f0, i, axis=1).prod(axis=1)
            grad[:, :, i] = f1[:, i] * others
        out.append(grad)
    if order >= 2:
        f2 = F[2][A, cols]
        hess = np.empty((nloc, npts, k, k))
        for i in range(k):
            for j in range(k):
                if i == j:
                    rest = np.delete(f0, i, axis=1).prod(axis=1)
                    hess[:, :, i, i] = f2[:, i] * rest
                else:
                    rest = np.delete(f0, [i, j], axis=1).prod(axis=1)
                    hess[:, :, i, j] = f1[:, i] * f1[:, j] * rest
        out.append(hess)
    return out


def lagrange_eval(p, node, point):
    """Value and barycentric gradient of the basis function attached to ``node``.

    ``node`` and ``point`` are given in barycentric coordinates.
    """
    point = np.asarray(point, dtype=float)
    k = point.shape[-1]
    nodes = triangle_nodes(p) if k == 3 else edge_nodes(p)
    node = np.asarray(node, dtype=float)
    hit = np.flatnonzero(np.all(np.abs(nodes.nodes - node) < 1e-10, axis=1))
    if len(hit) != 1:
        raise InvalidArgumentError(f"{node.tolist()} is not a degree-{p} Lagrange node")
    vals, grads = lagrange_tabulate(p, point[None, :], order=1)
    return float(vals[hit[0], 0]), grads[hit[0], 0]


def lagrange_interpolation_matrix(p_src, p_dst):
    """``M[i, j] = psi_j^{p_src}(y_i)`` for the degree-``p_dst`` triangle nodes ``y_i``."""
    return lagrange_tabulate(p_src, triangle_nodes(p_dst).nodes)[0].T


# ----------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric, (nq, n+1)
    weights: np.ndarray  # sum to 1
    degree: int

    def integrate(self, values, measure=1.0):
        return measure * np.tensordot(values, self.weights, axes=([-1], [0]))


@lru_cache(maxsize=None)
def quad_rule_edge(degree):
    """Gauss-Legendre rule on an edge; symmetric under ``t -> 1 - t``."""
    if degree < 0 or degree > MAX_EDGE_DEGREE:
        raise UnsupportedDegreeError(
            f"edge rules support degree 0..{MAX_EDGE_DEGREE}, got {degree}")
    n = max(1, (degree + 2) // 2)
    x, w = roots_legendre(n)
    t = 0.5 * (x + 1.0)
    pts = np.column_stack([1.0 - t, t])
    pts.setflags(write=False)
    w = w / 2.0
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def quad_rule_triangle(degree):
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule on a triangle."""
    if degree < 0 or degree > MAX_TRIANGLE_DEGREE:
        raise UnsupportedDegreeError(
            f"triangle rules support degree 0..{MAX_TRIANGLE_DEGREE}, got {degree}")
    n = max(1, (degree + 2) // 2)
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    xt, wt = roots_legendre(n)
    s = 0.5 * (xs + 1.0)
    t = 0.5 * (xt + 1.0)
    S, T = np.meshgrid(s, t, indexing="ij")
    l1 = S.ravel()
    l2 = ((1.0 - S) * T).ravel()
    pts = np.column_stack([1.0 - l1 - l2, l1, l2])
    w = (np.outer(ws, wt) / 4.0).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def quad_rule_triangle_split(degree):
    """Composite rule on the three subtriangles ``conv(v_{i+1}, v_{i+2}, barycenter)``.

    Exact for functions that are polynomials of the given degree on each
    subtriangle (e.g. Hsieh-Clough-Tocher functions and their derivatives).
    Points of subtriangle ``i`` satisfy ``lambda_i < lambda_j`` for ``j != i``.
    """
    base = quad_rule_triangle(degree)
    c = np.full(3, 1.0 / 3.0)
    pts, wts = [], []
    for i in range(3):
        corners = np.array([np.eye(3)[(i + 1) % 3], np.eye(3)[(i + 2) % 3], c])
        pts.append(base.points @ corners)
        wts.append(base.weights / 3.0)
    pts = np.vstack(pts)
    w = np.concatenate(wts)
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


def face_barycentric(local_face, t):
    """Barycentric coordinates in the element of points ``t`` on local face ``i``."""
    t = np.asarray(t, dtype=float)
    b = np.zeros((len(t), 3))
    b[:, (local_face + 1) % 3] = 1.0 - t
    b[:, (local_face + 2) % 3] = t
    return b
