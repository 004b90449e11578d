"""Conforming triangulations of planar polygons with an enumerated skeleton.

Local conventions used throughout the package:

* element ``K = (v0, v1, v2)`` is stored counterclockwise;
* local face ``i`` of ``K`` is the edge opposite ``v_i``, traversed from
  ``v_{i+1}`` to ``v_{i+2}`` (indices mod 3);
* a global face stores its vertices ``(a, b)`` with ``a < b`` and is
  parametrised by ``t in [0, 1]`` from ``a`` to ``b``;
* the face normal points out of the adjacent element with the smaller
  index (``K1``); on boundary faces this is the outer normal of the domain.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConformityError, InvalidArgumentError, MeshFormatError


@dataclass(frozen=True)
class Face:
    vertices: tuple
    elements: tuple
    normal: np.ndarray
    length: float
    midpoint: np.ndarray
    boundary: bool


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable 2D simplicial mesh.

    Parameters
    ----------
    vertices : (nv, 2) array_like
    elements : (ne, 3) array_like of int
        Vertex indices, counterclockwise.

    Attributes
    ----------
    face_vertices : (nf, 2) int
    face_elements : (nf, 2) int
        ``K1, K2`` with ``K1 < K2``; ``K2 = -1`` on boundary faces.
    face_local : (nf, 2) int
        Local face index of the face in ``K1`` / ``K2`` (``-1`` if absent).
    element_faces : (ne, 3) int
    element_face_sign : (ne, 3) int
        ``+1`` where the face normal is outward for the element.
    element_face_flip : (ne, 3) bool
        ``True`` where the local traversal direction is ``b -> a``.
    """

    def __init__(self, vertices, elements):
        vertices = np.asarray(vertices, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvalidArgumentError("vertices must have shape (nv, 2)")
        if elements.ndim != 2 or elements.shape[1] != 3 or len(elements) == 0:
            raise InvalidArgumentError("elements must have shape (ne, 3), ne >= 1")
        if elements.min() < 0 or elements.max() >= len(vertices):
            raise InvalidArgumentError("element references a missing vertex")
        self.vertices = _frozen(vertices)
        self.elements = _frozen(elements)
        self._build_geometry()
        self._build_skeleton()

    # ------------------------------------------------------------------
    def _build_geometry(self):
        P = self.vertices[self.elements]  # (ne, 3, 2)
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        self.signed_areas = _frozen(0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))
        self.areas = _frozen(np.abs(self.signed_areas))
        # edge lengths, local edge i opposite vertex i
        L = np.stack([
            np.linalg.norm(P[:, 2] - P[:, 1], axis=1),
            np.linalg.norm(P[:, 0] - P[:, 2], axis=1),
            np.linalg.norm(P[:, 1] - P[:, 0], axis=1),
        ], axis=1)
        self.element_diameters = _frozen(L.max(axis=1))
        # diameter of the inscribed circle
        with np.errstate(divide="ignore", invalid="ignore"):
            self.element_inball = _frozen(4.0 * self.areas / L.sum(axis=1))
            self.element_gamma = _frozen(self.element_diameters / self.element_inball)
        self.centroids = _frozen(P.mean(axis=1))
        # gradients of barycentric coordinates: (ne, 3, 2)
        J = np.stack([e1, e2], axis=2)  # columns are edge vectors
        with np.errstate(divide="ignore", invalid="ignore"):
            Jinv = np.linalg.inv(J) if len(J) and np.all(self.areas > 0) else None
        if Jinv is not None:
            g1, g2 = Jinv[:, 0, :], Jinv[:, 1, :]
            self.grad_lambda = _frozen(np.stack([-g1 - g2, g1, g2], axis=1))
        else:
            self.grad_lambda = None

    def _build_skeleton(self):
        E = self.elements
        ne = len(E)
        loc_a = E[:, [1, 2, 0]]
        loc_b = E[:, [2, 0, 1]]
        lo = np.minimum(loc_a, loc_b).ravel()
        hi = np.maximum(loc_a, loc_b).ravel()
        key = lo * len(self.vertices) + hi
        uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        self._overfull_faces = np.flatnonzero(counts > 2)
        nf = len(uniq)
        fv = np.stack([uniq // len(self.vertices), uniq % len(self.vertices)], axis=1)
        elem_of = np.repeat(np.arange(ne), 3)
        local_of = np.tile(np.arange(3), ne)
        order = np.lexsort((elem_of, inverse))
        fe = -np.ones((nf, 2), dtype=np.int64)
        fl = -np.ones((nf, 2), dtype=np.int64)
        inv_sorted = inverse[order]
        start = np.searchsorted(inv_sorted, np.arange(nf))
        slot = np.arange(len(order)) - start[inv_sorted]
        keep = slot < 2
        fe[inv_sorted[keep], slot[keep]] = elem_of[order][keep]
        fl[inv_sorted[keep], slot[keep]] = local_of[order][keep]
        self.face_vertices = _frozen(fv)
        self.face_elements = _frozen(fe)
        self.face_local = _frozen(fl)
        self.element_faces = _frozen(inverse.reshape(ne, 3))
        self.boundary_faces_mask = _frozen(fe[:, 1] < 0)

        A = self.vertices[fv[:, 0]]
        B = self.vertices[fv[:, 1]]
        t = B - A
        lengths = np.linalg.norm(t, axis=1)
        n = np.stack([t[:, 1], -t[:, 0]], axis=1) / lengths[:, None]
        mid = 0.5 * (A + B)
        opp = self.vertices[E[fe[:, 0], fl[:, 0]]]
        outward = np.einsum("fd,fd->f", mid - opp, n) > 0
        n[~outward] *= -1
        self.face_normals = _frozen(n)
        self.face_lengths = _frozen(lengths)
        self.face_midpoints = _frozen(mid)

        sign = np.where(fe[self.element_faces, 0] == np.arange(ne)[:, None], 1, -1)
        self.element_face_sign = _frozen(sign)
        self.element_face_flip = _frozen(loc_a != fv[self.element_faces, 0])

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return len(self.face_vertices)

    @property
    def interior_faces(self):
        return np.flatnonzero(~self.boundary_faces_mask)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.boundary_faces_mask)

    @property
    def boundary_vertices_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.face_vertices[self.boundary_faces].ravel()] = True
        return mask

    @property
    def gamma(self):
        """Shape coefficient: max over elements of diameter / inball diameter."""
        return float(self.element_gamma.max())

    @property
    def h_max(self):
        return float(self.element_diameters.max())

    def face(self, f):
        K1, K2 = self.face_elements[f]
        elements = (int(K1),) if K2 < 0 else (int(K1), int(K2))
        return Face(
            vertices=tuple(int(v) for v in self.face_vertices[f]),
            elements=elements,
            normal=self.face_normals[f].copy(),
            length=float(self.face_lengths[f]),
            midpoint=self.face_midpoints[f].copy(),
            boundary=bool(K2 < 0),
        )

    def to_barycentric(self, K, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        P = self.vertices[self.elements[K]]
        l12 = (points - P[0]) @ self.grad_lambda[K][1:].T
        return np.column_stack([1.0 - l12.sum(axis=1), l12])

    def to_physical(self, K, bary):
        bary = np.atleast_2d(bary)
        return bary @ self.vertices[self.elements[K]]

    def __repr__(self):
        return (f"Mesh(nv={self.n_vertices}, ne={self.n_elements}, nf={self.n_faces}, "
                f"h_max={self.h_max:.4g}, gamma={self.gamma:.4g})")


# ----------------------------------------------------------------------
def build_structured_unit_square(n):
    """``2 n^2`` triangles on the unit square, diagonals from lower left to upper right."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ll = (j * (n + 1) + i).ravel()
    lr, ul = ll + 1, ll + n + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, elements)


def refine_uniform(mesh):
    """Red refinement: every triangle is split into four by its edge midpoints."""
    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, mesh.face_midpoints])
    v = mesh.elements
    m = nv + mesh.element_faces  # m[:, i] is the midpoint of the edge opposite v_i
    children = np.stack([
        np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([m[:, 2], v[:, 1], m[:, 0]]),
        np.column_stack([m[:, 1], m[:, 0], v[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ], axis=1).reshape(-1, 3)
    return Mesh(vertices, children)


# ----------------------------------------------------------------------
def validate(mesh, tol=1e-12):
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    bad = np.flatnonzero(mesh.signed_areas <= 0)
    for K in bad:
        problems.append(f"element {K} has nonpositive signed area {mesh.signed_areas[K]:.3e}")
    for f in mesh._overfull_faces:
        a, b = mesh.face_vertices[f]
        problems.append(f"edge ({a}, {b}) is shared by more than two elements")
    sorted_elems = np.sort(mesh.elements, axis=1)
    _, first, counts = np.unique(sorted_elems, axis=0, return_index=True, return_counts=True)
    for i in np.flatnonzero(counts > 1):
        problems.append(f"element {first[i]} is duplicated")
    problems.extend(_hanging_node_problems(mesh, tol))
    if not problems and mesh.grad_lambda is not None:
        gamma = float(np.max(mesh.element_diameters / mesh.element_inball))
        if abs(gamma - mesh.gamma) > 1e-12 * gamma:
            problems.append("stored shape coefficient does not match recomputation")
        if np.any(np.abs(np.linalg.norm(mesh.face_normals, axis=1) - 1) > 1e-14):
            problems.append("face normals are not unit vectors")
    return problems


def _hanging_node_problems(mesh, tol):
    problems = []
    faces = mesh.boundary_faces  # a hanging node always sits on a one-sided face
    if len(faces) == 0:
        return problems
    A = mesh.vertices[mesh.face_vertices[faces, 0]]
    B = mesh.vertices[mesh.face_vertices[faces, 1]]
    V = mesh.vertices
    d = B - A
    L2 = np.einsum("fd,fd->f", d, d)
    s = np.einsum("vd,fd->fv", V, d) - np.einsum("fd,fd->f", A, d)[:, None]
    s = s / L2[:, None]
    cross = (d[:, None, 0] * (V[None, :, 1] - A[:, None, 1])
             - d[:, None, 1] * (V[None, :, 0] - A[:, None, 0]))
    dist = np.abs(cross) / np.sqrt(L2)[:, None]
    scale = np.sqrt(L2)[:, None]
    hit = (s > tol) & (s < 1 - tol) & (dist < tol * scale)
    for fi, vi in zip(*np.nonzero(hit)):
        f = faces[fi]
        K = int(mesh.face_elements[f, 0])
        others = [int(k) for k in np.flatnonzero((mesh.elements == vi).any(axis=1)) if k != K]
        other = others[0] if others else -1
        problems.append(
            f"hanging node: vertex {vi} lies inside edge {tuple(mesh.face_vertices[f])} "
            f"of element {K}; nonconforming element pair ({K}, {other})"
        )
    return problems


def check_conforming(mesh):
    problems = validate(mesh)
    if problems:
        pairs = []
        for msg in problems:
            if "element pair" in msg:
                a, b = msg.rsplit("(", 1)[1].rstrip(")").split(",")
                pairs.append((int(a), int(b)))
        raise ConformityError("; ".join(problems), pairs)
    return mesh


# ----------------------------------------------------------------------
def load_mesh(path):
    """Read the plain text format ``nv ne`` / ``x y`` lines / ``i j k`` lines.

    Clockwise triangles are reordered with a warning; nonconforming meshes
    raise :class:`ConformityError`.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    return parse_mesh(lines)


def parse_mesh(lines):
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise MeshFormatError("empty mesh file", line=1)
    lineno, head = rows[0]
    try:
        nv, ne = (int(t) for t in head)
    except ValueError:
        raise MeshFormatError("header must be 'nv ne'", line=lineno) from None
    if len(rows) < 1 + nv + ne:
        raise MeshFormatError(f"expected {nv} vertex and {ne} element lines",
                              line=rows[-1][0] + 1)
    vertices = np.empty((nv, 2))
    for k in range(nv):
        lineno, tok = rows[1 + k]
        try:
            if len(tok) != 2:
                raise ValueError
            vertices[k] = [float(t) for t in tok]
        except ValueError:
            raise MeshFormatError("vertex line must be 'x y'", line=lineno) from None
    elements = np.empty((ne, 3), dtype=np.int64)
    for k in range(ne):
        lineno, tok = rows[1 + nv + k]
        try:
            if len(tok) != 3:
                raise ValueError
            elements[k] = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError("element line must be 'i j k'", line=lineno) from None
        if elements[k].min() < 0 or elements[k].max() >= nv:
            raise MeshFormatError("vertex index out of range", line=lineno)
    P = vertices[elements]
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    cw = np.flatnonzero(signed < 0)
    if len(cw):
        warnings.warn(f"reoriented {len(cw)} clockwise element(s): {cw[:10].tolist()}",
                      stacklevel=3)
        elements[cw] = elements[cw][:, [0, 2, 1]]
    if np.any(signed == 0):
        raise MeshFormatError(f"degenerate element {int(np.flatnonzero(signed == 0)[0])}")
    return check_conforming(Mesh(vertices, elements))


def write_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.elements:
            fh.write(f"{i} {j} {k}\n")
