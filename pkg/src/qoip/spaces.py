"""Finite element spaces, functions and skeleton traces on 2D meshes.

Every space exposes ``cell_dofs`` of shape ``(ne, nloc)`` (``-1`` marks a
local function eliminated by a homogeneous boundary condition) and
``tabulate(bary, order)`` returning element-wise basis values and
derivatives at points given in barycentric coordinates::

    values    (ne, nloc, npts) + value_shape
    gradients (ne, nloc, npts) + value_shape + (2,)
    hessians  (ne, nloc, npts) + value_shape + (2, 2)
"""
from __future__ import annotations

import numpy as np

from .basis import (
    face_barycentric,
    lagrange_tabulate,
    n_triangle_nodes,
    quad_rule_edge,
    triangle_nodes,
)
from .errors import InvalidArgumentError


class FeSpace:
    kind = "abstract"
    value_shape = ()
    degree = 0
    conforming = False  # H^1-conforming

    def __init__(self, mesh):
        self.mesh = mesh

    @property
    def nloc(self):
        return self.cell_dofs.shape[1]

    @property
    def value_dim(self):
        return int(np.prod(self.value_shape)) if self.value_shape else 1

    def tabulate(self, bary, order=1):
        raise NotImplementedError

    def zero(self):
        return FeFunction(self, np.zeros(self.dof_count))

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r}, dofs={self.dof_count})"


# ----------------------------------------------------------------------
# Lagrange
# ----------------------------------------------------------------------
def _lagrange_global_nodes(mesh, p):
    """Conforming node numbering: vertices, edge interiors, element interiors."""
    ne, nv, nf = mesh.n_elements, mesh.n_vertices, mesh.n_faces
    nloc = n_triangle_nodes(p)
    G = np.empty((ne, nloc), dtype=np.int64)
    G[:, :3] = mesh.elements
    col = 3
    for i in range(3):
        f = mesh.element_faces[:, i]
        flip = mesh.element_face_flip[:, i]
        for k in range(1, p):
            kg = np.where(flip, p - k, k)
            G[:, col] = nv + f * (p - 1) + (kg - 1)
            col += 1
    n_int = nloc - col
    G[:, col:] = nv + nf * max(p - 1, 0) + np.arange(ne)[:, None] * n_int + np.arange(n_int)
    n_nodes = nv + nf * max(p - 1, 0) + ne * n_int
    boundary = np.zeros(n_nodes, dtype=bool)
    boundary[mesh.boundary_vertices_mask.nonzero()[0]] = True
    for f in mesh.boundary_faces:
        boundary[nv + f * (p - 1): nv + (f + 1) * (p - 1)] = True
    return G, n_nodes, boundary


class LagrangeSpace(FeSpace):
    """Degree-``p`` Lagrange elements, broken or conforming (optionally with zero trace)."""

    def __init__(self, mesh, p, broken=False, bc=True):
        super().__init__(mesh)
        if p < 1:
            raise InvalidArgumentError("Lagrange degree must be >= 1")
        self.degree = p
        self.broken = broken
        self.bc = bc and not broken
        self.conforming = not broken
        G, n_nodes, boundary = _lagrange_global_nodes(mesh, p)
        self.global_nodes = G
        self.n_nodes = n_nodes
        self.boundary_nodes = boundary
        # owner of a node: the smallest element index containing it
        owner = np.full(n_nodes, mesh.n_elements, dtype=np.int64)
        np.minimum.at(owner, G.ravel(), np.repeat(np.arange(mesh.n_elements), G.shape[1]))
        self.node_owner = owner
        self.owner_mask = owner[G] == np.arange(mesh.n_elements)[:, None]
        if broken:
            self.kind = f"BrokenP({p})"
            nloc = G.shape[1]
            self.cell_dofs = np.arange(mesh.n_elements * nloc).reshape(-1, nloc)
            self.dof_count = mesh.n_elements * nloc
        else:
            free = ~boundary if self.bc else np.ones(n_nodes, dtype=bool)
            numbering = -np.ones(n_nodes, dtype=np.int64)
            numbering[free] = np.arange(free.sum())
            self.node_to_dof = numbering
            self.cell_dofs = numbering[G]
            self.dof_count = int(free.sum())
            self.kind = f"LagrangeP0BC({p})" if self.bc else f"LagrangeP({p})"

    def node_coordinates(self):
        """Physical coordinates of the local nodes, ``(ne, nloc, 2)``."""
        return np.einsum("li,eid->eld", triangle_nodes(self.degree).nodes,
                         self.mesh.vertices[self.mesh.elements])

    def tabulate(self, bary, order=1):
        ref = lagrange_tabulate(self.degree, bary, order)
        ne = self.mesh.n_elements
        out = [np.broadcast_to(ref[0], (ne,) + ref[0].shape)]
        G = self.mesh.grad_lambda
        if order >= 1:
            out.append(np.einsum("lqi,eid->elqd", ref[1], G))
        if order >= 2:
            out.append(np.einsum("lqij,eid,ejk->elqdk", ref[2], G, G))
        return out


def BrokenP(mesh, p):
    return LagrangeSpace(mesh, p, broken=True)


def LagrangeP0BC(mesh, p):
    return LagrangeSpace(mesh, p, broken=False, bc=True)


def LagrangeP(mesh, p):
    return LagrangeSpace(mesh, p, broken=False, bc=False)


# ----------------------------------------------------------------------
# Crouzeix-Raviart
# ----------------------------------------------------------------------
class CrouzeixRaviartSpace(FeSpace):
    """Scalar lowest-order Crouzeix-Raviart space with vanishing boundary face means.

    The local basis function of local face ``i`` is ``1 - 2 lambda_i``; the
    degree of freedom is the mean value over the face.
    """

    kind = "CrouzeixRaviart"
    degree = 1

    def __init__(self, mesh):
        super().__init__(mesh)
        interior = ~mesh.boundary_faces_mask
        self.face_to_dof = -np.ones(mesh.n_faces, dtype=np.int64)
        self.face_to_dof[interior] = np.arange(interior.sum())
        self.cell_dofs = self.face_to_dof[mesh.element_faces]
        self.dof_count = int(interior.sum())

    def tabulate(self, bary, order=1):
        bary = np.atleast_2d(bary)
        ne, npts = self.mesh.n_elements, len(bary)
        out = [np.broadcast_to((1.0 - 2.0 * bary).T, (ne, 3, npts))]
        if order >= 1:
            G = -2.0 * self.mesh.grad_lambda
            out.append(np.broadcast_to(G[:, :, None, :], (ne, 3, npts, 2)))
        if order >= 2:
            out.append(np.zeros((ne, 3, npts, 2, 2)))
        return out


class VectorSpace(FeSpace):
    """Two-component product of a scalar space, numbered component-blocked."""

    value_shape = (2,)

    def __init__(self, base, kind=None):
        super().__init__(base.mesh)
        self.base = base
        self.kind = kind or f"{base.kind}^2"
        self.degree = base.degree
        self.conforming = base.conforming
        n = base.dof_count
        bd = base.cell_dofs
        self.n_scalar = n
        self.cell_dofs = np.hstack([bd, np.where(bd >= 0, bd + n, -1)])
        self.dof_count = 2 * n

    def tabulate(self, bary, order=1):
        tab = self.base.tabulate(bary, order)
        out = []
        for t in tab:
            ne, nl, nq = t.shape[:3]
            v = np.zeros((ne, 2 * nl, nq, 2) + t.shape[3:])
            v[:, :nl, :, 0] = t
            v[:, nl:, :, 1] = t
            out.append(v)
        return out


def CrouzeixRaviartVec(mesh):
    return VectorSpace(CrouzeixRaviartSpace(mesh), kind="CrouzeixRaviartVec")


# ----------------------------------------------------------------------
# Hsieh-Clough-Tocher
# ----------------------------------------------------------------------
_MONO = np.array([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
                  (3, 0), (2, 1), (1, 2), (0, 3)])


def _monomials(xi, order):
    """Cubic monomials in scaled coordinates; derivatives w.r.t. the scaled variables."""
    x, y = xi[..., 0, None], xi[..., 1, None]
    a, b = _MONO[:, 0], _MONO[:, 1]

    def pw(base, e):
        return np.where(e >= 0, base ** np.maximum(e, 0), 0.0)

    out = [pw(x, a) * pw(y, b)]
    if order >= 1:
        out.append(np.stack([a * pw(x, a - 1) * pw(y, b),
                             b * pw(x, a) * pw(y, b - 1)], axis=-1))
    if order >= 2:
        hxx = a * (a - 1) * pw(x, a - 2) * pw(y, b)
        hxy = a * b * pw(x, a - 1) * pw(y, b - 1)
        hyy = b * (b - 1) * pw(x, a) * pw(y, b - 2)
        out.append(np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2))
    return out


class HCTSpace(FeSpace):
    """C^1 piecewise cubics on the barycentric 3-split of every triangle.

    Degrees of freedom: value and both Cartesian partial derivatives at every
    vertex, and the derivative along the global face normal at every face
    midpoint. With ``bc=True`` (clamped) all boundary degrees of freedom are
    removed. Local shape functions are obtained per element from a dense
    solve: the kernel of the internal C^1 matching conditions is computed by
    SVD and then dualised against the 12 degrees of freedom.
    """

    degree = 3
    conforming = True

    def __init__(self, mesh, bc=True):
        super().__init__(mesh)
        self.kind = "HCT"
        self.bc = bc
        nv, nf = mesh.n_vertices, mesh.n_faces
        vfree = ~mesh.boundary_vertices_mask if bc else np.ones(nv, dtype=bool)
        ffree = ~mesh.boundary_faces_mask if bc else np.ones(nf, dtype=bool)
        vnum = -np.ones(nv, dtype=np.int64)
        vnum[vfree] = np.arange(vfree.sum())
        fnum = -np.ones(nf, dtype=np.int64)
        fnum[ffree] = 3 * vfree.sum() + np.arange(ffree.sum())
        self.vertex_to_dof = vnum
        self.face_to_dof = fnum
        self.dof_count = int(3 * vfree.sum() + ffree.sum())
        vd = vnum[mesh.elements]  # (ne, 3)
        cell = np.empty((mesh.n_elements, 12), dtype=np.int64)
        for j in range(3):
            for c in range(3):
                cell[:, 3 * j + c] = np.where(vd[:, j] >= 0, 3 * vd[:, j] + c, -1)
        cell[:, 9:] = fnum[mesh.element_faces]
        self.cell_dofs = cell
        self._build_local_bases()

    def _build_local_bases(self):
        mesh = self.mesh
        P = mesh.vertices[mesh.elements]  # (ne, 3, 2)
        c = mesh.centroids
        h = mesh.element_diameters
        ne = mesh.n_elements
        self._center, self._scale = c, h

        def scaled(x):
            return (x - c[:, None, :]) / h[:, None, None]

        s = np.array([0.15, 0.4, 0.65, 0.9])
        rows = []
        for j in range(3):
            # internal edge from the barycenter to vertex j, between subtriangles j+1, j+2
            pts = c[:, None, :] + s[None, :, None] * (P[:, j, None, :] - c[:, None, :])
            v, g = _monomials(scaled(pts), 1)
            blk = np.zeros((ne, len(s), 3, 30))
            for sub, sgn in (((j + 1) % 3, 1.0), ((j + 2) % 3, -1.0)):
                sl = slice(10 * sub, 10 * sub + 10)
                blk[:, :, 0, sl] = sgn * v
                blk[:, :, 1, sl] = sgn * g[..., 0]
                blk[:, :, 2, sl] = sgn * g[..., 1]
            rows.append(blk.reshape(ne, -1, 30))
        C = np.concatenate(rows, axis=1)
        _, sv, Vt = np.linalg.svd(C)
        if np.any(sv[:, 17] < 1e-8 * sv[:, 0]) or np.any(sv[:, 18] > 1e-10 * sv[:, 0]):
            raise RuntimeError("unexpected rank of the HCT matching conditions")
        N = np.transpose(Vt[:, 18:, :], (0, 2, 1))  # (ne, 30, 12)

        D = np.zeros((ne, 12, 30))
        for j in range(3):
            sub = (j + 1) % 3
            sl = slice(10 * sub, 10 * sub + 10)
            v, g = _monomials(scaled(P[:, j, None, :]), 1)
            D[:, 3 * j, sl] = v[:, 0]
            D[:, 3 * j + 1, sl] = g[:, 0, :, 0] / h[:, None]
            D[:, 3 * j + 2, sl] = g[:, 0, :, 1] / h[:, None]
        for i in range(3):
            f = mesh.element_faces[:, i]
            m = mesh.face_midpoints[f]
            n = mesh.face_normals[f]
            _, g = _monomials(scaled(m[:, None, :]), 1)
            sl = slice(10 * i, 10 * i + 10)
            D[:, 9 + i, sl] = np.einsum("emd,ed->em", g[:, 0], n) / h[:, None]
        coef = N @ np.linalg.inv(D @ N)  # (ne, 30, 12)
        self._coef = np.transpose(coef.reshape(ne, 3, 10, 12), (0, 3, 1, 2))  # (ne,12,3,10)

    def tabulate(self, bary, order=1, sub=None):
        """``sub`` forces the subtriangle per point; by default the one whose
        opposite barycentric coordinate is smallest."""
        bary = np.atleast_2d(bary)
        mesh = self.mesh
        if sub is None:
            sub = np.argmin(bary, axis=1)
        x = np.einsum("qi,eid->eqd", bary, mesh.vertices[mesh.elements])
        xi = (x - self._center[:, None, :]) / self._scale[:, None, None]
        mono = _monomials(xi, order)
        cf = self._coef[:, :, sub, :]  # (ne, 12, npts, 10)
        h = self._scale
        out = [np.einsum("ebqm,eqm->ebq", cf, mono[0])]
        if order >= 1:
            out.append(np.einsum("ebqm,eqmd->ebqd", cf, mono[1]) / h[:, None, None, None])
        if order >= 2:
            out.append(np.einsum("ebqm,eqmdk->ebqdk", cf, mono[2])
                       / h[:, None, None, None, None] ** 2)
        return out


# ----------------------------------------------------------------------
# Functions
# ----------------------------------------------------------------------
class FeFunction:
    """A space together with a coefficient vector."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.dof_count,):
            raise InvalidArgumentError(
                f"expected {space.dof_count} coefficients, got shape {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    def local_coeffs(self):
        cd = self.space.cell_dofs
        return np.where(cd >= 0, self.coeffs[np.maximum(cd, 0)], 0.0)

    def evaluate(self, bary, order=0):
        """Values (and derivatives) on every element at shared barycentric points."""
        tab = self.space.tabulate(bary, order)
        c = self.local_coeffs()
        return [np.einsum("el...,el->e...", t, c) for t in tab]

    def _element_points(self, K, points):
        bary = self.space.mesh.to_barycentric(K, points)
        if np.any(bary < -1e-12):
            raise InvalidArgumentError(f"point outside element {K}")
        return bary

    def _eval_on(self, K, points, which):
        bary = self._element_points(K, points)
        tab = self.space.tabulate(bary, which)[which][K]
        c = self.local_coeffs()[K]
        return np.einsum("l...,l->...", tab, c)

    def eval(self, K, points):
        return self._eval_on(K, points, 0)

    def eval_grad(self, K, points):
        return self._eval_on(K, points, 1)

    def eval_hessian(self, K, points):
        return self._eval_on(K, points, 2)

    def __add__(self, other):
        return FeFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FeFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return FeFunction(self.space, a * self.coeffs)

    __rmul__ = __mul__


def interpolate(space, u, grad=None):
    """Apply the degrees of freedom of ``space`` to a callable ``u(points)``.

    ``u`` maps an ``(npts, 2)`` array to ``(npts,)`` (or ``(npts, 2)`` for
    vector spaces). HCT spaces also need ``grad`` returning ``(npts, 2)``.
    """
    mesh = space.mesh
    if isinstance(space, LagrangeSpace):
        X = space.node_coordinates()
        if space.broken:
            vals = np.asarray(u(X.reshape(-1, 2)), dtype=float)
            return FeFunction(space, vals.ravel())
        coeffs = np.zeros(space.dof_count)
        mask = space.owner_mask & (space.cell_dofs >= 0)
        coeffs[space.cell_dofs[mask]] = np.asarray(u(X[mask]), dtype=float)
        return FeFunction(space, coeffs)
    if isinstance(space, VectorSpace):
        parts = [interpolate(space.base, lambda X, c=c: np.asarray(u(X))[:, c]).coeffs
                 for c in range(2)]
        return FeFunction(space, np.concatenate(parts))
    if isinstance(space, CrouzeixRaviartSpace):
        rule = quad_rule_edge(12)
        faces = np.flatnonzero(space.face_to_dof >= 0)
        A = mesh.vertices[mesh.face_vertices[faces, 0]]
        B = mesh.vertices[mesh.face_vertices[faces, 1]]
        t = rule.points[:, 1]
        X = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]
        vals = np.asarray(u(X.reshape(-1, 2)), dtype=float).reshape(len(faces), len(t))
        coeffs = np.zeros(space.dof_count)
        coeffs[space.face_to_dof[faces]] = vals @ rule.weights
        return FeFunction(space, coeffs)
    if isinstance(space, HCTSpace):
        if grad is None:
            raise InvalidArgumentError("HCT interpolation needs the gradient")
        coeffs = np.zeros(space.dof_count)
        v = np.flatnonzero(space.vertex_to_dof >= 0)
        X = mesh.vertices[v]
        d = 3 * space.vertex_to_dof[v]
        coeffs[d] = u(X)
        g = np.asarray(grad(X))
        coeffs[d + 1] = g[:, 0]
        coeffs[d + 2] = g[:, 1]
        f = np.flatnonzero(space.face_to_dof >= 0)
        gm = np.asarray(grad(mesh.face_midpoints[f]))
        coeffs[space.face_to_dof[f]] = np.einsum("fd,fd->f", gm, mesh.face_normals[f])
        return FeFunction(space, coeffs)
    raise InvalidArgumentError(f"cannot interpolate into {space!r}")


# ----------------------------------------------------------------------
# Skeleton traces
# ----------------------------------------------------------------------
def jump_average_weights(mesh):
    """Per-face side weights: ``jump = sum_s wj[s] v_s``, ``avg = sum_s wa[s] v_s``.

    Interior faces: jump ``v1 - v2``, average ``(v1 + v2) / 2``; boundary
    faces: both equal the one-sided trace.
    """
    bnd = mesh.boundary_faces_mask
    wj = np.where(bnd[:, None], [1.0, 0.0], [1.0, -1.0])
    wa = np.where(bnd[:, None], [1.0, 0.0], [0.5, 0.5])
    return wj, wa


class FaceTraces:
    """Traces of a space's local basis on both sides of every face.

    Arrays are indexed ``[face, side, local, q, ...]`` with quadrature
    points ordered along the global face parametrisation. The missing side
    of a boundary face carries zeros and dofs ``-1``.
    """

    def __init__(self, space, degree, order=1):
        mesh = space.mesh
        self.rule = quad_rule_edge(degree)
        t = self.rule.points[:, 1]
        nq = len(t)
        tabs = [space.tabulate(face_barycentric(i, t), order) for i in range(3)]
        fe, fl = mesh.face_elements, mesh.face_local
        nf = mesh.n_faces
        self.dofs = -np.ones((nf, 2, space.nloc), dtype=np.int64)
        self.data = []
        for d in range(order + 1):
            shape = tabs[0][d].shape[1:]
            arr = np.zeros((nf, 2) + shape)
            for s in range(2):
                K = fe[:, s]
                ok = K >= 0
                Kv, iv = K[ok], fl[ok, s]
                stacked = np.stack([tabs[i][d] for i in range(3)])
                sel = stacked[iv, Kv]
                flip = mesh.element_face_flip[Kv, iv]
                sel[flip] = sel[flip][:, :, ::-1]
                arr[ok, s] = sel
                if d == 0:
                    self.dofs[ok, s] = space.cell_dofs[Kv]
            self.data.append(arr)
        A = mesh.vertices[mesh.face_vertices[:, 0]]
        B = mesh.vertices[mesh.face_vertices[:, 1]]
        self.points = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]
        self.weights = self.rule.weights[None, :] * mesh.face_lengths[:, None]  # (nf, nq)
        self.nq = nq

    @property
    def values(self):
        return self.data[0]

    @property
    def gradients(self):
        return self.data[1]

    @property
    def hessians(self):
        return self.data[2]


def face_moment(fe, face, q, mode="jump", degree=None):
    """``int_F q [fe]`` or ``int_F q {fe}`` with ``q`` given by edge-Lagrange coefficients.

    On boundary faces both modes return ``int_F q * trace``.
    """
    from .basis import lagrange_tabulate as _tab

    q = np.atleast_1d(np.asarray(q, dtype=float))
    qdeg = len(q) - 1
    space = fe.space
    mesh = space.mesh
    degree = degree if degree is not None else qdeg + space.degree + 2
    rule = quad_rule_edge(degree)
    t = rule.points[:, 1]
    qv = _tab(qdeg, rule.points)[0].T @ q  # (nq,)
    c = fe.local_coeffs()
    total = 0.0
    for s, K in enumerate(mesh.face_elements[face]):
        if K < 0:
            continue
        i = mesh.face_local[face, s]
        tt = 1.0 - t if mesh.element_face_flip[K, i] else t
        tab = space.tabulate(face_barycentric(i, tt), 0)[0][K]
        trace = np.einsum("lq...,l->q...", tab, c[K])
        if mesh.face_elements[face, 1] < 0:
            w = 1.0
        elif mode == "jump":
            w = 1.0 if s == 0 else -1.0
        elif mode == "average":
            w = 0.5
        else:
            raise InvalidArgumentError(f"unknown mode {mode!r}")
        total = total + w * np.einsum("q...,q,q->...", trace, qv, rule.weights)
    return total * mesh.face_lengths[face]
