"""Smoothing operators mapping nonconforming test functions to conforming ones.

Every Lagrange-valued smoother is assembled once as a sparse matrix from
the source coefficient vector to the coefficients of the conforming target
space, so that applying it and pairing it with a load are both sparse
products. Nodes shared by several elements take their value from the
element with the smallest index that contains them.

Operators provided:

* ``nodal_averaging``: pick the value of the owner element at each free node;
* ``bubble_smoother``: face bubbles carrying face moments, then element
  bubbles correcting element moments;
* ``smoother_ep`` / ``smoother_ep_tilde``: averaging followed by a bubble
  correction of the residual;
* ``smoother_e1_vector``: the lowest-order operator applied to each
  component of a Crouzeix-Raviart field;
* ``smoother_ec0``: HCT averaging plus normal-derivative bubbles for
  quadratic C0 functions.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import (
    edge_nodes,
    face_barycentric,
    lagrange_interpolation_matrix,
    lagrange_tabulate,
    n_triangle_nodes,
    quad_rule_edge,
    quad_rule_triangle,
    triangle_nodes,
)
from .errors import InvalidArgumentError, NumericalFailureError
from .sparse_utils import scatter_blocks as _scatter
from .spaces import (
    CrouzeixRaviartSpace,
    FaceTraces,
    FeFunction,
    HCTSpace,
    LagrangeP0BC,
    LagrangeSpace,
    VectorSpace,
    jump_average_weights,
)

SUPPORTED_DEGREES = (1, 2, 3)


def _same_space(a, b):
    return a is b or (a.mesh is b.mesh and a.kind == b.kind and a.dof_count == b.dof_count)


def _owned_rows(space):
    return np.where(space.owner_mask, space.cell_dofs, -1)


def _checked_inv(G):
    if np.linalg.cond(G) > 1e12:
        raise NumericalFailureError("weighted Gram matrix is numerically singular")
    return np.linalg.inv(G)


# ----------------------------------------------------------------------
# Weighted projections
# ----------------------------------------------------------------------
@lru_cache(maxsize=None)
def _face_gram(p):
    """``G[j, k] = int_0^1 l_j l_k t (1 - t) dt`` for the degree ``p - 1`` edge basis."""
    rule = quad_rule_edge(2 * p + 2)
    L = lagrange_tabulate(p - 1, rule.points)[0]
    w = rule.weights * rule.points[:, 0] * rule.points[:, 1]
    return (L * w) @ L.T, _checked_inv((L * w) @ L.T)


@lru_cache(maxsize=None)
def _element_gram(p):
    """Gram matrix of the degree ``p - 2`` basis weighted by ``l0 l1 l2`` (area-normalised)."""
    rule = quad_rule_triangle(2 * p + 2)
    R = lagrange_tabulate(p - 2, rule.points)[0]
    w = rule.weights * rule.points.prod(axis=1)
    G = (R * w) @ R.T
    return G, _checked_inv(G)


def qf_project(mesh, face, v, p):
    """Face-bubble weighted projection onto polynomials of degree ``p - 1`` on a face.

    Parameters
    ----------
    mesh : Mesh
    face : int
    v : callable
        Maps ``(npts, 2)`` physical points on the face to values.
    p : int
        ``p >= 1``.

    Returns
    -------
    ndarray
        Edge-Lagrange coefficients (nodes ordered along the face
        parametrisation) of ``Q`` with ``int_F Q q Phi_F = int_F v q``.
    """
    if p < 1:
        raise InvalidArgumentError("p must be >= 1")
    a, b = mesh.vertices[mesh.face_vertices[face]]
    rule = quad_rule_edge(min(2 * p + 20, 40))
    t = rule.points[:, 1]
    vals = np.asarray(v(a + t[:, None] * (b - a)), dtype=float)
    L = lagrange_tabulate(p - 1, rule.points)[0]
    _, Ginv = _face_gram(p)
    return Ginv @ (L @ (rule.weights * vals))


def qk_project(mesh, K, v, p):
    """Element-bubble weighted projection onto polynomials of degree ``p - 2``.

    Returns triangle-Lagrange coefficients of ``Q`` with
    ``int_K Q r Phi_K = int_K v r``; for ``p = 1`` the range is ``{0}`` and
    an empty coefficient array is returned.
    """
    if p < 1:
        raise InvalidArgumentError("p must be >= 1")
    if p == 1:
        return np.zeros(0)
    rule = quad_rule_triangle(min(2 * p + 16, 30))
    X = mesh.to_physical(K, rule.points)
    vals = np.asarray(v(X), dtype=float)
    R = lagrange_tabulate(p - 2, rule.points)[0]
    _, Ginv = _element_gram(p)
    return Ginv @ (R @ (rule.weights * vals))


# ----------------------------------------------------------------------
# Operator containers
# ----------------------------------------------------------------------
class LinearSmoother:
    """Sparse linear map ``source coefficients -> target coefficients``."""

    def __init__(self, name, source, target, matrix):
        self.name = name
        self.source = source
        self.target = target
        self.matrix = matrix.tocsr()

    def apply(self, sigma):
        if not _same_space(sigma.space, self.source):
            raise InvalidArgumentError(f"{self.name} expects a function in {self.source!r}")
        return FeFunction(self.target, self.matrix @ sigma.coeffs)

    __call__ = apply

    def rhs(self, target_load):
        """Pull back a load vector on the target space: ``<f, E psi_i>``."""
        return self.matrix.T @ target_load

    def __repr__(self):
        return f"{type(self).__name__}({self.name}: {self.source.kind} -> {self.target.kind})"


def _check_broken(space):
    if not (isinstance(space, LagrangeSpace) and space.broken):
        raise InvalidArgumentError(f"expected a broken Lagrange space, got {space!r}")
    if space.degree not in SUPPORTED_DEGREES:
        raise InvalidArgumentError(f"degree {space.degree} not supported; use 1, 2 or 3")


class _Factory:
    """Per-source-space cache of the building blocks of the smoothers."""

    def __init__(self, source):
        self.source = source
        self.mesh = source.mesh
        self.p = source.degree
        self._targets = {}
        self._cache = {}

    def lagrange(self, q):
        if q not in self._targets:
            self._targets[q] = LagrangeP0BC(self.mesh, q)
        return self._targets[q]

    def cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # building blocks --------------------------------------------------
    def averaging(self, q):
        """``A_q``: broken degree-p coefficients -> free nodes of degree q."""
        def build():
            Q = self.lagrange(q)
            M = lagrange_interpolation_matrix(self.p, q)
            return _scatter(_owned_rows(Q), self.source.cell_dofs, M[None],
                            (Q.dof_count, self.source.dof_count))
        return self.cached(("A", q), build)

    def to_broken(self, q, p_out):
        """Conforming degree-q coefficients -> broken degree ``p_out`` coefficients."""
        def build():
            Q = self.lagrange(q)
            ne = self.mesh.n_elements
            n_out = n_triangle_nodes(p_out)
            rows = np.arange(ne * n_out).reshape(ne, n_out)
            M = lagrange_interpolation_matrix(q, p_out)
            return _scatter(rows, Q.cell_dofs, M[None], (ne * n_out, Q.dof_count))
        return self.cached(("J", q, p_out), build)

    def lift(self, q):
        """Conforming degree q -> conforming degree p+1 (exact embedding)."""
        def build():
            Q, T = self.lagrange(q), self.lagrange(self.p + 1)
            M = lagrange_interpolation_matrix(q, self.p + 1)
            return _scatter(_owned_rows(T), Q.cell_dofs, M[None], (T.dof_count, Q.dof_count))
        return self.cached(("I", q), build)

    def elevate(self):
        """Broken degree p -> broken degree p+1."""
        def build():
            ne = self.mesh.n_elements
            n_in, n_out = n_triangle_nodes(self.p), n_triangle_nodes(self.p + 1)
            M = lagrange_interpolation_matrix(self.p, self.p + 1)
            return sp.kron(sp.identity(ne, format="csr"), sp.csr_matrix(M), format="csr")
        return self.cached("elev", build)

    def face_bubbles(self):
        """``B_F``: broken degree-p coefficients -> conforming degree p+1."""
        return self.cached("BF", self._build_face_bubbles)

    def element_bubbles(self):
        """``B_M``: broken degree p+1 coefficients -> conforming degree p+1."""
        return self.cached("BM", self._build_element_bubbles)

    def bubble(self):
        def build():
            BF = self.face_bubbles()
            BM = self.element_bubbles()
            gather = self.to_broken(self.p + 1, self.p + 1)
            return (BF + BM @ (self.elevate() - gather @ BF)).tocsr()
        return self.cached("B", build)

    # ------------------------------------------------------------------
    def _build_face_bubbles(self):
        p, mesh = self.p, self.mesh
        T = self.lagrange(p + 1)
        Y = triangle_nodes(p + 1).nodes
        rule = quad_rule_edge(2 * p + 2)
        t = rule.points[:, 1]
        Lq = lagrange_tabulate(p - 1, rule.points)[0]  # (p, nq)
        ext = lagrange_tabulate(p - 1, Y)[0]  # (n_{p-1}, n_{p+1})
        tri_low = triangle_nodes(p - 1).nodes
        t_nodes = edge_nodes(p - 1).nodes[:, 1]
        _, Ginv = _face_gram(p)
        Tm, W = [], []
        for i in range(3):
            bub = Y[:, (i + 1) % 3] * Y[:, (i + 2) % 3]
            for flip in (False, True):
                tt = 1.0 - t if flip else t
                Psi = lagrange_tabulate(p, face_barycentric(i, tt))[0]  # (nloc, nq)
                Tm.append((Lq * rule.weights) @ Psi.T)
                if p == 1:
                    W.append(bub[:, None])
                    continue
                tn = 1.0 - t_nodes if flip else t_nodes
                zb = face_barycentric(i, tn)
                idx = [int(np.argmin(np.abs(tri_low - z).sum(axis=1))) for z in zb]
                W.append(ext[idx].T * bub[:, None])
        Tm, W = np.array(Tm), np.array(W)  # (6, p, nloc), (6, n_{p+1}, p)
        WR = np.einsum("ayj,jk,bkl->abyl", W, Ginv, Tm)
        interior = mesh.interior_faces
        fe = mesh.face_elements[interior]
        fl = mesh.face_local[interior]
        code = 2 * fl + mesh.element_face_flip[fe, fl]
        _, wa = jump_average_weights(mesh)
        wa = wa[interior]
        vals = WR[code[:, :, None], code[:, None, :]] * wa[:, None, :, None, None]
        nf = len(interior)
        n_out, n_in = vals.shape[3], vals.shape[4]
        vals = vals.transpose(0, 1, 3, 2, 4).reshape(nf, 2 * n_out, 2 * n_in)
        rows = _owned_rows(T)[fe].reshape(nf, -1)
        cols = self.source.cell_dofs[fe].reshape(nf, -1)
        return _scatter(rows, cols, vals, (T.dof_count, self.source.dof_count))

    def _build_element_bubbles(self):
        p, mesh = self.p, self.mesh
        T = self.lagrange(p + 1)
        ne, n_out = mesh.n_elements, n_triangle_nodes(p + 1)
        shape = (T.dof_count, ne * n_out)
        if p == 1:
            return sp.csr_matrix(shape)
        rule = quad_rule_triangle(2 * p + 2)
        R = lagrange_tabulate(p - 2, rule.points)[0]
        Psi = lagrange_tabulate(p + 1, rule.points)[0]
        MK = (R * rule.weights) @ Psi.T
        _, Ginv = _element_gram(p)
        Y = triangle_nodes(p + 1).nodes
        WK = lagrange_tabulate(p - 2, Y)[0].T * Y.prod(axis=1)[:, None]
        L = WK @ Ginv @ MK
        cols = np.arange(ne * n_out).reshape(ne, n_out)
        return _scatter(_owned_rows(T), cols, L[None], shape)


_FACTORIES = {}


def _factory(space):
    key = id(space)
    f = _FACTORIES.get(key)
    if f is None or f.source is not space:
        f = _FACTORIES[key] = _Factory(space)
    return f


# ----------------------------------------------------------------------
# Public builders
# ----------------------------------------------------------------------
def build_nodal_averaging(space, q=None):
    """Operator ``A_q`` from ``BrokenP(p)`` into ``LagrangeP0BC(q)``, ``q in {1, p}``."""
    _check_broken(space)
    q = space.degree if q is None else q
    if q < 1 or q > space.degree:
        raise InvalidArgumentError("averaging degree must satisfy 1 <= q <= p")
    f = _factory(space)
    return LinearSmoother(f"A_{q}", space, f.lagrange(q), f.averaging(q))


def build_bubble_smoother(space):
    """``B_p = B_F + B_M (id - B_F)`` from ``BrokenP(p)`` into ``LagrangeP0BC(p+1)``."""
    _check_broken(space)
    f = _factory(space)
    return LinearSmoother(f"B_{f.p}", space, f.lagrange(f.p + 1), f.bubble())


def build_ep(space, q=None):
    """``A + B_p (id - A)`` with averaging degree ``q`` (default ``p``)."""
    _check_broken(space)
    f = _factory(space)
    p = f.p
    q = p if q is None else q

    def build():
        M = f.lift(q) @ f.averaging(q) + f.bubble() @ (
            sp.identity(space.dof_count, format="csr") - f.to_broken(q, p) @ f.averaging(q))
        M = M.tocsr()
        M.eliminate_zeros()
        return M

    name = f"E_{p}" if q == p else f"E~_{p}"
    return LinearSmoother(name, space, f.lagrange(p + 1), f.cached(("E", q), build))


def build_ep_tilde(space):
    """Cheaper variant using first-order averaging; requires ``p >= 2``."""
    _check_broken(space)
    if space.degree < 2:
        raise InvalidArgumentError("the first-order-averaging variant needs p >= 2")
    return build_ep(space, q=1)


def _cr_to_broken(cr):
    """Crouzeix-Raviart coefficients -> broken P1 vertex values."""
    ne = cr.mesh.n_elements
    rows = np.arange(3 * ne).reshape(ne, 3)
    M = 1.0 - 2.0 * np.eye(3)  # value of 1 - 2 lambda_i at vertex j
    return _scatter(rows, cr.cell_dofs, M[None], (3 * ne, cr.dof_count))


_VECTOR_CACHE = {}


def build_e1_vector(space):
    """Componentwise lowest-order smoother on ``CrouzeixRaviartVec``."""
    if not (isinstance(space, VectorSpace) and isinstance(space.base, CrouzeixRaviartSpace)):
        raise InvalidArgumentError(f"expected CrouzeixRaviartVec, got {space!r}")
    hit = _VECTOR_CACHE.get(id(space))
    if hit is not None and hit.source is space:
        return hit
    from .spaces import BrokenP

    broken = BrokenP(space.mesh, 1)
    E1 = build_ep(broken)
    scalar = (E1.matrix @ _cr_to_broken(space.base)).tocsr()
    target = VectorSpace(E1.target)
    op = LinearSmoother("E_1^2", space, target, sp.block_diag([scalar, scalar], format="csr"))
    _VECTOR_CACHE[id(space)] = op
    return op


def nodal_averaging(sigma, q=None):
    return build_nodal_averaging(sigma.space, q).apply(sigma)


def bubble_smoother(sigma):
    return build_bubble_smoother(sigma.space).apply(sigma)


def smoother_ep(sigma):
    return build_ep(sigma.space).apply(sigma)


def smoother_ep_tilde(sigma):
    return build_ep_tilde(sigma.space).apply(sigma)


def smoother_e1_vector(sigma):
    return build_e1_vector(sigma.space).apply(sigma)


# ----------------------------------------------------------------------
# Normal-derivative bubbles and the C^1 smoother
# ----------------------------------------------------------------------
def _local_index(mesh, K, z):
    return np.argmax(mesh.elements[K] == z[..., None], axis=-1)


class NormalBubbles:
    """Face bubbles ``c_F zeta_F prod_z (lambda_z^{K1} lambda_z^{K2})^2`` of all interior faces.

    ``zeta_F(x) = (x - m_F) . n_F``. The product runs over the two face
    vertices and the barycentric coordinates of both neighbours are
    extended as affine functions, so each bubble is a single polynomial on
    ``K1 u K2``; its value and gradient vanish on the boundary of the patch.
    ``c_F`` is computed so that ``int_F d_n bubble = 1``.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        ef = mesh.element_faces
        self.interior = ~mesh.boundary_faces_mask[ef]  # (ne, 3)
        fe = mesh.face_elements[ef]  # (ne, 3, 2)
        K1 = fe[..., 0]
        K2 = np.where(fe[..., 1] >= 0, fe[..., 1], K1)
        zs = mesh.face_vertices[ef]  # (ne, 3, 2)
        G = mesh.grad_lambda
        grads, anchors = [], []
        for Kx in (K1, K2):
            for c in range(2):
                z = zs[..., c]
                loc = _local_index(mesh, Kx, z)
                grads.append(G[Kx, loc])
                anchors.append(mesh.vertices[z])
        self._lam_grad = np.stack(grads, axis=2)  # (ne, 3, 4, 2)
        self._lam_anchor = np.stack(anchors, axis=2)
        self._normal = mesh.face_normals[ef]
        self._mid = mesh.face_midpoints[ef]
        self._c_face = np.zeros(mesh.n_faces)
        self.scale = np.ones((mesh.n_elements, 3))
        self._normalise()

    def _raw(self, X, order):
        """Unnormalised bubbles of the faces of every element at points ``X (ne, npts, 2)``."""
        Xe = X[:, None, :, :]  # (ne, 1, npts, 2)
        n = self._normal[:, :, None, :]
        zeta = ((Xe - self._mid[:, :, None, :]) * n).sum(-1)
        g = self._lam_grad[:, :, :, None, :]  # (ne, 3, 4, 1, 2)
        lam = 1.0 + (g * (Xe[:, :, None] - self._lam_anchor[:, :, :, None, :])).sum(-1)
        P = lam.prod(axis=2)
        out = [zeta * P ** 2]
        if order == 0:
            return out
        dP = np.zeros(P.shape + (2,))
        for k in range(4):
            rest = np.delete(lam, k, axis=2).prod(axis=2)
            dP += rest[..., None] * g[:, :, k]
        dz = self._normal[:, :, None, :]
        out.append(P[..., None] ** 2 * dz + 2.0 * (zeta * P)[..., None] * dP)
        if order == 1:
            return out
        HP = np.zeros(P.shape + (2, 2))
        for k in range(4):
            for m in range(4):
                if k == m:
                    continue
                rest = np.delete(lam, [k, m], axis=2).prod(axis=2)
                HP += rest[..., None, None] * (g[:, :, k, :, :, None] * g[:, :, m, :, None, :])
        zP = np.einsum("efqi,efqj->efqij", np.broadcast_to(dz, dP.shape), dP)
        PP = np.einsum("efqi,efqj->efqij", dP, dP)
        out.append(2.0 * P[..., None, None] * (zP + np.swapaxes(zP, -1, -2))
                   + 2.0 * zeta[..., None, None] * (PP + P[..., None, None] * HP))
        return out

    def _normalise(self):
        mesh = self.mesh
        rule = quad_rule_edge(12)
        P = mesh.vertices[mesh.elements]
        flux = np.zeros((mesh.n_elements, 3))
        for i in range(3):
            bary = face_barycentric(i, rule.points[:, 1])
            X = np.einsum("qi,eid->eqd", bary, P)
            _, grad = self._raw(X, 1)
            dn = np.einsum("eqd,ed->eq", grad[:, i], self._normal[:, i])
            flux[:, i] = dn @ rule.weights * mesh.face_lengths[mesh.element_faces[:, i]]
        f = mesh.element_faces
        c = np.zeros(mesh.n_faces)
        K1 = mesh.face_elements[:, 0]
        loc = mesh.face_local[:, 0]
        inner = ~mesh.boundary_faces_mask
        c[inner] = 1.0 / flux[K1[inner], loc[inner]]
        self._c_face = c
        self.scale = np.where(self.interior, c[f], 0.0)

    @property
    def constants(self):
        """``c_F`` per face (zero on boundary faces)."""
        return self._c_face

    def tabulate(self, bary, order=1):
        """Normalised bubbles of the faces of each element: ``(ne, 3, npts, ...)``."""
        bary = np.atleast_2d(bary)
        X = np.einsum("qi,eid->eqd", bary, self.mesh.vertices[self.mesh.elements])
        raw = self._raw(X, order)
        s = self.scale
        return [r * s.reshape(s.shape + (1,) * (r.ndim - 2)) for r in raw]


class C1Function:
    """HCT function plus a combination of normal-derivative bubbles."""

    def __init__(self, hct, bubbles, beta):
        self.hct = hct
        self.bubbles = bubbles
        self.beta = np.asarray(beta, dtype=float)
        self.space = hct.space

    def evaluate(self, bary, order=0):
        base = self.hct.evaluate(bary, order)
        tab = self.bubbles.tabulate(bary, order)
        b = self.beta[self.bubbles.mesh.element_faces]  # (ne, 3)
        return [u + np.einsum("ef...,ef->e...", t, b) for u, t in zip(base, tab)]

    def _on(self, K, points, which):
        bary = self.bubbles.mesh.to_barycentric(K, points)
        if np.any(bary < -1e-12):
            raise InvalidArgumentError(f"point outside element {K}")
        return self.evaluate(bary, which)[which][K]

    def eval(self, K, points):
        return self._on(K, points, 0)

    def eval_grad(self, K, points):
        return self._on(K, points, 1)

    def eval_hessian(self, K, points):
        return self._on(K, points, 2)


def normal_bubble(mesh, face, bubbles=None):
    """The normalised normal-derivative bubble of an interior face as a :class:`C1Function`."""
    if mesh.boundary_faces_mask[face]:
        raise InvalidArgumentError(f"face {face} lies on the boundary")
    bubbles = bubbles or NormalBubbles(mesh)
    hct = HCTSpace(mesh)
    beta = np.zeros(mesh.n_faces)
    beta[face] = 1.0
    return C1Function(hct.zero(), bubbles, beta)


class C1Smoother:
    """``A_HCT + B_dn (id - A_HCT)`` on quadratic ``C^0`` functions.

    The source is normally ``LagrangeP0BC(2)``; ``LagrangeP(2)`` is accepted
    so that reproduction of global quadratics can be checked.

    ``averaging`` maps P2 coefficients to HCT coefficients; ``bubble_coeffs``
    maps P2 coefficients to one bubble coefficient per face.
    """

    name = "E_C0"

    def __init__(self, space):
        if not (isinstance(space, LagrangeSpace) and not space.broken and space.degree == 2):
            raise InvalidArgumentError(f"expected LagrangeP0BC(2), got {space!r}")
        mesh = space.mesh
        self.source = space
        self.mesh = mesh
        # without boundary conditions the boundary HCT dofs are kept as well
        self.hct = HCTSpace(mesh, bc=space.bc)
        self.bubbles = NormalBubbles(mesh)
        self.averaging = self._build_averaging()
        self.bubble_coeffs = self._build_bubble_coeffs()

    def _build_averaging(self):
        mesh, S, H = self.mesh, self.source, self.hct
        nodes = triangle_nodes(2).nodes  # vertices then face midpoints
        _, grads = S.tabulate(nodes, 1)  # (ne, 6, 6, 2)
        owned = S.owner_mask
        rows, cols, vals = [], [], []
        ne = mesh.n_elements
        for j in range(3):
            vdof = H.vertex_to_dof[mesh.elements[:, j]]
            ok = owned[:, j] & (vdof >= 0)
            # value: P2 vertex coefficient
            rows.append(3 * vdof[ok]); cols.append(S.cell_dofs[ok, j]); vals.append(np.ones(ok.sum()))
            for c in range(2):
                r = np.repeat(3 * vdof[ok] + 1 + c, 6)
                rows.append(r)
                cols.append(S.cell_dofs[ok].ravel())
                vals.append(grads[ok, :, j, c].ravel())
        for i in range(3):
            f = mesh.element_faces[:, i]
            fdof = H.face_to_dof[f]
            ok = owned[:, 3 + i] & (fdof >= 0)
            dn = np.einsum("eld,ed->el", grads[:, :, 3 + i, :], mesh.face_normals[f])
            rows.append(np.repeat(fdof[ok], 6))
            cols.append(S.cell_dofs[ok].ravel())
            vals.append(dn[ok].ravel())
        r, c, v = (np.concatenate(a) for a in (rows, cols, vals))
        m = c >= 0
        A = sp.csr_matrix((v[m], (r[m], c[m])), shape=(H.dof_count, S.dof_count))
        A.sum_duplicates()
        return A

    def _normal_flux_matrix(self, space, degree):
        """``int_F {grad v} . n_F`` per face as a sparse matrix (interior faces only)."""
        mesh = self.mesh
        tr = FaceTraces(space, degree, order=1)
        _, wa = jump_average_weights(mesh)
        dn = np.einsum("fslqd,fd->fslq", tr.gradients, mesh.face_normals)
        vals = np.einsum("fslq,fq,fs->fsl", dn, tr.weights, wa)
        vals[mesh.boundary_faces_mask] = 0.0
        nf = mesh.n_faces
        rows = np.broadcast_to(np.arange(nf)[:, None, None], tr.dofs.shape)
        m = tr.dofs >= 0
        A = sp.csr_matrix((vals[m], (rows[m], tr.dofs[m])), shape=(nf, space.dof_count))
        A.sum_duplicates()
        return A

    def _build_bubble_coeffs(self):
        D_avg = self._normal_flux_matrix(self.source, 4)
        D_hct = self._normal_flux_matrix(self.hct, 6)
        B = (D_avg - D_hct @ self.averaging).tocsr()
        B.eliminate_zeros()
        return B

    def apply(self, sigma):
        if not _same_space(sigma.space, self.source):
            raise InvalidArgumentError("E_C0 expects a function in its source space")
        hct = FeFunction(self.hct, self.averaging @ sigma.coeffs)
        return C1Function(hct, self.bubbles, self.bubble_coeffs @ sigma.coeffs)

    __call__ = apply

    def rhs(self, hct_load, bubble_load):
        """``<f, E psi_i>`` from loads on the HCT basis and on the face bubbles."""
        return self.averaging.T @ hct_load + self.bubble_coeffs.T @ bubble_load


_C1_CACHE = {}


def build_ec0(space):
    hit = _C1_CACHE.get(id(space))
    if hit is None or hit.source is not space:
        hit = _C1_CACHE[id(space)] = C1Smoother(space)
    return hit


def hct_averaging(sigma):
    op = build_ec0(sigma.space)
    return FeFunction(op.hct, op.averaging @ sigma.coeffs)


def smoother_ec0(sigma):
    return build_ec0(sigma.space).apply(sigma)
