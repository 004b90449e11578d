"""Assembly of interior penalty bilinear forms, load vectors and penalty thresholds.

Matrices are returned in CSR format with ``A[i, j] = b(psi_j, psi_i)``:
row ``i`` belongs to the test function, column ``j`` to the trial function.
Skeleton integrals run over all faces; on boundary faces the jump and the
average both equal the one-sided trace and ``n`` is the outer normal.
The face size is ``h_F = |F|``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .basis import face_barycentric, quad_rule_edge, quad_rule_triangle, quad_rule_triangle_split
from .errors import InvalidArgumentError, UndefinedPairingError
from .smoothers import build_e1_vector, build_ec0, build_ep, build_ep_tilde
from .sparse_utils import scatter_blocks, scatter_vector
from .spaces import (
    CrouzeixRaviartSpace,
    FaceTraces,
    HCTSpace,
    LagrangeSpace,
    VectorSpace,
    jump_average_weights,
)

MAX_LOAD_DEGREE = 30


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty parameter and, optionally, the estimated coercivity threshold."""

    eta: float
    eta_star_estimate: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta <= 0:
            raise InvalidArgumentError(f"penalty must be positive, got {self.eta}")

    @property
    def below_threshold(self):
        """True when ``eta <= eta_star_estimate`` (coercivity not guaranteed)."""
        return self.eta_star_estimate is not None and self.eta <= self.eta_star_estimate


@dataclass(frozen=True)
class LameCoefficients:
    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.mu <= 0 or self.lam < 0:
            raise InvalidArgumentError("need mu > 0 and lambda >= 0")


@dataclass(frozen=True)
class LoadFunctional:
    """``<f, v> = int g0 . v + int g : grad v``.

    ``g0`` and ``g`` map ``(npts, 2)`` points to values; either may be
    ``None`` (zero). ``g`` is only evaluated at element-interior quadrature
    points, so it may jump across mesh-aligned lines.
    """

    g0: Optional[Callable] = None
    g: Optional[Callable] = None


def _eta(cfg):
    eta = cfg.eta if isinstance(cfg, PenaltyConfig) else float(cfg)
    if eta < 0:
        raise InvalidArgumentError("penalty must be nonnegative")
    return eta


def _warn_threshold(cfg, what):
    if isinstance(cfg, PenaltyConfig) and cfg.below_threshold:
        warnings.warn(f"{what}: eta={cfg.eta:g} does not exceed the estimated "
                      f"threshold {cfg.eta_star_estimate:g}; coercivity is not guaranteed",
                      RuntimeWarning, stacklevel=3)


def _cell_rule(space, degree):
    if isinstance(space, HCTSpace):
        return quad_rule_triangle_split(degree)
    return quad_rule_triangle(degree)


def _cell_matrix(space, local):
    n = space.dof_count
    return scatter_blocks(space.cell_dofs, space.cell_dofs, local, (n, n))


def _face_matrix(space, tr, test, trial, scale=None):
    """Assemble ``sum_q w_q test[f,s,l,q,...] trial[f,r,m,q,...]`` face blocks.

    ``scale`` optionally multiplies the quadrature weights per face.
    """
    nf, _, nloc = tr.dofs.shape
    extra = "abcd"[: test.ndim - 4]
    w = tr.weights if scale is None else tr.weights * scale[:, None]
    blk = np.einsum(f"fslq{extra},frmq{extra},fq->fslrm", test, trial, w)
    blk = blk.reshape(nf, 2 * nloc, 2 * nloc)
    d = tr.dofs.reshape(nf, -1)
    n = space.dof_count
    return scatter_blocks(d, d, blk, (n, n))


def _weighted(tr_arr, w):
    """Multiply a ``(nf, 2, ...)`` trace array by per-side weights ``(nf, 2)``."""
    return tr_arr * w.reshape(w.shape + (1,) * (tr_arr.ndim - 2))


def _gradient_block(space, degree):
    rule = _cell_rule(space, degree)
    _, G = space.tabulate(rule.points, 1)
    w = rule.weights[None, :] * space.mesh.areas[:, None]
    return G, w


def _symmetric(A):
    """Remove round-off asymmetry of a form that is symmetric by construction."""
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    return A


def _penalty_weights(mesh, eta):
    return eta / mesh.face_lengths


# ----------------------------------------------------------------------
# Extended scalar products
# ----------------------------------------------------------------------
def _jump_penalty(space, eta, degree, normal_derivative=False):
    mesh = space.mesh
    tr = FaceTraces(space, degree, order=1 if normal_derivative else 0)
    wj, _ = jump_average_weights(mesh)
    if normal_derivative:
        q = np.einsum("fslq...d,fd->fslq...", tr.gradients, mesh.face_normals)
    else:
        q = tr.values
    J = _weighted(q, wj)
    return _face_matrix(space, tr, J, J, scale=_penalty_weights(mesh, eta))


def _elasticity_volume(space, lame, degree):
    G, w = _gradient_block(space, degree)  # (ne, nloc, nq, 2, 2): component, derivative
    eps = 0.5 * (G + np.swapaxes(G, -1, -2))
    div = np.trace(G, axis1=-2, axis2=-1)
    local = (2.0 * lame.mu * np.einsum("elqij,emqij,eq->elm", eps, eps, w)
             + lame.lam * np.einsum("elq,emq,eq->elm", div, div, w))
    return _cell_matrix(space, local)


def assemble_extended_product(space, cfg, order=1, lame=None):
    """Gram matrix of the extended energy scalar product on ``space``.

    * ``order=1``: ``int grad_M v : grad_M w + sum_F eta/h_F int [v].[w]``;
      with ``lame`` the volume term is ``int 2 mu eps:eps + lambda div div``.
    * ``order=2``: ``int D2_M v : D2_M w + sum_F eta/h_F int [dn v][dn w]``.
    """
    eta = _eta(cfg)
    p = space.degree
    if order == 1:
        if lame is not None:
            A = _elasticity_volume(space, lame, 2 * p)
        else:
            G, w = _gradient_block(space, 2 * p)
            extra = "abcd"[: G.ndim - 3]
            A = _cell_matrix(space, np.einsum(f"elq{extra},emq{extra},eq->elm", G, G, w))
        if eta > 0:
            A = A + _jump_penalty(space, eta, 2 * p)
        return _symmetric(A)
    if order == 2:
        if lame is not None:
            raise InvalidArgumentError("Lame coefficients only apply to order 1")
        if not (isinstance(space, (LagrangeSpace, HCTSpace)) and p >= 2):
            raise InvalidArgumentError("order 2 needs a scalar space of degree >= 2")
        rule = _cell_rule(space, 2 * p)
        _, _, H = space.tabulate(rule.points, 2)
        w = rule.weights[None, :] * space.mesh.areas[:, None]
        A = _cell_matrix(space, np.einsum("elqij,emqij,eq->elm", H, H, w))
        if eta > 0:
            A = A + _jump_penalty(space, eta, 2 * p, normal_derivative=True)
        return _symmetric(A)
    raise InvalidArgumentError("order must be 1 or 2")


# ----------------------------------------------------------------------
# Method forms
# ----------------------------------------------------------------------
def assemble_poisson_dg(space, cfg, variant="sip"):
    """Symmetric or nonsymmetric interior penalty form on ``BrokenP(p)``.

    ``b(s, v) = int grad s . grad v - int {grad s}.n [v] -+ int [s] {grad v}.n
    + sum_F eta/h_F int [s][v]`` with ``-`` for ``sip`` and ``+`` for ``nip``.
    """
    if variant not in ("sip", "nip"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    if not (isinstance(space, LagrangeSpace) and space.broken):
        raise InvalidArgumentError("DG forms live on a broken Lagrange space")
    if variant == "sip":
        _warn_threshold(cfg, "SIP")
    mesh = space.mesh
    p = space.degree
    A = assemble_extended_product(space, cfg, order=1)
    tr = FaceTraces(space, 2 * p, order=1)
    wj, wa = jump_average_weights(mesh)
    J = _weighted(tr.values, wj)
    F = _weighted(np.einsum("fslqd,fd->fslq", tr.gradients, mesh.face_normals), wa)
    sign = -1.0 if variant == "sip" else 1.0
    # test-major: -{dn s}[v] and sign [s]{dn v}
    C = _face_matrix(space, tr, J, F)
    other = C.T if variant == "sip" else _face_matrix(space, tr, F, J)
    A = A - C + sign * other
    return _symmetric(A) if variant == "sip" else A.tocsr()


def assemble_elasticity_hl(space, cfg, lame):
    """Penalised Crouzeix-Raviart form ``int 2 mu eps:eps + lambda div div + sum eta/h [u].[v]``."""
    if not (isinstance(space, VectorSpace) and isinstance(space.base, CrouzeixRaviartSpace)):
        raise InvalidArgumentError("the penalised form lives on CrouzeixRaviartVec")
    return assemble_extended_product(space, cfg, order=1, lame=lame)


def assemble_div_div(space):
    """``int div_M u div_M v`` on a vector space."""
    G, w = _gradient_block(space, 2 * space.degree)
    div = np.trace(G, axis1=-2, axis2=-1)
    return _cell_matrix(space, np.einsum("elq,emq,eq->elm", div, div, w))


def assemble_biharmonic_c0(space, cfg):
    """Quadratic C0 interior penalty form on ``LagrangeP0BC(2)``.

    ``(s, v)_{2;eta} - int ({d_nn s}[d_n v] + [d_n s]{d_nn v})``.
    """
    if not (isinstance(space, LagrangeSpace) and not space.broken and space.degree == 2):
        raise InvalidArgumentError("the C0 interior penalty form needs LagrangeP0BC(2)")
    _warn_threshold(cfg, "C0-IP")
    mesh = space.mesh
    A = assemble_extended_product(space, cfg, order=2)
    tr = FaceTraces(space, 4, order=2)
    wj, wa = jump_average_weights(mesh)
    n = mesh.face_normals
    J = _weighted(np.einsum("fslqd,fd->fslq", tr.gradients, n), wj)
    Hn = _weighted(np.einsum("fslqij,fi,fj->fslq", tr.hessians, n, n), wa)
    C = _face_matrix(space, tr, J, Hn)
    A = A - C - C.T
    return _symmetric(A)


# ----------------------------------------------------------------------
# Loads
# ----------------------------------------------------------------------
def _load_rule(space, degree):
    if degree is None:
        degree = min(space.degree + 12, MAX_LOAD_DEGREE)
    return _cell_rule(space, degree)


def _element_points(mesh, rule):
    X = np.einsum("qi,eid->eqd", rule.points, mesh.vertices[mesh.elements])
    w = rule.weights[None, :] * mesh.areas[:, None]
    return X, w


def _pair_load(load, mesh, tab_values, tab_grads, rule):
    """Local contributions ``(ne, nloc)`` of the load against tabulated functions."""
    X, w = _element_points(mesh, rule)
    ne, nq = w.shape
    out = np.zeros(tab_values.shape[:2])
    if load.g0 is not None:
        g0 = np.asarray(load.g0(X.reshape(-1, 2)), dtype=float)
        g0 = g0.reshape((ne, nq) + g0.shape[1:])
        extra = "abcd"[: g0.ndim - 2]
        out += np.einsum(f"elq{extra},eq{extra},eq->el", tab_values, g0, w)
    if load.g is not None:
        g = np.asarray(load.g(X.reshape(-1, 2)), dtype=float)
        g = g.reshape((ne, nq) + g.shape[1:])
        extra = "abcd"[: g.ndim - 2]
        out += np.einsum(f"elq{extra},eq{extra},eq->el", tab_grads, g, w)
    return out


def load_vector(load, space, degree=None):
    """``<f, psi_i>`` for the basis functions of a conforming (or broken) space."""
    rule = _load_rule(space, degree)
    order = 1 if load.g is not None else 0
    tab = space.tabulate(rule.points, order)
    local = _pair_load(load, space.mesh, tab[0], tab[1] if order else None, rule)
    return scatter_vector(space.cell_dofs, local, space.dof_count)


def bubble_load_vector(load, bubbles, degree=22):
    """``<f, bubble_F>`` for every face (zero on boundary faces)."""
    mesh = bubbles.mesh
    rule = quad_rule_triangle(degree)
    order = 1 if load.g is not None else 0
    tab = bubbles.tabulate(rule.points, order)
    local = _pair_load(load, mesh, tab[0], tab[1] if order else None, rule)
    return scatter_vector(mesh.element_faces, local, mesh.n_faces)


SMOOTHERS = ("ep", "ep_tilde", "e1_vector", "ec0", "identity")


def assemble_rhs(load, space, smoother="ep", degree=None):
    """Right-hand side ``<f, E psi_i>`` for the chosen smoother.

    ``identity`` gives the classical pairing ``<f, psi_i>``, which is only
    defined for a flux part ``g`` when the test space is conforming.
    """
    if smoother == "identity":
        if load.g is not None and not space.conforming:
            raise UndefinedPairingError(
                "a load with a flux part cannot be paired with discontinuous test "
                f"functions of {space.kind}; use a smoother")
        return load_vector(load, space, degree)
    if smoother == "ep":
        op = build_ep(space)
    elif smoother == "ep_tilde":
        op = build_ep_tilde(space)
    elif smoother == "e1_vector":
        op = build_e1_vector(space)
    elif smoother == "ec0":
        op = build_ec0(space)
        F_hct = load_vector(load, op.hct, degree or 11)
        F_bub = bubble_load_vector(load, op.bubbles)
        return op.rhs(F_hct, F_bub)
    else:
        raise InvalidArgumentError(f"unknown smoother {smoother!r}; choose from {SMOOTHERS}")
    return op.rhs(load_vector(load, op.target, degree))


# ----------------------------------------------------------------------
# Penalty threshold
# ----------------------------------------------------------------------
def _max_generalized_eig(MF, MK, rtol=1e-10):
    """Largest ``lambda`` with ``MF x = lambda MK x`` on the range of ``MK`` (batched)."""
    ev, V = np.linalg.eigh(MK)
    keep = ev > rtol * ev.max(axis=-1, keepdims=True)
    scale = np.where(keep, 1.0 / np.sqrt(np.where(keep, ev, 1.0)), 0.0)
    W = V * scale[..., None, :]
    R = np.swapaxes(W, -1, -2) @ MF @ W
    return np.linalg.eigvalsh(R)[..., -1]


def estimate_eta_star(space, order=1):
    """Estimate of the trace-inverse threshold above which SIP / C0-IP are coercive.

    Returns ``3 * max_{K, F in K} h_F * lambda_max`` where ``lambda_max`` is
    the largest generalised eigenvalue of the face Gram matrix of the
    normal flux (``order=1``) or of the second normal derivative
    (``order=2``) against the element Gram matrix of the gradient or
    Hessian, for the local basis of ``space``.
    """
    mesh = space.mesh
    p = space.degree
    if order not in (1, 2):
        raise InvalidArgumentError("order must be 1 or 2")
    if order == 2 and p < 2:
        raise InvalidArgumentError("order 2 needs degree >= 2")
    rule = quad_rule_triangle(2 * p)
    tab = space.tabulate(rule.points, order)[order]
    w = rule.weights[None, :] * mesh.areas[:, None]
    extra = "ab" if order == 2 else "a"
    MK = np.einsum(f"elq{extra},emq{extra},eq->elm", tab, tab, w)
    erule = quad_rule_edge(2 * p)
    best = 0.0
    for i in range(3):
        f = mesh.element_faces[:, i]
        n = mesh.face_normals[f]
        ft = space.tabulate(face_barycentric(i, erule.points[:, 1]), order)[order]
        if order == 1:
            q = np.einsum("elqd,ed->elq", ft, n)
        else:
            q = np.einsum("elqij,ei,ej->elq", ft, n, n)
        wf = erule.weights[None, :] * mesh.face_lengths[f][:, None]
        MF = np.einsum("elq,emq,eq->elm", q, q, wf)
        lam = _max_generalized_eig(MF, MK)
        best = max(best, float(np.max(mesh.face_lengths[f] * lam)))
    return 3.0 * best
