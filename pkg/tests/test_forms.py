import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from qoip.basis import quad_rule_edge, quad_rule_triangle
from qoip.errors import InvalidArgumentError, UndefinedPairingError
from qoip.experiments.checks import broken_copy
from qoip.experiments.harness import jump_seminorm_sq
from qoip.forms import (
    LameCoefficients,
    LoadFunctional,
    PenaltyConfig,
    assemble_biharmonic_c0,
    assemble_div_div,
    assemble_elasticity_hl,
    assemble_extended_product,
    assemble_poisson_dg,
    assemble_rhs,
    estimate_eta_star,
    load_vector,
)
from qoip.mesh import build_structured_unit_square, refine_uniform
from qoip.smoothers import build_ep
from qoip.solvers import solve_spd
from qoip.spaces import (
    BrokenP,
    CrouzeixRaviartVec,
    FeFunction,
    HCTSpace,
    LagrangeP,
    LagrangeP0BC,
    interpolate,
)


def _basis(space, i):
    c = np.zeros(space.dof_count)
    c[i] = 1.0
    return FeFunction(space, c)


def _face_sides(mesh, F, t):
    a, b = mesh.vertices[mesh.face_vertices[F]]
    X = a + t[:, None] * (b - a)
    return X, [int(K) for K in mesh.face_elements[F] if K >= 0]


def _dense_dg(space, eta, variant):
    """Brute-force pointwise assembly from physical-point evaluations."""
    mesh = space.mesh
    n = space.dof_count
    fns = [_basis(space, i) for i in range(n)]
    tri = quad_rule_triangle(2 * space.degree)
    edge = quad_rule_edge(2 * space.degree + 2)
    t = edge.points[:, 1]
    B = np.zeros((n, n))
    for K in range(mesh.n_elements):
        X = mesh.to_physical(K, tri.points)
        G = np.array([f.eval_grad(K, X) for f in fns])  # (n, nq, 2)
        B += np.einsum("iqd,jqd,q->ij", G, G, tri.weights) * mesh.areas[K]
    sgn = -1.0 if variant == "sip" else 1.0
    for F in range(mesh.n_faces):
        X, Ks = _face_sides(mesh, F, t)
        nrm = mesh.face_normals[F]
        L = mesh.face_lengths[F]
        vals = np.array([[f.eval(K, X) for K in Ks] for f in fns])  # (n, s, nq)
        dn = np.array([[f.eval_grad(K, X) @ nrm for K in Ks] for f in fns])
        if len(Ks) == 2:
            jump = vals[:, 0] - vals[:, 1]
            avg = 0.5 * (dn[:, 0] + dn[:, 1])
        else:
            jump, avg = vals[:, 0], dn[:, 0]
        w = edge.weights * L
        # rows test, columns trial
        B += eta / L * np.einsum("iq,jq,q->ij", jump, jump, w)
        B -= np.einsum("iq,jq,q->ij", jump, avg, w)
        B += sgn * np.einsum("iq,jq,q->ij", avg, jump, w)
    return B


@pytest.mark.parametrize("variant", ["sip", "nip"])
@pytest.mark.parametrize("p", [1, 2])
def test_dg_against_dense_oracle(mesh1, variant, p):
    S = BrokenP(mesh1, p)
    B = assemble_poisson_dg(S, 7.0, variant).toarray()
    ref = _dense_dg(S, 7.0, variant)
    assert np.abs(B - ref).max() <= 1e-12 * np.abs(ref).max()


def test_sip_symmetric(mesh4):
    for p in (1, 2, 3):
        B = assemble_poisson_dg(BrokenP(mesh4, p), 40.0, "sip")
        assert abs(B - B.T).max() <= 1e-13


@pytest.mark.parametrize("p", [1, 2, 3])
def test_nip_identity(mesh4, rng, p):
    S = BrokenP(mesh4, p)
    eta = 10.0 * p * p
    B = assemble_poisson_dg(S, eta, "nip")
    G = assemble_extended_product(S, eta)
    for _ in range(20):
        s = rng.standard_normal(S.dof_count)
        assert s @ (B @ s) == pytest.approx(s @ (G @ s), rel=1e-12)


def test_galerkin_restriction(mesh2, rng):
    # conforming trial: b(s, v) = int grad s . grad v - int {dn v} ... only the consistency
    # term of the test side survives in NIP/SIP with [s] = 0
    p = 2
    S = BrokenP(mesh2, p)
    L = LagrangeP0BC(mesh2, p)
    s = broken_copy(FeFunction(L, rng.standard_normal(L.dof_count)), p)
    v = rng.standard_normal(S.dof_count)
    for variant in ("sip", "nip"):
        B = assemble_poisson_dg(S, 12.0, variant)
        G = assemble_extended_product(S, 0.0)
        C = _dense_dg(S, 0.0, "sip") - G.toarray()  # pure consistency part on the sip side
        # test v, trial s
        lhs = v @ (B @ s.coeffs)
        rhs = v @ (G @ s.coeffs) + v @ (C @ s.coeffs)
        # with [s] = 0 the symmetric term vanishes, so sip and nip agree
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_extended_product_spd(mesh2):
    for p in (1, 2):
        G = assemble_extended_product(BrokenP(mesh2, p), 10.0).toarray()
        assert np.linalg.eigvalsh(G).min() > 0


def test_extended_product_conforming_has_no_jumps(mesh2, rng):
    L = LagrangeP0BC(mesh2, 2)
    s = FeFunction(L, rng.standard_normal(L.dof_count))
    b = broken_copy(s, 2)
    S = b.space
    G10 = assemble_extended_product(S, 10.0)
    G0 = assemble_extended_product(S, 0.0)
    assert b.coeffs @ (G10 @ b.coeffs) == pytest.approx(b.coeffs @ (G0 @ b.coeffs), rel=1e-12)
    GL = assemble_extended_product(L, 0.0)
    assert s.coeffs @ (GL @ s.coeffs) == pytest.approx(b.coeffs @ (G0 @ b.coeffs), rel=1e-12)


def test_extended_product_order2_on_hct(mesh2, rng):
    H = HCTSpace(mesh2)
    s = rng.standard_normal(H.dof_count)
    G10 = assemble_extended_product(H, 10.0, order=2)
    G0 = assemble_extended_product(H, 0.0, order=2)
    assert s @ (G10 @ s) == pytest.approx(s @ (G0 @ s), rel=1e-11)
    L = LagrangeP0BC(mesh2, 2)
    assert assemble_extended_product(L, 10.0, order=2).nnz > 0
    assert abs(assemble_extended_product(L, 10.0, order=2)).max() > 0


def test_order2_needs_quadratics(mesh2):
    with pytest.raises(InvalidArgumentError):
        assemble_extended_product(BrokenP(mesh2, 1), 1.0, order=2)


@pytest.mark.parametrize("p", [1, 2])
def test_sip_coercive_above_threshold(mesh2, rng, p):
    S = BrokenP(mesh2, p)
    eta = 1.01 * estimate_eta_star(S)
    B = assemble_poisson_dg(S, eta, "sip")
    G = assemble_extended_product(S, eta)
    for _ in range(100):
        s = rng.standard_normal(S.dof_count)
        assert s @ (B @ s) > 0
        assert s @ (G @ s) > 0


def test_sip_warns_below_threshold(mesh2):
    cfg = PenaltyConfig(1.0, eta_star_estimate=12.0)
    assert cfg.below_threshold
    with pytest.warns(RuntimeWarning):
        assemble_poisson_dg(BrokenP(mesh2, 1), cfg, "sip")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assemble_poisson_dg(BrokenP(mesh2, 1), cfg, "nip")


def test_penalty_config_validation():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(InvalidArgumentError):
            PenaltyConfig(bad)
    with pytest.raises(InvalidArgumentError):
        LameCoefficients(mu=0.0)


def test_unknown_variant(mesh2):
    with pytest.raises(InvalidArgumentError):
        assemble_poisson_dg(BrokenP(mesh2, 1), 1.0, "iip")
    with pytest.raises(InvalidArgumentError):
        assemble_poisson_dg(LagrangeP0BC(mesh2, 1), 1.0, "sip")


# ----------------------------------------------------------------------
# elasticity
# ----------------------------------------------------------------------
def test_hl_symmetric_and_lambda_linear(mesh4):
    V = CrouzeixRaviartVec(mesh4)
    A = assemble_elasticity_hl(V, 10.0, LameCoefficients(1.0, 1e3))
    A0 = assemble_elasticity_hl(V, 10.0, LameCoefficients(1.0, 0.0))
    D = assemble_div_div(V)
    assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
    diff = (A - A0 - 1e3 * D)
    assert abs(diff).max() <= 1e-12 * abs(A).max()


def test_hl_on_conforming_field(mesh4, rng):
    V = CrouzeixRaviartVec(mesh4)
    L = LagrangeP0BC(mesh4, 1)
    comps = [FeFunction(L, rng.standard_normal(L.dof_count)) for _ in range(2)]
    # face means of a P1 field are its midpoint values
    cr = np.zeros(V.dof_count)
    mids = mesh4.face_midpoints
    for k, f in enumerate(comps):
        for F in mesh4.interior_faces:
            K = mesh4.face_elements[F, 0]
            cr[k * V.n_scalar + V.base.face_to_dof[F]] = f.eval(K, mids[F:F + 1])[0]
    lame = LameCoefficients(1.3, 7.0)
    A = assemble_elasticity_hl(V, 10.0, lame)
    rule = quad_rule_triangle(2)
    g = np.stack([f.evaluate(rule.points, 1)[1] for f in comps], axis=-2)  # (ne, nq, 2, 2)
    eps = 0.5 * (g + np.swapaxes(g, -1, -2))
    div = np.trace(g, axis1=-2, axis2=-1)
    w = rule.weights[None] * mesh4.areas[:, None]
    ref = np.sum((2 * lame.mu * (eps ** 2).sum((-1, -2)) + lame.lam * div ** 2) * w)
    assert cr @ (A @ cr) == pytest.approx(ref, rel=1e-12)


def test_hl_rejects_other_spaces(mesh2):
    with pytest.raises(InvalidArgumentError):
        assemble_elasticity_hl(BrokenP(mesh2, 1), 1.0, LameCoefficients())


# ----------------------------------------------------------------------
# biharmonic
# ----------------------------------------------------------------------
def test_c0ip_symmetric_and_spd(mesh4):
    L = LagrangeP0BC(mesh4, 2)
    eta = 4 * estimate_eta_star(L, order=2)
    B = assemble_biharmonic_c0(L, eta)
    assert abs(B - B.T).max() <= 1e-13 * abs(B).max()
    _, rep = solve_spd(B, np.ones(L.dof_count))
    assert rep.success and rep.method == "cholesky"


def test_c0ip_reduces_on_linears(mesh4, rng):
    L2 = LagrangeP0BC(mesh4, 2)
    L1 = LagrangeP0BC(mesh4, 1)
    from qoip.basis import lagrange_interpolation_matrix

    M = lagrange_interpolation_matrix(1, 2)
    eta = 30.0
    B = assemble_biharmonic_c0(L2, eta)

    def lift(c):
        loc = FeFunction(L1, c).local_coeffs() @ M.T
        out = np.zeros(L2.dof_count)
        mask = L2.cell_dofs >= 0
        out[L2.cell_dofs[mask]] = loc[mask]
        return out

    s, v = (rng.standard_normal(L1.dof_count) for _ in range(2))
    S, V = lift(s), lift(v)
    # oracle: sum_F eta/h_F int [dn s][dn v] from elementwise constant gradients
    gs = FeFunction(L1, s).evaluate(np.full((1, 3), 1 / 3), 1)[1][:, 0]
    gv = FeFunction(L1, v).evaluate(np.full((1, 3), 1 / 3), 1)[1][:, 0]
    ref = 0.0
    for F in range(mesh4.n_faces):
        K1, K2 = mesh4.face_elements[F]
        n = mesh4.face_normals[F]
        js = gs[K1] @ n - (gs[K2] @ n if K2 >= 0 else 0.0)
        jv = gv[K1] @ n - (gv[K2] @ n if K2 >= 0 else 0.0)
        ref += eta * js * jv  # (eta / h_F) * |F|
    assert V @ (B @ S) == pytest.approx(ref, rel=1e-12)


def test_c0ip_needs_p2(mesh2):
    with pytest.raises(InvalidArgumentError):
        assemble_biharmonic_c0(LagrangeP0BC(mesh2, 1), 1.0)


# ----------------------------------------------------------------------
# loads
# ----------------------------------------------------------------------
def test_rhs_invariance_on_conforming(mesh4, rng):
    S = BrokenP(mesh4, 1)
    L = LagrangeP0BC(mesh4, 1)
    s = broken_copy(FeFunction(L, rng.standard_normal(L.dof_count)), 1)
    load = LoadFunctional(g0=lambda X: np.ones(len(X)))
    r = assemble_rhs(load, S, "ep")
    rule = quad_rule_triangle(4)
    ref = np.sum(s.evaluate(rule.points)[0] * rule.weights[None] * mesh4.areas[:, None])
    assert r @ s.coeffs == pytest.approx(ref, rel=1e-12)


def test_rhs_flux_load(mesh2):
    S = BrokenP(mesh2, 2)
    g = lambda X: np.column_stack([np.cos(X[:, 0]), X[:, 1] ** 2])
    r = assemble_rhs(LoadFunctional(g=g), S, "ep")
    assert np.all(np.isfinite(r)) and np.abs(r).max() > 0
    with pytest.raises(UndefinedPairingError):
        assemble_rhs(LoadFunctional(g=g), S, "identity")
    # conforming test functions accept the classical pairing
    assert np.all(np.isfinite(assemble_rhs(LoadFunctional(g=g), LagrangeP0BC(mesh2, 2), "identity")))


def test_rhs_matches_smoother_pullback(mesh2, rng):
    S = BrokenP(mesh2, 2)
    f = lambda X: np.exp(X[:, 0]) * X[:, 1]
    load = LoadFunctional(g0=f)
    r = assemble_rhs(load, S, "ep")
    E = build_ep(S)
    i = 7
    Ei = E.apply(FeFunction(S, np.eye(S.dof_count)[i]))
    rule = quad_rule_triangle(12)
    X = np.einsum("qi,eid->eqd", rule.points, mesh2.vertices[mesh2.elements])
    ref = np.sum(Ei.evaluate(rule.points)[0] * f(X.reshape(-1, 2)).reshape(X.shape[:2])
                 * rule.weights[None] * mesh2.areas[:, None])
    assert r[i] == pytest.approx(ref, rel=1e-12)


def test_rhs_unknown_smoother(mesh2):
    with pytest.raises(InvalidArgumentError):
        assemble_rhs(LoadFunctional(g0=lambda X: X[:, 0]), BrokenP(mesh2, 1), "magic")


def test_load_vector_constant(mesh2):
    L = LagrangeP(mesh2, 1)
    r = load_vector(LoadFunctional(g0=lambda X: np.ones(len(X))), L)
    assert r.sum() == pytest.approx(1.0, rel=1e-14)


# ----------------------------------------------------------------------
# penalty threshold
# ----------------------------------------------------------------------
def test_eta_star_scale_invariant_and_monotone():
    m = build_structured_unit_square(2)
    vals = []
    for _ in range(3):
        vals.append(estimate_eta_star(BrokenP(m, 1)))
        m = refine_uniform(m)
    assert max(vals) / min(vals) <= 1.02
    m = build_structured_unit_square(2)
    byp = [estimate_eta_star(BrokenP(m, p)) for p in (1, 2, 3)]
    assert 0 < byp[0] < np.inf
    assert byp == sorted(byp)
    assert byp == pytest.approx([12.0, 36.0, 72.0], rel=1e-8)
    assert estimate_eta_star(LagrangeP0BC(m, 2), order=2) == pytest.approx(12.0, rel=1e-8)
