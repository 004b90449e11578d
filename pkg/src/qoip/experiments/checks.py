"""Moment-conservation and invariance checks for the smoothing operators.

Each check returns a :class:`CheckResult` with the worst residual observed;
they back both the ``check-smoothers`` command and the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..basis import lagrange_tabulate, quad_rule_edge, quad_rule_triangle
from ..mesh import build_structured_unit_square
from ..smoothers import NormalBubbles, build_e1_vector, build_ec0, build_ep, build_ep_tilde
from ..spaces import BrokenP, CrouzeixRaviartVec, FaceTraces, FeFunction, LagrangeP0BC

# c_F |F| that normalises the unsquared product; the squared product used here
# has face integral |F|/630 instead.
UNSQUARED_BUBBLE_CONSTANT = 30.0


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


def _face_trace_values(fe, tr):
    """Traces ``(nf, 2, nq, ...)`` of a function on both sides of every face."""
    c = fe.coeffs[np.maximum(tr.dofs, 0)] * (tr.dofs >= 0)
    return [np.einsum("fslq...,fsl->fsq...", d, c) for d in tr.data]


def face_moment_residual(sigma, E_sigma, p):
    """Worst relative mismatch of ``int_F q E sigma`` against ``int_F q {sigma}``.

    Runs over interior faces and the edge-Lagrange basis of degree ``p - 1``.
    """
    mesh = sigma.space.mesh
    inner = mesh.interior_faces
    deg = 2 * p + 4
    ts = _face_trace_values(sigma, FaceTraces(sigma.space, deg, 0))[0][inner]
    te = _face_trace_values(E_sigma, FaceTraces(E_sigma.space, deg, 0))[0][inner]
    rule = quad_rule_edge(deg)
    Lq = lagrange_tabulate(p - 1, rule.points)[0]  # (p, nq)
    w = rule.weights * 1.0
    L = mesh.face_lengths[inner]
    avg = 0.5 * (ts[:, 0] + ts[:, 1])
    ms = np.einsum("fq...,jq,q->fj...", avg, Lq, w) * L.reshape((-1,) + (1,) * (avg.ndim - 1))
    me = np.einsum("fq...,jq,q->fj...", te[:, 0], Lq, w) * L.reshape((-1,) + (1,) * (avg.ndim - 1))
    scale = max(np.abs(ms).max(), 1e-300)
    return float(np.abs(ms - me).max() / scale)


def element_moment_residual(sigma, E_sigma, p):
    """Worst relative mismatch of ``int_K r E sigma`` against ``int_K r sigma``, ``r`` of degree ``p-2``."""
    if p < 2:
        return 0.0
    mesh = sigma.space.mesh
    rule = quad_rule_triangle(2 * p + 2)
    R = lagrange_tabulate(p - 2, rule.points)[0]
    vs = sigma.evaluate(rule.points)[0]
    ve = E_sigma.evaluate(rule.points)[0]
    ms = (vs * rule.weights) @ R.T * mesh.areas[:, None]
    me = (ve * rule.weights) @ R.T * mesh.areas[:, None]
    return float(np.abs(ms - me).max() / max(np.abs(ms).max(), 1e-300))


def max_difference(f, g, degree=8):
    rule = quad_rule_triangle(degree)
    return float(np.abs(f.evaluate(rule.points)[0] - g.evaluate(rule.points)[0]).max())


def broken_copy(fe, p):
    """Represent a conforming Lagrange function of degree ``<= p`` in ``BrokenP(p)``."""
    from ..basis import lagrange_interpolation_matrix

    S = BrokenP(fe.space.mesh, p)
    M = lagrange_interpolation_matrix(fe.space.degree, p)
    return FeFunction(S, (fe.local_coeffs() @ M.T).ravel())


def conformity_residual(fe, order=0):
    """Largest mismatch of traces (order 0: values, 1: gradients) across interior faces."""
    mesh = fe.space.mesh
    tr = FaceTraces(fe.space, 2 * fe.space.degree + 2, order)
    t = _face_trace_values(fe, tr)[order][mesh.interior_faces]
    return float(np.abs(t[:, 0] - t[:, 1]).max())


def ec0_moment_residuals(sigma, E_sigma):
    """Normal and tangential mean-gradient residuals of the C^1 smoother on interior faces."""
    mesh = sigma.space.mesh
    rule = quad_rule_edge(14)
    t = rule.points[:, 1]
    worst_n = worst_t = 0.0
    scale = 0.0
    from ..basis import face_barycentric

    gs = [sigma.evaluate(face_barycentric(i, t), 1)[1] for i in range(3)]
    ge = [E_sigma.evaluate(face_barycentric(i, t), 1)[1] for i in range(3)]
    vs = sigma.evaluate(np.eye(3), 0)[0]  # vertex values per element
    for F in mesh.interior_faces:
        K1, K2 = mesh.face_elements[F]
        i1, i2 = mesh.face_local[F]
        f1 = mesh.element_face_flip[K1, i1]
        f2 = mesh.element_face_flip[K2, i2]
        g1 = gs[i1][K1][::-1] if f1 else gs[i1][K1]
        g2 = gs[i2][K2][::-1] if f2 else gs[i2][K2]
        e1 = ge[i1][K1][::-1] if f1 else ge[i1][K1]
        L = mesh.face_lengths[F]
        n = mesh.face_normals[F]
        a, b = mesh.face_vertices[F]
        tan = (mesh.vertices[b] - mesh.vertices[a]) / L
        avg = 0.5 * (g1 + g2)
        mn = (avg @ n) @ rule.weights * L
        en = (e1 @ n) @ rule.weights * L
        et = (e1 @ tan) @ rule.weights * L
        la = int(np.argmax(mesh.elements[K1] == a))
        lb = int(np.argmax(mesh.elements[K1] == b))
        dt = vs[K1, lb] - vs[K1, la]
        worst_n = max(worst_n, abs(mn - en))
        worst_t = max(worst_t, abs(et - dt))
        scale = max(scale, abs(mn), abs(dt))
    scale = max(scale, 1e-300)
    return worst_n / scale, worst_t / scale


def bubble_duality_residual(mesh, bubbles=None):
    """``max |int_F' d_n' bubble_F - delta_FF'|`` over interior faces ``F'`` of the patch of ``F``."""
    bubbles = bubbles or NormalBubbles(mesh)
    rule = quad_rule_edge(14)
    from ..basis import face_barycentric

    worst = 0.0
    for j in range(3):
        grads = bubbles.tabulate(face_barycentric(j, rule.points[:, 1]), 1)[1]  # (ne,3,nq,2)
        Fp = mesh.element_faces[:, j]
        n = mesh.face_normals[Fp]
        flux = np.einsum("eiqd,ed,q->ei", grads, n, rule.weights) * mesh.face_lengths[Fp][:, None]
        own = mesh.element_faces  # (ne, 3) faces whose bubbles live on K
        delta = (own == Fp[:, None]).astype(float)
        mask = bubbles.interior & ~mesh.boundary_faces_mask[Fp][:, None]
        worst = max(worst, float(np.abs(np.where(mask, flux - delta, 0.0)).max()))
    return worst


def run_smoother_checks(sizes=(2, 4), samples=20, seed=0, tol=1e-10):
    """Moment conservation and invariance of every smoother on structured meshes."""
    rng = np.random.default_rng(seed)
    results = []
    for n in sizes:
        mesh = build_structured_unit_square(n)
        for p in (1, 2, 3):
            S = BrokenP(mesh, p)
            variants = [("E", build_ep(S))]
            if p >= 2:
                variants.append(("E~", build_ep_tilde(S)))
            for label, op in variants:
                wf = we = 0.0
                for _ in range(samples):
                    s = FeFunction(S, rng.standard_normal(S.dof_count))
                    Es = op.apply(s)
                    wf = max(wf, face_moment_residual(s, Es, p))
                    we = max(we, element_moment_residual(s, Es, p))
                results.append(CheckResult(f"n={n} {label}_{p} face moments", wf, tol))
                if p >= 2:
                    results.append(CheckResult(f"n={n} {label}_{p} element moments", we, tol))
                q = p if label == "E" else 1
                L = LagrangeP0BC(mesh, q)
                wi = 0.0
                for _ in range(samples):
                    c = FeFunction(L, rng.standard_normal(L.dof_count))
                    wi = max(wi, max_difference(op.apply(broken_copy(c, p)), c))
                results.append(CheckResult(f"n={n} {label}_{p} invariance on degree-{q} Lagrange", wi, tol))
        V = CrouzeixRaviartVec(mesh)
        op = build_e1_vector(V)
        w = 0.0
        for _ in range(samples):
            s = FeFunction(V, rng.standard_normal(V.dof_count))
            w = max(w, face_moment_residual(s, op.apply(s), 1))
        results.append(CheckResult(f"n={n} E_1 vector face means", w, tol))
        P2 = LagrangeP0BC(mesh, 2)
        ec0 = build_ec0(P2)
        wn = wt = 0.0
        for _ in range(samples):
            s = FeFunction(P2, rng.standard_normal(P2.dof_count))
            a, b = ec0_moment_residuals(s, ec0.apply(s))
            wn, wt = max(wn, a), max(wt, b)
        results.append(CheckResult(f"n={n} E_C0 normal mean gradients", wn, tol))
        results.append(CheckResult(f"n={n} E_C0 tangential mean gradients", wt, tol))
        z = ec0.apply(P2.zero())
        zval = max(float(np.abs(z.hct.coeffs).max(initial=0.0)), float(np.abs(z.beta).max()))
        results.append(CheckResult(f"n={n} E_C0 fixes zero", zval, tol))
    return results


def bubble_report(n=2):
    """Duality residual and the observed normalisation constant ``c_F |F|``."""
    mesh = build_structured_unit_square(n)
    bub = NormalBubbles(mesh)
    inner = mesh.interior_faces
    cf = bub.constants[inner] * mesh.face_lengths[inner]
    return {
        "duality_residual": bubble_duality_residual(mesh, bub),
        "c_F_times_length_min": float(cf.min()),
        "c_F_times_length_max": float(cf.max()),
        "unsquared_constant": UNSQUARED_BUBBLE_CONSTANT,
    }
