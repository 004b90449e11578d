"""Discrete solves, error norms, best approximations and convergence studies."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..basis import quad_rule_triangle
from ..errors import DegenerateDenominatorError, InvalidArgumentError
from ..forms import (
    LameCoefficients,
    PenaltyConfig,
    assemble_biharmonic_c0,
    assemble_elasticity_hl,
    assemble_extended_product,
    assemble_poisson_dg,
    assemble_rhs,
    estimate_eta_star,
)
from ..mesh import build_structured_unit_square, load_mesh, refine_uniform
from ..solvers import solve_general, solve_spd
from ..spaces import BrokenP, CrouzeixRaviartVec, FaceTraces, FeFunction, LagrangeP0BC, jump_average_weights
from .solutions import get_solution

PROBLEMS = {
    "poisson": ("sip", "nip"),
    "elasticity": ("hl",),
    "biharmonic": ("c0ip",),
}
ERROR_QUADRATURE_DEGREE = 16


def _eta(cfg):
    return cfg.eta if isinstance(cfg, PenaltyConfig) else float(cfg)


def _order(problem):
    return 2 if problem == "biharmonic" else 1


def make_space(problem, mesh, p):
    if problem == "poisson":
        return BrokenP(mesh, p)
    if problem == "elasticity":
        if p != 1:
            raise InvalidArgumentError("the Crouzeix-Raviart method is implemented for p = 1")
        return CrouzeixRaviartVec(mesh)
    if problem == "biharmonic":
        if p != 2:
            raise InvalidArgumentError("the C0 interior penalty method is implemented for p = 2")
        return LagrangeP0BC(mesh, 2)
    raise InvalidArgumentError(f"unknown problem {problem!r}")


def default_eta(problem, p, mesh=None):
    """``10 p^2`` (Poisson), ``10`` (elasticity), ``4 eta_*`` (biharmonic)."""
    if problem == "poisson":
        return 10.0 * p * p
    if problem == "elasticity":
        return 10.0
    if mesh is None:
        raise InvalidArgumentError("the biharmonic default needs a mesh")
    return 4.0 * estimate_eta_star(LagrangeP0BC(mesh, 2), order=2)


# ----------------------------------------------------------------------
# Errors and best approximation
# ----------------------------------------------------------------------
def _derivative_data(order, lame, U_vals, u_vals):
    """Integrand of the volume part of the extended norm at quadrature points."""
    d = u_vals - U_vals
    if order == 2:
        return np.einsum("eqij,eqij->eq", d, d)
    if lame is not None:
        eps = 0.5 * (d + np.swapaxes(d, -1, -2))
        div = np.trace(d, axis1=-2, axis2=-1)
        return 2.0 * lame.mu * np.einsum("eqij,eqij->eq", eps, eps) + lame.lam * div ** 2
    return (d.reshape(d.shape[:2] + (-1,)) ** 2).sum(-1)


def _exact_derivatives(sol, mesh, rule, order):
    X = np.einsum("qi,eid->eqd", rule.points, mesh.vertices[mesh.elements])
    f = sol.hessian if order == 2 else sol.grad
    vals = np.asarray(f(X.reshape(-1, 2)), dtype=float)
    return vals.reshape(X.shape[:2] + vals.shape[1:])


def jump_seminorm_sq(U, cfg, order=1):
    """``sum_F eta/h_F ||[U]||^2_F`` (or of ``[d_n U]`` for ``order=2``)."""
    space = U.space
    mesh = space.mesh
    eta = _eta(cfg)
    if eta == 0:
        return 0.0
    tr = FaceTraces(space, 2 * space.degree, order=order - 1)
    c = U.coeffs[np.maximum(tr.dofs, 0)] * (tr.dofs >= 0)
    if order == 1:
        t = np.einsum("fsl...,fsl->fs...", tr.values, c)
    else:
        t = np.einsum("fslqd,fsl,fd->fsq", tr.gradients, c, mesh.face_normals)
    wj, _ = jump_average_weights(mesh)
    J = np.einsum("fs...,fs->f...", t, wj)
    J2 = (J.reshape(J.shape[0], J.shape[1], -1) ** 2).sum(-1)
    return float(np.sum(eta / mesh.face_lengths * (J2 @ tr.rule.weights) * mesh.face_lengths))


def energy_error(sol, U, cfg, order=1, lame=None, degree=ERROR_QUADRATURE_DEGREE):
    """Extended energy norm of ``u - U`` (``u`` has no jumps)."""
    mesh = U.space.mesh
    rule = quad_rule_triangle(degree)
    ud = _exact_derivatives(sol, mesh, rule, order)
    Ud = U.evaluate(rule.points, order)[order]
    w = rule.weights[None, :] * mesh.areas[:, None]
    vol = float(np.sum(_derivative_data(order, lame, Ud, ud) * w))
    return math.sqrt(max(vol + jump_seminorm_sq(U, cfg, order), 0.0))


def best_approximation(sol, space, cfg, order=1, lame=None, degree=ERROR_QUADRATURE_DEGREE):
    """Orthogonal projection of ``u`` onto ``space`` in the extended scalar product."""
    mesh = space.mesh
    G = assemble_extended_product(space, cfg, order=order, lame=lame)
    rule = quad_rule_triangle(degree)
    ud = _exact_derivatives(sol, mesh, rule, order)
    tab = space.tabulate(rule.points, order)[order]
    w = rule.weights[None, :] * mesh.areas[:, None]
    if order == 2:
        local = np.einsum("elqij,eqij,eq->el", tab, ud, w)
    elif lame is not None:
        eps_t = 0.5 * (tab + np.swapaxes(tab, -1, -2))
        eps_u = 0.5 * (ud + np.swapaxes(ud, -1, -2))
        div_t = np.trace(tab, axis1=-2, axis2=-1)
        div_u = np.trace(ud, axis1=-2, axis2=-1)
        local = (2.0 * lame.mu * np.einsum("elqij,eqij,eq->el", eps_t, eps_u, w)
                 + lame.lam * np.einsum("elq,eq,eq->el", div_t, div_u, w))
    else:
        extra = "ab" if tab.ndim == 5 else "a"
        local = np.einsum(f"elq{extra},eq{extra},eq->el", tab, ud, w)
    from ..sparse_utils import scatter_vector

    rhs = scatter_vector(space.cell_dofs, local, space.dof_count)
    x, _ = solve_spd(G, rhs)
    return FeFunction(space, x)


def qopt_ratio(error, best_error, tol=1e-12):
    """``||u - U|| / ||u - R_S u||``; undefined when the best error is at round-off level."""
    if best_error <= 10.0 * tol:
        raise DegenerateDenominatorError(
            f"best approximation error {best_error:.3e} too small for a meaningful ratio")
    return error / best_error


# ----------------------------------------------------------------------
# Methods
# ----------------------------------------------------------------------
_SMOOTHER_KEYS = {
    ("poisson", "full"): "ep",
    ("poisson", "tilde"): "ep_tilde",
    ("elasticity", "full"): "e1_vector",
    ("biharmonic", "full"): "ec0",
}


def smoother_key(problem, smoother):
    if smoother == "identity":
        return "identity"
    key = _SMOOTHER_KEYS.get((problem, smoother))
    if key is None:
        raise InvalidArgumentError(f"smoother {smoother!r} not available for {problem}")
    return key


def assemble_method(problem, variant, space, cfg, lame=None):
    if variant not in PROBLEMS.get(problem, ()):
        raise InvalidArgumentError(f"variant {variant!r} not available for {problem!r}")
    if problem == "poisson":
        return assemble_poisson_dg(space, cfg, variant)
    if problem == "elasticity":
        return assemble_elasticity_hl(space, cfg, lame or LameCoefficients())
    return assemble_biharmonic_c0(space, cfg)


def run_method(problem, variant, p, cfg, smoother, load, mesh, lame=None):
    """Assemble and solve one discrete problem; returns ``(U, SolveReport)``."""
    space = make_space(problem, mesh, p)
    B = assemble_method(problem, variant, space, cfg, lame)
    r = assemble_rhs(load, space, smoother_key(problem, smoother))
    if variant == "nip":
        x, rep = solve_general(B, r)
    else:
        x, rep = solve_spd(B, r)
    return FeFunction(space, x), rep


# ----------------------------------------------------------------------
# Studies
# ----------------------------------------------------------------------
@dataclass
class ConvergenceRecord:
    level: int
    h: float
    dofs: int
    energy_error: float
    best_error: float
    ratio: float
    eoc: Optional[float]
    solve: dict = field(default_factory=dict)


@dataclass
class StudyConfig:
    problem: str = "poisson"
    variant: str = "sip"
    p: int = 1
    eta: Optional[float] = None
    smoother: str = "full"
    solution: str = "MS-P1"
    mesh: str = "builtin:square:2"
    levels: int = 4
    mu: float = 1.0
    lam: float = 1.0


def mesh_hierarchy(source, levels):
    """Meshes for ``levels`` uniform refinements of ``builtin:square:N`` or a mesh file."""
    if source.startswith("builtin:square:"):
        mesh = build_structured_unit_square(int(source.rsplit(":", 1)[1]))
    elif source.startswith("builtin:"):
        raise InvalidArgumentError(f"unknown builtin mesh {source!r}")
    else:
        mesh = load_mesh(source)
    out = [mesh]
    for _ in range(levels):
        out.append(refine_uniform(out[-1]))
    return out


def _check_kink_mesh(sol, mesh):
    if not sol.requires_even_mesh:
        return
    # the kink line x = 1/2 must not cross any element
    xs = mesh.vertices[mesh.elements][:, :, 0]
    crossing = (xs.min(axis=1) < 0.5 - 1e-12) & (xs.max(axis=1) > 0.5 + 1e-12)
    if np.any(crossing):
        raise InvalidArgumentError(f"{sol.name} needs a mesh resolving the line x = 1/2")


def eoc_list(h, errors):
    out = [None]
    for k in range(1, len(errors)):
        if errors[k] > 0 and errors[k - 1] > 0:
            out.append(math.log(errors[k - 1] / errors[k]) / math.log(h[k - 1] / h[k]))
        else:
            out.append(None)
    return out


def convergence_study(config):
    """Run every level of ``config`` and return ``(records, metadata)``."""
    sol_kw = {"mu": config.mu} if config.problem == "elasticity" else {}
    sol = get_solution(config.solution, **sol_kw)
    if sol.problem != config.problem:
        raise InvalidArgumentError(f"{sol.name} belongs to the {sol.problem} problem")
    lame = LameCoefficients(config.mu, config.lam) if config.problem == "elasticity" else None
    order = _order(config.problem)
    meshes = mesh_hierarchy(config.mesh, config.levels - 1)
    records, etas = [], []
    for level, mesh in enumerate(meshes):
        _check_kink_mesh(sol, mesh)
        eta = config.eta if config.eta is not None else default_eta(config.problem, config.p, mesh)
        etas.append(eta)
        cfg = PenaltyConfig(eta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            U, rep = run_method(config.problem, config.variant, config.p, cfg,
                                config.smoother, sol.load, mesh, lame)
        err = energy_error(sol, U, cfg, order, lame)
        R = best_approximation(sol, U.space, cfg, order, lame)
        best = energy_error(sol, R, cfg, order, lame)
        try:
            ratio = qopt_ratio(err, best)
        except DegenerateDenominatorError:
            ratio = float("nan")
        records.append(ConvergenceRecord(level, float(mesh.h_max), U.space.dof_count, err, best,
                                         ratio, None, asdict(rep)))
    for rec, e in zip(records, eoc_list([r.h for r in records], [r.energy_error for r in records])):
        rec.eoc = e
    meta = {
        "problem": config.problem, "variant": config.variant, "p": config.p,
        "smoother": config.smoother, "solution": sol.name, "eta": etas,
        "gamma": float(meshes[0].gamma), "mu": config.mu if lame else None,
        "lambda": config.lam if lame else None,
    }
    return records, meta


CSV_COLUMNS = ["level", "h", "dofs", "energy_error", "best_error", "ratio", "eoc"]


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in CSV_COLUMNS])


def write_json(records, meta, path):
    with open(path, "w") as fh:
        json.dump({"metadata": meta, "records": [asdict(r) for r in records]}, fh, indent=2,
                  default=float)


def compare_variants(levels=4, n0=2, eta=10.0, mu=1.0, lam=1.0, solution=None):
    """``||U - U_hat||_{lambda;eta}`` between the smoothed and the classical right-hand side.

    Both use the penalised Crouzeix-Raviart matrix; ``U`` pairs the load with
    smoothed test functions, ``U_hat`` with the Crouzeix-Raviart functions
    themselves (square-integrable loads only).
    """
    sol = solution or get_solution("MS-E1", mu=mu)
    if sol.load.g is not None:
        raise InvalidArgumentError("the classical pairing needs a load without flux part")
    lame = LameCoefficients(mu, lam)
    cfg = PenaltyConfig(eta)
    rows = []
    for level, mesh in enumerate(mesh_hierarchy(f"builtin:square:{n0}", levels - 1)):
        space = CrouzeixRaviartVec(mesh)
        B = assemble_elasticity_hl(space, cfg, lame)
        x, _ = solve_spd(B, assemble_rhs(sol.load, space, "e1_vector"))
        xh, _ = solve_spd(B, assemble_rhs(sol.load, space, "identity"))
        d = x - xh
        rows.append({"level": level, "h": float(mesh.h_max), "dofs": space.dof_count,
                     "difference": float(math.sqrt(max(d @ (B @ d), 0.0)))})
    for row, e in zip(rows, eoc_list([r["h"] for r in rows], [r["difference"] for r in rows])):
        row["eoc"] = e
    return rows
