"""Manufactured solutions with their loads.

Smooth solutions are written symbolically and differentiated with sympy;
the kink solution is written by hand because its gradient is piecewise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sym

from ..errors import InvalidArgumentError
from ..forms import LoadFunctional

x, y = sym.symbols("x y", real=True)


def _vectorize(exprs):
    """Lambdify a nested list of expressions into ``f(X) -> (npts, *shape)``."""
    arr = np.array(exprs, dtype=object)
    flat = [sym.sympify(e) for e in arr.ravel()]
    fns = [sym.lambdify((x, y), e, "numpy") for e in flat]
    shape = arr.shape

    def f(X):
        X = np.asarray(X, dtype=float)
        n = len(X)
        cols = [np.broadcast_to(np.asarray(fn(X[:, 0], X[:, 1]), dtype=float), (n,))
                for fn in fns]
        return np.stack(cols, axis=-1).reshape((n,) + shape)

    return f


@dataclass
class ManufacturedSolution:
    """Exact solution, derivatives and load of a model problem."""

    name: str
    problem: str
    regularity: str
    u: Callable
    grad: Callable
    load: LoadFunctional
    hessian: Optional[Callable] = None
    notes: str = ""
    requires_even_mesh: bool = False
    extra: dict = field(default_factory=dict)


def _laplace(e):
    return sym.diff(e, x, 2) + sym.diff(e, y, 2)


def ms_p1():
    u = sym.sin(sym.pi * x) * sym.sin(sym.pi * y)
    g0 = sym.simplify(-_laplace(u))
    return ManufacturedSolution(
        "MS-P1", "poisson", "smooth",
        u=_vectorize(u),
        grad=_vectorize([sym.diff(u, x), sym.diff(u, y)]),
        load=LoadFunctional(g0=_vectorize(g0)),
        hessian=_vectorize([[sym.diff(u, a, b) for b in (x, y)] for a in (x, y)]),
        extra={"u_expr": u, "g0_expr": g0},
    )


def _kink_u(X):
    X = np.asarray(X, dtype=float)
    return np.minimum(X[:, 0], 1.0 - X[:, 0]) * X[:, 1] * (1.0 - X[:, 1])


def _kink_grad(X):
    X = np.asarray(X, dtype=float)
    px, py = X[:, 0], X[:, 1]
    left = px < 0.5
    m = np.minimum(px, 1.0 - px)
    dm = np.where(left, 1.0, -1.0)
    return np.column_stack([dm * py * (1.0 - py), m * (1.0 - 2.0 * py)])


def _kink_hessian(X):
    X = np.asarray(X, dtype=float)
    px, py = X[:, 0], X[:, 1]
    dm = np.where(px < 0.5, 1.0, -1.0)
    m = np.minimum(px, 1.0 - px)
    H = np.zeros((len(X), 2, 2))
    H[:, 0, 1] = H[:, 1, 0] = dm * (1.0 - 2.0 * py)
    H[:, 1, 1] = -2.0 * m
    return H


def ms_p2():
    """``u = min(x, 1 - x) y (1 - y)`` with the load in flux form ``g = grad u``.

    The load has a line part on ``x = 1/2`` and is not square integrable.
    Meshes must resolve the line ``x = 1/2``.
    """
    return ManufacturedSolution(
        "MS-P2", "poisson", "kink", u=_kink_u, grad=_kink_grad,
        load=LoadFunctional(g0=None, g=_kink_grad), hessian=_kink_hessian,
        requires_even_mesh=True,
    )


def ms_e1(mu=1.0):
    """Divergence-free displacement ``curl psi`` with ``psi = (x y (1-x)(1-y))^2``."""
    psi = (x * y * (1 - x) * (1 - y)) ** 2
    u = [sym.diff(psi, y), -sym.diff(psi, x)]
    grad = [[sym.diff(c, v) for v in (x, y)] for c in u]
    g0 = [sym.expand(-mu * _laplace(c)) for c in u]
    return ManufacturedSolution(
        "MS-E1", "elasticity", "smooth",
        u=_vectorize(u), grad=_vectorize(grad),
        load=LoadFunctional(g0=_vectorize(g0)),
        extra={"u_expr": u, "g0_expr": g0, "mu": mu},
    )


def ms_b1():
    u = x ** 2 * (1 - x) ** 2 * y ** 2 * (1 - y) ** 2
    g0 = sym.expand(_laplace(_laplace(u)))
    return ManufacturedSolution(
        "MS-B1", "biharmonic", "smooth",
        u=_vectorize(u), grad=_vectorize([sym.diff(u, x), sym.diff(u, y)]),
        load=LoadFunctional(g0=_vectorize(g0)),
        hessian=_vectorize([[sym.diff(u, a, b) for b in (x, y)] for a in (x, y)]),
        extra={"u_expr": u, "g0_expr": g0},
    )


def zero_solution(problem):
    """``u = 0`` with zero load, for any problem."""
    vec = problem == "elasticity"

    def u(X):
        return np.zeros((len(X), 2)) if vec else np.zeros(len(X))

    def grad(X):
        return np.zeros((len(X), 2, 2)) if vec else np.zeros((len(X), 2))

    def hess(X):
        return np.zeros((len(X), 2, 2))

    return ManufacturedSolution(f"ZERO-{problem}", problem, "smooth", u=u, grad=grad,
                                load=LoadFunctional(g0=lambda X: u(X)), hessian=hess)


CATALOG = {"MS-P1": ms_p1, "MS-P2": ms_p2, "MS-E1": ms_e1, "MS-B1": ms_b1}


def get_solution(name, **kw):
    try:
        return CATALOG[name.upper()](**kw)
    except KeyError:
        raise InvalidArgumentError(
            f"unknown manufactured solution {name!r}; choose from {sorted(CATALOG)}") from None
