"""Quasi-optimal interior penalty methods with smoothed right-hand sides.

Discontinuous Galerkin (SIP/NIP) for the Poisson problem, a penalised
Crouzeix-Raviart method for linear elasticity and a quadratic C0 interior
penalty method for the biharmonic problem, each pairing the load with
conforming smoothings of the discrete test functions.
"""
from .errors import (
    ConformityError,
    DegenerateDenominatorError,
    IndefiniteMatrixError,
    InvalidArgumentError,
    MeshFormatError,
    NumericalFailureError,
    QoipError,
    SingularSystemError,
    UndefinedPairingError,
    UnsupportedDegreeError,
)
from .forms import (
    LameCoefficients,
    LoadFunctional,
    PenaltyConfig,
    assemble_biharmonic_c0,
    assemble_elasticity_hl,
    assemble_extended_product,
    assemble_poisson_dg,
    assemble_rhs,
    estimate_eta_star,
)
from .mesh import Mesh, build_structured_unit_square, load_mesh, refine_uniform, validate
from .smoothers import (
    build_e1_vector,
    build_ec0,
    build_ep,
    build_ep_tilde,
    smoother_e1_vector,
    smoother_ec0,
    smoother_ep,
    smoother_ep_tilde,
)
from .solvers import SolveReport, solve_general, solve_spd
from .spaces import (
    BrokenP,
    CrouzeixRaviartVec,
    FeFunction,
    HCTSpace,
    LagrangeP,
    LagrangeP0BC,
    interpolate,
)

__version__ = "0.1.0"
