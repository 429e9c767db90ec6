"""Quantized Lax equations on a q-deformed spin chain, checked numerically."""

from .chain import ChainSystem, LaxMatrices, build_chain, lax_m_site, shifted_monodromy
from .errors import (
    CapacityError,
    FactorizationError,
    NumericError,
    ParameterError,
    QlaxError,
    ShapeError,
    SingularityError,
    UsageError,
)
from .evolution import (
    FactorizationResult,
    g_full,
    g_minus,
    g_plus,
    g_site,
    gauss_factorize,
    heisenberg_evolve,
    lax_ode_integrate,
    solve_chain_lax,
    solve_lax,
)
from .rmatrix import RMatrix, build_r, quantum_trace_matrix, r_pm
from .tensor import Leg, LegShape, Operator, embed, kron, mat_exp, mat_inv, partial_trace

__version__ = "0.1.0"
