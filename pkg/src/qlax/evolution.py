"""Time evolution, closed-form factors g_±(t) and block Gauss factorization.

Every evolved quantity is obtained by conjugation with matrix exponentials.
:func:`lax_ode_integrate` is a Runge-Kutta integrator kept only as an
independent cross-check of the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain import ChainSystem, lax_m_from_monodromy, lax_m_site, trace_tower
from .errors import FactorizationError, ParameterError, ShapeError
from .tensor import (
    AUX,
    COND_LIMIT,
    SITE,
    Operator,
    aux_blocks,
    embed,
    from_aux_blocks,
    identity,
    mat_exp,
    mat_inv,
    partial_trace,
    rel_residual,
    triangular_residual,
)

MAX_ODE_STEPS = 10**6


class LaxForms(NamedTuple):
    """One evolved operator computed three independent ways."""

    plus: Operator
    minus: Operator
    heisenberg: Operator

    def max_disagreement(self) -> float:
        return max(
            rel_residual(self.plus, self.heisenberg),
            rel_residual(self.minus, self.heisenberg),
            rel_residual(self.plus, self.minus),
        )


class SiteFactors(NamedTuple):
    full: Operator
    plus: Operator
    minus: Operator


@dataclass(frozen=True, eq=False)
class EvolutionState:
    t: float
    chain: ChainSystem
    g_full: Operator
    g_plus: Operator
    g_minus: Operator
    T_t: Operator
    L_t: tuple[Operator, ...]


@dataclass(frozen=True, eq=False)
class FactorizationResult:
    lower: Operator
    upper: Operator
    normalization: str
    reconstruction_residual: float
    # aux off-diagonal part of reference⁻¹·lower; None without a reference
    gauge_residual: float | None = None

    def lower_residual(self) -> float:
        """Strictly-upper aux blocks of ``lower``."""
        return triangular_residual(self.lower, self.lower.labels[0], "upper")

    def upper_residual(self) -> float:
        """Strictly-lower aux blocks of ``upper``."""
        return triangular_residual(self.upper, self.upper.labels[0], "lower")


def heisenberg_evolve(x: Operator, h: Operator, t: float) -> Operator:
    """exp(−ith)·x·exp(ith), the solution of i ẋ = [h, x]."""
    if any(leg.kind != SITE for leg in h.shape.legs):
        raise ShapeError(f"Hamiltonian must act on site legs only, got {h.labels}")
    big = embed(h, x.shape)
    return mat_exp(-1j * t * big) @ x @ mat_exp(1j * t * big)


def _plus_factor(one_h: Operator, m_plus: Operator, t: float) -> Operator:
    return mat_exp(-1j * t * one_h) @ mat_exp(-1j * t * (m_plus - one_h))


def _minus_factor(one_h: Operator, m_minus: Operator, t: float) -> Operator:
    return mat_exp(-1j * t * (one_h - m_minus)) @ mat_exp(1j * t * one_h)


def g_plus(c: ChainSystem, t: float) -> Operator:
    """exp(−it(1⊗h))·exp(−it(M⁺(0) − 1⊗h)); solves i ġ₊ = M⁺(t) g₊."""
    return _plus_factor(c.one_h(), c.lax.m_plus, t)


def g_minus(c: ChainSystem, t: float) -> Operator:
    """exp(−it(1⊗h − M⁻(0)))·exp(it(1⊗h)); solves i ġ₋ = −g₋ M⁻(t)."""
    return _minus_factor(c.one_h(), c.lax.m_minus, t)


def g_full(c: ChainSystem, t: float) -> Operator:
    return mat_exp(-1j * t * c.lax.m)


def lax_m_at(c: ChainSystem, t_op: Operator, sign: str) -> Operator:
    """M^± recomputed from an evolved monodromy."""
    return lax_m_from_monodromy(c.r, t_op, sign)


def solve_lax_forms(c: ChainSystem, t: float) -> LaxForms:
    t0 = c.monodromy
    gp = g_plus(c, t)
    gm = g_minus(c, t)
    return LaxForms(
        plus=gp @ t0 @ mat_inv(gp),
        minus=mat_inv(gm) @ t0 @ gm,
        heisenberg=heisenberg_evolve(t0, c.hamiltonian, t),
    )


def solve_lax(c: ChainSystem, t: float) -> Operator:
    """T(t) = g₊(t)·T(0)·g₊(t)⁻¹."""
    gp = g_plus(c, t)
    return gp @ c.monodromy @ mat_inv(gp)


def g_site(c: ChainSystem, n: int, t: float) -> SiteFactors:
    """gⁿ(t) = (ψⁿ)⁻¹ exp(−itM) ψⁿ together with its closed-form factors g^n_±."""
    one_h = c.one_h()
    m_plus = lax_m_site(c, n, "+")
    m_minus = lax_m_site(c, n, "-")
    p = c.psi[n - 1]
    return SiteFactors(
        full=mat_inv(p) @ g_full(c, t) @ p,
        plus=_plus_factor(one_h, m_plus, t),
        minus=_minus_factor(one_h, m_minus, t),
    )


def _check_chain_site(c: ChainSystem, n: int) -> None:
    if not 1 <= n <= c.n_sites:
        raise ParameterError(f"site index {n} outside 1..{c.n_sites}")


def solve_chain_lax_forms(c: ChainSystem, n: int, t: float) -> LaxForms:
    _check_chain_site(c, n)
    here = g_site(c, n, t)
    nxt = g_site(c, n + 1, t)
    ln = c.site_ops[n - 1]
    return LaxForms(
        plus=here.plus @ ln @ mat_inv(nxt.plus),
        minus=mat_inv(here.minus) @ ln @ nxt.minus,
        heisenberg=heisenberg_evolve(ln, c.hamiltonian, t),
    )


def solve_chain_lax(c: ChainSystem, n: int, t: float) -> Operator:
    """Lⁿ(t) = g₊ⁿ(t)·Lⁿ(0)·(g₊ⁿ⁺¹(t))⁻¹, with N+1 read through ψ^{N+1} = T."""
    _check_chain_site(c, n)
    return g_site(c, n, t).plus @ c.site_ops[n - 1] @ mat_inv(g_site(c, n + 1, t).plus)


def evolve(c: ChainSystem, t: float) -> EvolutionState:
    return EvolutionState(
        t=t,
        chain=c,
        g_full=g_full(c, t),
        g_plus=g_plus(c, t),
        g_minus=g_minus(c, t),
        T_t=solve_lax(c, t),
        L_t=tuple(solve_chain_lax(c, n, t) for n in range(1, c.n_sites + 1)),
    )


def evolved_tower(c: ChainSystem, t: float) -> tuple[Operator, ...]:
    """h_k(t): the trace tower rebuilt from the evolved monodromy."""
    tt = solve_lax(c, t)
    return tuple(trace_tower(tt, k, c.n_sites, c.d) for k in range(1, c.tower_depth + 1))


def _solve_block(pivot: np.ndarray, rhs: np.ndarray, side: str) -> np.ndarray:
    cond = np.linalg.cond(pivot)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise FactorizationError(f"pivot block has condition number {cond:.3e}")
    if side == "right":  # rhs · pivot⁻¹
        return np.linalg.solve(pivot.T, rhs.T).T
    return np.linalg.solve(pivot, rhs)


def gauss_factorize(
    g: Operator,
    normalization: str = "unit-lower",
    reference_lower: Operator | None = None,
) -> FactorizationResult:
    """Block LU in the auxiliary leg with operator-valued (site) entries.

    No pivoting: permuting aux blocks would break the lower/upper structure.
    For d = 2 and unit-lower normalization, g = [[a, b], [c, d]] gives
    lower = [[1, 0], [c a⁻¹, 1]] and upper = [[a, b], [0, d − c a⁻¹ b]].
    Unit-upper moves the diagonal blocks of ``upper`` into ``lower``.
    """
    aux = [leg for leg in g.shape.legs if leg.kind == AUX]
    if len(aux) != 1 or g.shape.legs[0].kind != AUX:
        raise ShapeError(f"need exactly one leading aux leg, got {g.labels}")
    if normalization not in ("unit-lower", "unit-upper"):
        raise ParameterError(f"unknown normalization {normalization!r}")
    label = aux[0].label
    a = aux_blocks(g, label)
    d, _, m, _ = a.shape
    eye = np.eye(m, dtype=np.complex128)
    lo = np.zeros_like(a)
    up = np.zeros_like(a)
    for k in range(d):
        lo[k, k] = eye
        for j in range(k, d):
            up[k, j] = a[k, j] - sum((lo[k, s] @ up[s, j] for s in range(k)), np.zeros((m, m)))
        for i in range(k + 1, d):
            acc = a[i, k] - sum((lo[i, s] @ up[s, k] for s in range(k)), np.zeros((m, m)))
            lo[i, k] = _solve_block(up[k, k], acc, "right")
    if normalization == "unit-upper":
        diag = [up[k, k].copy() for k in range(d)]
        for k in range(d):
            for i in range(k, d):
                lo[i, k] = lo[i, k] @ diag[k]
            for j in range(k, d):
                up[k, j] = _solve_block(diag[k], up[k, j], "left")
    lower = from_aux_blocks(lo, g.shape)
    upper = from_aux_blocks(up, g.shape)
    gauge = None
    if reference_lower is not None:
        gauge = triangular_residual(mat_inv(reference_lower) @ lower, label, "offdiag")
    return FactorizationResult(
        lower=lower,
        upper=upper,
        normalization=normalization,
        reconstruction_residual=rel_residual(lower @ upper, g),
        gauge_residual=gauge,
    )


def lax_ode_integrate(c: ChainSystem, t_end: float, dt: float) -> Operator:
    """Classical RK4 for i Ṫ = [M⁺(T), T], M⁺ recomputed from T at every stage."""
    if not (dt > 0 and math.isfinite(dt)):
        raise ParameterError(f"step size must be positive, got {dt}")
    if t_end < 0 or not math.isfinite(t_end):
        raise ParameterError(f"t_end must be finite and non-negative, got {t_end}")
    if t_end / dt > MAX_ODE_STEPS:
        raise ParameterError(f"t_end/dt = {t_end / dt:.3g} exceeds {MAX_ODE_STEPS} steps")
    t_op = c.monodromy
    if t_end == 0:
        return t_op
    steps = max(1, math.ceil(t_end / dt - 1e-9))
    step = t_end / steps
    rhs = _lax_vector_field(c)
    y = t_op.data.copy()
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return Operator(t_op.shape, y)


def _lax_vector_field(c: ChainSystem):
    """Array-level Ṫ = −i[M⁺(T), T] with M⁺(T) = Tr₁[(1 − R₁₂)T₁]."""
    two = c.two_aux_shape()
    kernel = (identity(two) - embed(c.r.r, two)).data
    shape = c.shape

    def rhs(y: np.ndarray) -> np.ndarray:
        t1 = embed(Operator(shape, y).relabel({"a": "a1"}), two).data
        x = Operator(two, kernel @ t1)
        mp = partial_trace(x, "a1").data
        return -1j * (mp @ y - y @ mp)

    return rhs
