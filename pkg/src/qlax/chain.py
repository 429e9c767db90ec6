"""Periodic chain built from copies of R: L-operators, monodromies, Lax matrices.

Leg conventions: single-aux objects (Lⁿ, ψⁿ, T, M^{±n}) live on
``("a", "s1", ..., "sN")``; identities involving two auxiliary copies use
``("a1", "a2", "s1", ...)``; the Hamiltonian acts on the site legs only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

from .errors import CapacityError, ParameterError
from .rmatrix import RMatrix, pair_shape, r_pm
from .tensor import (
    AUX,
    SITE,
    Leg,
    LegShape,
    Operator,
    chain_shape,
    commutator,
    embed,
    identity,
    mat_inv,
    partial_trace,
    rel_residual,
)

MAX_SITES = 10
MAX_DIM = 2**11


@dataclass(frozen=True, eq=False)
class LaxMatrices:
    """M^{±n} for n = 1..N+1 (index 0 holds n = 1)."""

    m_plus_site: tuple[Operator, ...]
    m_minus_site: tuple[Operator, ...]

    @property
    def m_plus(self) -> Operator:
        return self.m_plus_site[0]

    @property
    def m_minus(self) -> Operator:
        return self.m_minus_site[0]

    @property
    def m(self) -> Operator:
        return self.m_plus - self.m_minus


@dataclass(frozen=True, eq=False)
class ChainSystem:
    r: RMatrix
    n_sites: int
    tower_depth: int
    shape: LegShape
    site_ops: tuple[Operator, ...]
    psi: tuple[Operator, ...]
    monodromy: Operator
    hamiltonian: Operator
    ham_tower: tuple[Operator, ...]
    lax: LaxMatrices

    @property
    def d(self) -> int:
        return self.r.d

    @property
    def site_shape(self) -> LegShape:
        return self.shape.select(SITE)

    def two_aux_shape(self) -> LegShape:
        return chain_shape(["a1", "a2"], self.n_sites, self.d)

    def one_h(self) -> Operator:
        """1 ⊗ h on the single-aux chain shape."""
        return embed(self.hamiltonian, self.shape)


def _site_op(r: RMatrix, n: int, shape: LegShape) -> Operator:
    local = r.r.with_shape(LegShape.of(Leg("a", r.d, AUX), Leg(f"s{n}", r.d, SITE)))
    return embed(local, shape)


def _on_aux(x: Operator, label: str, target: LegShape) -> Operator:
    return embed(x.relabel({"a": label}), target)


def _lax_m(r: RMatrix, t: Operator, psi_n: Operator, sign: str, n_sites: int) -> Operator:
    # M^{∓} is built from R^{±}: the sign crosses.
    source = {"+": "-", "-": "+"}[sign]
    two = chain_shape(["a1", "a2"], n_sites, r.d)
    rinv = embed(mat_inv(r_pm(r, source)), two)
    shifted = mat_inv(psi_n) @ t @ psi_n
    x = (identity(two) - rinv) @ _on_aux(shifted, "a1", two)
    return partial_trace(x, "a1").relabel({"a2": "a"})


def lax_m_from_monodromy(r: RMatrix, t: Operator, sign: str) -> Operator:
    """Global M^± = Tr₁[(1 − (R^∓)⁻¹) T₁] for an arbitrary monodromy T."""
    n_sites = len(t.shape.select(SITE))
    return _lax_m(r, t, identity(t.shape), sign, n_sites)


def trace_tower(t: Operator, k: int, n_sites: int, d: int) -> Operator:
    """Tr over k aux copies of T₁T₂⋯T_k (the trace of T in v^{⊗k})."""
    labels = [f"a{j}" for j in range(1, k + 1)]
    shape = chain_shape(labels, n_sites, d)
    prod = reduce(lambda x, y: x @ y, (_on_aux(t, label, shape) for label in labels))
    for label in labels:
        prod = partial_trace(prod, label)
    return prod


def build_chain(r: RMatrix, n_sites: int, tower_depth: int = 3) -> ChainSystem:
    if n_sites < 1:
        raise ParameterError(f"need at least one site, got {n_sites}")
    if tower_depth < 1:
        raise ParameterError(f"tower depth must be >= 1, got {tower_depth}")
    if n_sites > MAX_SITES:
        raise CapacityError(f"{n_sites} sites exceeds the cap of {MAX_SITES}")
    widest = r.d ** (n_sites + max(2, tower_depth))
    if widest > MAX_DIM:
        raise CapacityError(
            f"dense dimension {widest} (N={n_sites}, tower depth {tower_depth}) exceeds {MAX_DIM}"
        )
    shape = chain_shape(["a"], n_sites, r.d)
    site_ops = tuple(_site_op(r, n, shape) for n in range(1, n_sites + 1))
    psi = [identity(shape)]
    for op in site_ops:
        psi.append(psi[-1] @ op)
    t = psi[-1]
    h = partial_trace(t, "a")
    tower = tuple(trace_tower(t, k, n_sites, r.d) for k in range(1, tower_depth + 1))
    lax = LaxMatrices(
        m_plus_site=tuple(_lax_m(r, t, p, "+", n_sites) for p in psi),
        m_minus_site=tuple(_lax_m(r, t, p, "-", n_sites) for p in psi),
    )
    return ChainSystem(
        r=r,
        n_sites=n_sites,
        tower_depth=tower_depth,
        shape=shape,
        site_ops=site_ops,
        psi=tuple(psi),
        monodromy=t,
        hamiltonian=h,
        ham_tower=tower,
        lax=lax,
    )


def _check_site(c: ChainSystem, n: int, upper: int) -> None:
    if not 1 <= n <= upper:
        raise ParameterError(f"site index {n} outside 1..{upper}")


def lax_m_site(c: ChainSystem, n: int, sign: str) -> Operator:
    """M^{±n}; n = 1 is the global Lax matrix, n = N+1 closes the chain."""
    _check_site(c, n, c.n_sites + 1)
    if sign == "+":
        return c.lax.m_plus_site[n - 1]
    if sign == "-":
        return c.lax.m_minus_site[n - 1]
    raise ParameterError(f"sign must be '+' or '-', got {sign!r}")


def shifted_monodromy(c: ChainSystem, n: int) -> Operator:
    """(ψⁿ)⁻¹ T ψⁿ = Lⁿ⋯L^N L¹⋯Lⁿ⁻¹."""
    _check_site(c, n, c.n_sites + 1)
    p = c.psi[n - 1]
    return mat_inv(p) @ c.monodromy @ p


def rtt_residual(r: RMatrix, x: Operator) -> float:
    """Relative residual of R₁₂X₁X₂ = X₂X₁R₁₂ for X on ("a", sites...)."""
    n_sites = len(x.shape.select(SITE))
    two = chain_shape(["a1", "a2"], n_sites, r.d)
    r12 = embed(r.r.with_shape(pair_shape(r.d)), two)
    x1 = _on_aux(x, "a1", two)
    x2 = _on_aux(x, "a2", two)
    return rel_residual(r12 @ x1 @ x2, x2 @ x1 @ r12)


def ultralocality_residual(c: ChainSystem) -> float:
    """max over i≠j of ‖[Lⁱ₁, Lʲ₂]‖ relative to ‖Lʲ₂Lⁱ₁‖."""
    two = c.two_aux_shape()
    worst = 0.0
    for i, li in enumerate(c.site_ops):
        for j, lj in enumerate(c.site_ops):
            if i == j:
                continue
            a = _on_aux(li, "a1", two)
            b = _on_aux(lj, "a2", two)
            worst = max(worst, rel_residual(a @ b, b @ a))
    return worst


def tower_commutator_residual(c: ChainSystem) -> float:
    worst = 0.0
    for hj in c.ham_tower:
        for hk in c.ham_tower:
            worst = max(worst, rel_residual(hj @ hk, hk @ hj))
    return worst


def trace_cyclicity_residual(c: ChainSystem, n: int) -> float:
    return rel_residual(partial_trace(shifted_monodromy(c, n), "a"), c.hamiltonian)


def prop1_residuals(c: ChainSystem) -> tuple[float, float]:
    """(‖[1⊗h, T] − [M⁺, T]‖, ‖[1⊗h, T] − [M⁻, T]‖), relative."""
    t = c.monodromy
    lhs = commutator(c.one_h(), t)
    return (
        rel_residual(lhs, commutator(c.lax.m_plus, t)),
        rel_residual(lhs, commutator(c.lax.m_minus, t)),
    )


def prop5_residual(c: ChainSystem, n: int, sign: str) -> float:
    """‖[1⊗h, Lⁿ] − (M^{±n}Lⁿ − LⁿM^{±(n+1)})‖, relative."""
    _check_site(c, n, c.n_sites)
    ln = c.site_ops[n - 1]
    lhs = commutator(c.one_h(), ln)
    rhs = lax_m_site(c, n, sign) @ ln - ln @ lax_m_site(c, n + 1, sign)
    return rel_residual(lhs, rhs)


def closure_residual(c: ChainSystem, sign: str) -> float:
    """M^{±(N+1)} computed from ψ^{N+1} = T against M^{±1}."""
    return rel_residual(lax_m_site(c, c.n_sites + 1, sign), lax_m_site(c, 1, sign))


def _thm2_sides(c: ChainSystem, n: int, sign: str) -> tuple[Operator, Operator]:
    two = c.two_aux_shape()
    rinv = embed(mat_inv(r_pm(c.r, sign)), two)
    p = c.psi[n - 1]
    p1, p2 = _on_aux(p, "a1", two), _on_aux(p, "a2", two)
    p1_inv, p2_inv = _on_aux(mat_inv(p), "a1", two), _on_aux(mat_inv(p), "a2", two)
    t1 = _on_aux(c.monodromy, "a1", two)
    return p1 @ rinv @ p1_inv @ t1, p2_inv @ rinv @ t1 @ p2


def thm2_conjugation_residual(c: ChainSystem, n: int, sign: str) -> float:
    """ψ₁ⁿ(R^±)⁻¹(ψ₁ⁿ)⁻¹T₁ = (ψ₂ⁿ)⁻¹(R^±)⁻¹T₁ψ₂ⁿ, checked on both aux legs."""
    _check_site(c, n, c.n_sites)
    lhs, rhs = _thm2_sides(c, n, sign)
    return rel_residual(lhs, rhs)


def thm2_conjugation_traced_residual(c: ChainSystem, n: int, sign: str) -> float:
    """Same identity after tracing out aux leg 1."""
    _check_site(c, n, c.n_sites)
    lhs, rhs = _thm2_sides(c, n, sign)
    return rel_residual(partial_trace(lhs, "a1"), partial_trace(rhs, "a1"))
