"""Constant GL_q(d) R-matrix, its ± variants and the quantum-trace matrix D."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SingularityError
from .tensor import (
    AUX,
    COND_LIMIT,
    Leg,
    LegShape,
    Operator,
    embed,
    mat_inv,
    partial_trace,
    rel_residual,
)

LOWER_UPPER = "lower-upper"
YBE_TOL = 1e-12


def pair_shape(d: int, first: str = "a1", second: str = "a2") -> LegShape:
    return LegShape.of(Leg(first, d, AUX), Leg(second, d, AUX))


def flip(d: int) -> np.ndarray:
    """Swap operator P on C^d ⊗ C^d."""
    p = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            p[j * d + i, i * d + j] = 1.0
    return p


@dataclass(frozen=True, eq=False)
class RMatrix:
    q: complex
    d: int
    r: Operator
    convention: str = LOWER_UPPER

    @property
    def matrix(self) -> np.ndarray:
        return self.r.data


@dataclass(frozen=True, eq=False)
class QTraceMatrix:
    dmat: np.ndarray


def _unit(d: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((d, d))
    e[i, j] = 1.0
    return e


def build_r(q: complex = 1.3, d: int = 2) -> RMatrix:
    """R = q Σ E_ii⊗E_ii + Σ_{i≠j} E_ii⊗E_jj + (q − 1/q) Σ_{i>j} E_ij⊗E_ji.

    Every nontrivial term has a lower-triangular first factor and an
    upper-triangular second factor.
    """
    if q == 0 or not np.isfinite(q):
        raise ParameterError(f"q must be finite and nonzero, got {q!r}")
    if d < 1:
        raise ParameterError(f"local dimension must be positive, got {d}")
    mat = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            coeff = q if i == j else 1.0
            mat += coeff * np.kron(_unit(d, i, i), _unit(d, j, j))
            if i > j:
                mat += (q - 1 / q) * np.kron(_unit(d, i, j), _unit(d, j, i))
    if np.isreal(q):
        q = float(np.real(q))
    rm = RMatrix(q=q, d=d, r=Operator(pair_shape(d), mat))
    res = yang_baxter_residual(rm)
    if res >= YBE_TOL:
        raise AssertionError(f"constructed R violates Yang-Baxter: residual {res:.3e}")
    return rm


def r_pm(r: RMatrix, sign: str) -> Operator:
    """R⁺ = R₂₁ (flip-conjugated) and R⁻ = R₁₂⁻¹."""
    if sign == "+":
        p = flip(r.d)
        return Operator(r.r.shape, p @ r.matrix @ p)
    if sign == "-":
        return mat_inv(r.r)
    raise ParameterError(f"sign must be '+' or '-', got {sign!r}")


def _on(r: RMatrix, first: str, second: str, target: LegShape) -> Operator:
    return embed(r.r.with_shape(pair_shape(r.d, first, second)), target)


def yang_baxter_residual(r: RMatrix) -> float:
    """Relative residual of R₁₂R₁₃R₂₃ = R₂₃R₁₃R₁₂ on three aux legs."""
    shape = LegShape(tuple(Leg(f"a{k}", r.d, AUX) for k in (1, 2, 3)))
    r12 = _on(r, "a1", "a2", shape)
    r13 = _on(r, "a1", "a3", shape)
    r23 = _on(r, "a2", "a3", shape)
    return rel_residual(r12 @ r13 @ r23, r23 @ r13 @ r12)


def triangular_split_residual(r: RMatrix) -> float:
    """Norm of the coefficients of E_ij⊗E_kl with i<j or k>l.

    Zero exactly when R ∈ (lower) ⊗ (upper) in the matrix-unit basis.
    """
    d = r.d
    t = r.matrix.reshape(d, d, d, d)  # t[i, k, j, l] = coeff of E_ij ⊗ E_kl
    i, k, j, l = np.indices(t.shape)
    bad = (i < j) | (k > l)
    return float(np.linalg.norm(t[bad]))


def hecke_residual(r: RMatrix) -> float:
    """‖(PR − q)(PR + 1/q)‖_F; a normalization sanity check."""
    eye = np.eye(r.d * r.d)
    pr = flip(r.d) @ r.matrix
    return float(np.linalg.norm((pr - r.q * eye) @ (pr + eye / r.q)))


def inverse_residual(r: RMatrix) -> float:
    rinv = r_pm(r, "-").data
    eye = np.eye(r.d * r.d)
    return max(rel_residual(rinv @ r.matrix, eye), rel_residual(r.matrix @ rinv, eye))


def _qtrace_map(r: RMatrix) -> np.ndarray:
    """Matrix of the linear map D ↦ Tr₁(R̂⁻¹ D₁) on vec(D), R̂ = P R."""
    d = r.d
    rhat_inv = np.linalg.inv(flip(d) @ r.matrix)
    shape = pair_shape(d)
    cols = []
    for k in range(d):
        for l in range(d):
            dk = np.kron(_unit(d, k, l), np.eye(d))
            cols.append(partial_trace(Operator(shape, rhat_inv @ dk), "a1").data.ravel())
    return np.stack(cols, axis=1)


def quantum_trace_matrix(r: RMatrix) -> QTraceMatrix:
    """The unique D with Tr₁(R̂₁₂⁻¹ D₁) = 1."""
    a = _qtrace_map(r)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularityError(f"degenerate R: quantum-trace system has condition {cond:.3e}")
    vec = np.linalg.solve(a, np.eye(r.d).ravel())
    return QTraceMatrix(dmat=vec.reshape(r.d, r.d))


def qtrace_residual(r: RMatrix, qt: QTraceMatrix) -> float:
    got = (_qtrace_map(r) @ qt.dmat.ravel()).reshape(r.d, r.d)
    return rel_residual(got, np.eye(r.d))
