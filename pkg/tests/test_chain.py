import numpy as np
import pytest

from qlax import build_chain, build_r
from qlax.chain import (
    MAX_SITES,
    closure_residual,
    lax_m_from_monodromy,
    lax_m_site,
    prop1_residuals,
    prop5_residual,
    rtt_residual,
    shifted_monodromy,
    thm2_conjugation_residual,
    thm2_conjugation_traced_residual,
    tower_commutator_residual,
    trace_cyclicity_residual,
    ultralocality_residual,
)
from qlax.errors import CapacityError, ParameterError
from qlax.tensor import commutator, rel_residual, triangular_residual


def dense_lax_m(r_mat, t_mat, sign, d=2):
    """Tr₁[(1 − (R^∓)⁻¹) T₁] by einsum on raw arrays."""
    if sign == "+":
        kernel = np.eye(d * d) - r_mat
    else:
        r21 = r_mat.reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d)
        kernel = np.eye(d * d) - np.linalg.inv(r21)
    m = t_mat.shape[0] // d
    k = kernel.reshape(d, d, d, d)
    t = t_mat.reshape(d, m, d, m)
    return np.einsum("aybc,bsat->ysct", k, t).reshape(d * m, d * m)


def test_single_site_monodromy_is_r(r13):
    c = build_chain(r13, 1)
    np.testing.assert_array_equal(c.monodromy.data, r13.matrix)
    assert c.monodromy.labels == ("a", "s1")


def test_classical_chain():
    c = build_chain(build_r(1.0), 3)
    np.testing.assert_array_equal(c.monodromy.data, np.eye(16))
    np.testing.assert_array_equal(c.hamiltonian.data, 2 * np.eye(8))
    assert c.lax.m_plus.norm() == 0
    assert c.lax.m_minus.norm() == 0


def test_hamiltonian_dense_oracle(chain2, r13):
    # T = L¹L² with Lⁿ = R on (a, sn); h = Tr_a T
    r = r13.matrix
    l1 = np.kron(r, np.eye(2))
    # 1 ⊗ R has leg order (s1, a, s2); reorder to (a, s1, s2)
    l2 = np.kron(np.eye(2), r).reshape(2, 2, 2, 2, 2, 2).transpose(1, 0, 2, 4, 3, 5).reshape(8, 8)
    t = l1 @ l2
    np.testing.assert_allclose(chain2.monodromy.data, t, atol=1e-14)
    h = np.trace(t.reshape(2, 4, 2, 4), axis1=0, axis2=2)
    np.testing.assert_allclose(chain2.hamiltonian.data, h, atol=1e-14)


def test_tower_commutes_and_is_power(chain2, chain3):
    for c in (chain2, chain3):
        assert tower_commutator_residual(c) < 1e-11
        h = c.hamiltonian.data
        for k, hk in enumerate(c.ham_tower, start=1):
            np.testing.assert_allclose(hk.data, np.linalg.matrix_power(h, k), rtol=1e-12, atol=1e-12)


def test_rtt(chain2, chain3, r13):
    for c in (chain2, chain3):
        assert rtt_residual(r13, c.monodromy) < 1e-11
        for p in c.psi:
            assert rtt_residual(r13, p) < 1e-11
        assert ultralocality_residual(c) < 1e-12


def test_rtt_fails_for_non_solution(chain2, r13):
    assert rtt_residual(r13, chain2.monodromy + 0.1 * chain2.one_h()) > 1e-3


@pytest.mark.parametrize("sign", ["+", "-"])
def test_lax_m_dense_oracle(chain2, chain3, r13, sign):
    for c in (chain2, chain3):
        expected = dense_lax_m(r13.matrix, c.monodromy.data, sign)
        np.testing.assert_allclose(lax_m_site(c, 1, sign).data, expected, atol=1e-13)
        got = lax_m_from_monodromy(r13, c.monodromy, sign)
        np.testing.assert_allclose(got.data, expected, atol=1e-13)


def test_lax_m_triangular(chain3):
    # M⁺ is built from R (aux leg upper-triangular), M⁻ from R21⁻¹ (lower)
    assert triangular_residual(chain3.lax.m_plus, "a", "lower") < 1e-12
    assert triangular_residual(chain3.lax.m_minus, "a", "upper") < 1e-12


def test_prop1_residuals(chain2, chain3):
    for c in (chain2, chain3):
        plus, minus = prop1_residuals(c)
        assert plus < 1e-10
        assert minus < 1e-10
    assert prop1_residuals(build_chain(build_r(1.0), 2)) == (0.0, 0.0)


def test_prop1_q07_three_sites():
    plus, minus = prop1_residuals(build_chain(build_r(0.7), 3))
    assert max(plus, minus) < 1e-10


def test_full_m_commutes_with_monodromy(chain3):
    assert commutator(chain3.lax.m, chain3.monodromy).norm() / chain3.monodromy.norm() < 1e-10


@pytest.mark.parametrize("sign", ["+", "-"])
def test_prop5_and_closure(chain2, chain3, sign):
    for c in (chain2, chain3):
        for n in range(1, c.n_sites + 1):
            assert prop5_residual(c, n, sign) < 1e-10
        assert closure_residual(c, sign) < 1e-11


def test_shifted_monodromy(r13):
    c = build_chain(r13, 3)
    l1, l2, l3 = c.site_ops
    assert rel_residual(shifted_monodromy(c, 1), c.monodromy) < 1e-14
    assert rel_residual(shifted_monodromy(c, 4), c.monodromy) < 1e-12
    assert rel_residual(shifted_monodromy(c, 2), l2 @ l3 @ l1) < 1e-12
    assert rel_residual(shifted_monodromy(c, 3), l3 @ l1 @ l2) < 1e-12
    for n in range(1, 5):
        assert trace_cyclicity_residual(c, n) < 1e-11


def test_site_index_bounds(chain2):
    with pytest.raises(ParameterError):
        lax_m_site(chain2, 4, "+")
    with pytest.raises(ParameterError):
        lax_m_site(chain2, 1, "x")
    with pytest.raises(ParameterError):
        prop5_residual(chain2, 3, "+")
    with pytest.raises(ParameterError):
        shifted_monodromy(chain2, 0)


@pytest.mark.parametrize("sign", ["+", "-"])
def test_conjugation_identity(chain2, chain3, sign):
    assert thm2_conjugation_residual(chain2, 1, sign) < 1e-14
    for c in (chain2, chain3):
        for n in range(1, c.n_sites + 1):
            assert thm2_conjugation_residual(c, n, sign) < 1e-11
            assert thm2_conjugation_traced_residual(c, n, sign) < 1e-11
    classical = build_chain(build_r(1.0), 2)
    assert thm2_conjugation_residual(classical, 2, sign) == 0.0


def test_capacity_limits(r13):
    with pytest.raises(CapacityError):
        build_chain(r13, MAX_SITES + 1)
    with pytest.raises(CapacityError):
        build_chain(r13, 9, 3)
    with pytest.raises(ParameterError):
        build_chain(r13, 0)
    with pytest.raises(ParameterError):
        build_chain(r13, 2, 0)
