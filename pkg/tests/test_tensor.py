import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlax.errors import NumericError, ShapeError, SingularityError
from qlax.tensor import (
    AUX,
    Leg,
    LegShape,
    Operator,
    chain_shape,
    embed,
    identity,
    kron,
    mat_exp,
    mat_inv,
    partial_trace,
    permute,
    rel_residual,
    triangular_residual,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def op(labels, data, dim=2):
    return Operator(LegShape(tuple(Leg(label, dim) for label in labels)), data)


def crandn(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_shape_rejects_duplicate_labels():
    with pytest.raises(ShapeError):
        LegShape.of(Leg("s1", 2), Leg("s1", 2))


def test_shape_total_dimension():
    shape = LegShape.of(Leg("a", 2, AUX), Leg("s1", 3), Leg("s2", 4))
    assert shape.total == 24
    assert chain_shape(["a"], 3).labels == ("a", "s1", "s2", "s3")


def test_operator_data_mismatch():
    with pytest.raises(ShapeError):
        op(["s1"], np.eye(3))


def test_operator_is_read_only():
    x = op(["s1"], np.eye(2))
    with pytest.raises(ValueError):
        x.data[0, 0] = 5


def test_arithmetic_needs_matching_shapes():
    with pytest.raises(ShapeError):
        op(["s1"], np.eye(2)) @ op(["s2"], np.eye(2))


def test_kron_identity():
    got = kron(op(["s1"], np.eye(2)), op(["s2"], np.eye(2)))
    assert got.labels == ("s1", "s2")
    np.testing.assert_array_equal(got.data, np.eye(4))


def test_kron_basis_placement():
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1
    e22 = np.zeros((2, 2))
    e22[1, 1] = 1
    got = kron(op(["s1"], e11), op(["s2"], e22)).data
    expected = np.zeros((4, 4))
    expected[1, 1] = 1
    np.testing.assert_array_equal(got, expected)


def test_kron_duplicate_label():
    with pytest.raises(ShapeError):
        kron(op(["s1"], np.eye(2)), op(["s1"], np.eye(2)))


def test_kron_inverse_pair(rng):
    a, b = crandn(rng, 2), crandn(rng, 2)
    left = kron(op(["s1"], a), op(["s2"], b))
    right = kron(op(["s1"], np.linalg.inv(a)), op(["s2"], np.linalg.inv(b)))
    # dense oracle
    np.testing.assert_allclose((left @ right).data, np.eye(4), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_kron_associative_and_bilinear(seed):
    rng = np.random.default_rng(seed)
    a, b, c, a2 = (crandn(rng, 2) for _ in range(4))
    s = complex(rng.normal(), rng.normal())
    x, y, z = op(["s1"], a), op(["s2"], b), op(["s3"], c)
    assert rel_residual(kron(kron(x, y), z), kron(x, kron(y, z))) < 1e-12
    lin = kron(op(["s1"], a + s * a2), y)
    assert rel_residual(lin, kron(x, y) + s * kron(op(["s1"], a2), y)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_kron_mixed_product(seed):
    rng = np.random.default_rng(seed)
    a, b, c, d = (crandn(rng, 2) for _ in range(4))
    lhs = kron(op(["s1"], a), op(["s2"], b)) @ kron(op(["s1"], c), op(["s2"], d))
    assert rel_residual(lhs, kron(op(["s1"], a @ c), op(["s2"], b @ d))) < 1e-12


def test_embed_identity():
    target = LegShape.of(Leg("s1", 2), Leg("s2", 2))
    np.testing.assert_array_equal(embed(op(["s1"], np.eye(2)), target).data, np.eye(4))


def test_embed_noop(rng):
    x = op(["s1"], crandn(rng, 2))
    np.testing.assert_array_equal(embed(x, x.shape).data, x.data)


def test_embed_matches_kron(rng):
    x = crandn(rng, 2)
    target = LegShape.of(Leg("s1", 2), Leg("s2", 2))
    np.testing.assert_allclose(embed(op(["s2"], x), target).data, np.kron(np.eye(2), x))
    np.testing.assert_allclose(embed(op(["s1"], x), target).data, np.kron(x, np.eye(2)))


def test_embed_on_separate_legs_commute(rng):
    target = LegShape.of(Leg("s1", 2), Leg("s2", 2))
    for _ in range(5):
        x = embed(op(["s2"], crandn(rng, 2)), target)
        y = embed(op(["s1"], crandn(rng, 2)), target)
        assert rel_residual(x @ y, y @ x) < 1e-13


def test_embed_two_leg_operator_index_oracle(rng):
    # operator on (s3, s1) placed into (s1, s2, s3); compare against explicit index loop
    x = crandn(rng, 4)
    target = LegShape.of(Leg("s1", 2), Leg("s2", 2), Leg("s3", 2))
    got = embed(op(["s3", "s1"], x), target).data
    expected = np.zeros((8, 8), dtype=complex)
    for i1 in range(2):
        for i2 in range(2):
            for i3 in range(2):
                for j1 in range(2):
                    for j3 in range(2):
                        expected[i1 * 4 + i2 * 2 + i3, j1 * 4 + i2 * 2 + j3] = x[i3 * 2 + i1, j3 * 2 + j1]
    np.testing.assert_allclose(got, expected)


def test_embed_errors():
    target = LegShape.of(Leg("s1", 2), Leg("s2", 2))
    with pytest.raises(ShapeError):
        embed(op(["s3"], np.eye(2)), target)
    with pytest.raises(ShapeError):
        embed(op(["s1"], np.eye(3), dim=3), target)


def test_partial_trace_identity_factor(rng):
    a = crandn(rng, 2)
    x = kron(op(["s1"], np.eye(2)), op(["s2"], a))
    got = partial_trace(x, "s1")
    assert got.labels == ("s2",)
    np.testing.assert_allclose(got.data, 2 * a)


def test_partial_trace_of_product(rng):
    a, b = crandn(rng, 2), crandn(rng, 2)
    x = kron(op(["s1"], a), op(["s2"], b))
    assert rel_residual(partial_trace(x, "s1"), np.trace(a) * b) < 1e-14
    assert rel_residual(partial_trace(x, "s2"), np.trace(b) * a) < 1e-14


def test_partial_trace_index_sum_oracle(rng):
    x = crandn(rng, 4)
    expected = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        bra = np.kron(np.eye(2)[i], np.eye(2))  # ⟨i| ⊗ 1, shape (2, 4)
        expected += bra @ x @ bra.T
    got = partial_trace(op(["s1", "s2"], x), "s1").data
    np.testing.assert_allclose(got, expected, atol=1e-14)


def test_partial_trace_unknown_label():
    with pytest.raises(ShapeError):
        partial_trace(op(["s1"], np.eye(2)), "s9")


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_permute_round_trip_is_exact(seed):
    rng = np.random.default_rng(seed)
    x = op(["s1", "s2", "s3"], crandn(rng, 8))
    y = permute(permute(x, ["s3", "s1", "s2"]), ["s1", "s2", "s3"])
    assert np.array_equal(y.data, x.data)


def test_mat_exp_trivial():
    shape = LegShape.of(Leg("s1", 2))
    np.testing.assert_array_equal(mat_exp(Operator(shape, np.zeros((2, 2)))).data, np.eye(2))
    got = mat_exp(Operator(shape, np.diag([1j * np.pi, 0]))).data
    np.testing.assert_allclose(got, np.diag([-1, 1]), atol=1e-15)


def _bounded(rng, n, bound=2.0):
    a = crandn(rng, n)
    return a * (bound * rng.uniform() / np.linalg.norm(a, 2))


def test_mat_exp_inverse_pair(rng):
    for _ in range(5):
        a = op(["s1", "s2"], _bounded(rng, 4))
        np.testing.assert_allclose((mat_exp(a) @ mat_exp(-a)).data, np.eye(4), atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(-1, 1), st.floats(-1, 1))
def test_mat_exp_group_law(seed, s, t):
    a = op(["s1", "s2"], _bounded(np.random.default_rng(seed), 4))
    assert rel_residual(mat_exp(s * a) @ mat_exp(t * a), mat_exp((s + t) * a)) < 1e-10


def test_mat_exp_rejects_nonfinite():
    with pytest.raises(NumericError):
        mat_exp(op(["s1"], np.array([[np.nan, 0], [0, 1]])))


def test_mat_inv_trivial():
    np.testing.assert_array_equal(mat_inv(op(["s1"], np.eye(2))).data, np.eye(2))
    np.testing.assert_allclose(mat_inv(op(["s1"], np.diag([2.0, 4.0]))).data, np.diag([0.5, 0.25]))


def test_mat_inv_residual(rng):
    a = crandn(rng, 8) + 8 * np.eye(8)
    x = op(["s1", "s2", "s3"], a)
    assert np.linalg.norm((x @ mat_inv(x)).data - np.eye(8)) < 1e-11


def test_mat_inv_singular():
    with pytest.raises(SingularityError):
        mat_inv(op(["s1"], np.array([[1.0, 2.0], [2.0, 4.0]])))
    with pytest.raises(SingularityError):
        mat_inv(op(["s1"], np.diag([1.0, 1e-13])))


def test_rel_residual_normalization():
    shape = LegShape.of(Leg("s1", 2))
    small = Operator(shape, 1e-3 * np.eye(2))
    assert rel_residual(Operator(shape, np.zeros((2, 2))), small) == pytest.approx(np.sqrt(2) * 1e-3)
    big = Operator(shape, 100 * np.eye(2))
    assert rel_residual(Operator(shape, 101 * np.eye(2)), big) == pytest.approx(1 / 100)


def test_triangular_residual_blocks():
    shape = chain_shape(["a"], 1)
    x = np.zeros((4, 4))
    x[2, 0] = 3.0  # aux block (1, 0)
    t = Operator(shape, x)
    assert triangular_residual(t, "a", "upper") == 0
    assert triangular_residual(t, "a", "lower") == pytest.approx(1.0)
    assert identity(shape).norm() == pytest.approx(2.0)
