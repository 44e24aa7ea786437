import numpy as np
import pytest

from pf2fit.core import (
    ImplicitEvolving,
    Pf2Factors,
    SliceStack,
    materialize,
    reconstruct_slice,
    reconstruct_stack,
    sq_frobenius,
)

from helpers import feasible_factors, random_factors


class TestSliceStack:
    def test_basic_shape_accessors(self):
        stack = SliceStack([np.ones((2, 3)), np.ones((2, 5))])
        assert stack.K == 2
        assert stack.I == 2
        assert stack.J == (3, 5)
        assert len(stack) == 2

    def test_rejects_mismatched_rows(self):
        with pytest.raises(ValueError, match="rows"):
            SliceStack([np.ones((2, 3)), np.ones((3, 3))])

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            SliceStack([])
        with pytest.raises(ValueError, match="finite"):
            SliceStack([np.array([[1.0, np.nan]])])

    def test_slices_are_readonly(self):
        stack = SliceStack([np.ones((2, 2))])
        with pytest.raises(ValueError):
            stack[0][0, 0] = 5.0
        with pytest.raises(AttributeError):
            stack.slices = ()


class TestPf2Factors:
    def test_shape_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="columns"):
            Pf2Factors(rng.standard_normal((3, 2)), np.ones((2, 3)), [np.ones((4, 2))] * 2)
        with pytest.raises(ValueError, match="slices"):
            Pf2Factors(rng.standard_normal((3, 2)), np.ones((2, 2)), [np.ones((4, 2))] * 3)

    def test_accessors(self):
        factors = random_factors(np.random.default_rng(1))
        assert factors.rank == 2
        assert factors.K == 3
        assert factors.J == (5, 6, 4)


class TestReconstruct:
    def test_identity_factors(self):
        factors = Pf2Factors(np.eye(2), [[1.0, 1.0]], [np.eye(2)])
        assert np.allclose(reconstruct_slice(factors, 0), np.eye(2))

    def test_diagonal_scaling(self):
        factors = Pf2Factors(np.eye(2), [[2.0, 3.0]], [np.eye(2)])
        assert np.allclose(reconstruct_slice(factors, 0), np.diag([2.0, 3.0]))

    def test_matches_entrywise_triple_sum(self):
        rng = np.random.default_rng(7)
        factors = random_factors(rng, I=4, J=(3,), R=2)
        got = reconstruct_slice(factors, 0)
        want = np.zeros((4, 3))
        for i in range(4):
            for j in range(3):
                for r in range(2):
                    want[i, j] += factors.A[i, r] * factors.D[0, r] * factors.B[0][j, r]
        assert np.abs(got - want).max() <= 1e-12

    def test_index_out_of_range(self):
        factors = random_factors(np.random.default_rng(0))
        with pytest.raises(IndexError):
            reconstruct_slice(factors, 3)
        with pytest.raises(IndexError):
            reconstruct_slice(factors, -1)

    def test_linear_in_each_factor_block(self):
        rng = np.random.default_rng(3)
        factors = random_factors(rng, I=4, J=(5, 6, 4), R=3)
        base = reconstruct_slice(factors, 1)
        scaled_a = Pf2Factors(2.5 * factors.A, factors.D, factors.B)
        scaled_d = Pf2Factors(factors.A, 2.5 * np.asarray(factors.D), factors.B)
        scaled_b = Pf2Factors(factors.A, factors.D, [2.5 * Bk for Bk in factors.B])
        for scaled in (scaled_a, scaled_d, scaled_b):
            assert np.allclose(reconstruct_slice(scaled, 1), 2.5 * base, atol=1e-12)


class TestSqFrobenius:
    def test_zero(self):
        assert sq_frobenius(np.zeros((3, 2))) == 0.0

    def test_three_four_five(self):
        assert sq_frobenius(np.array([[3.0, 4.0]])) == 25.0

    def test_matches_entry_loop(self):
        rng = np.random.default_rng(11)
        M = rng.standard_normal((5, 4))
        want = sum(M[i, j] ** 2 for i in range(5) for j in range(4))
        assert abs(sq_frobenius(M) - want) <= 1e-14

    def test_stack_is_sum_over_slices(self):
        rng = np.random.default_rng(12)
        stack = SliceStack([rng.standard_normal((3, Jk)) for Jk in (4, 2, 5)])
        assert abs(
            sq_frobenius(stack) - sum(sq_frobenius(Xk) for Xk in stack)
        ) <= 1e-12


class TestImplicitEvolving:
    def test_materialize_identity_delta(self):
        rng = np.random.default_rng(5)
        _, P, _ = feasible_factors(rng, R=2)
        implicit = ImplicitEvolving(P, np.eye(2))
        for Bk, Pk in zip(materialize(implicit), P):
            assert np.allclose(Bk, Pk)

    def test_equal_bases_give_equal_blocks(self):
        rng = np.random.default_rng(6)
        _, P, delta = feasible_factors(rng, J=(5, 5), R=2)
        implicit = ImplicitEvolving([P[0], P[0]], delta)
        B = materialize(implicit)
        assert np.array_equal(B[0], B[1])

    def test_constant_cross_product(self):
        rng = np.random.default_rng(8)
        _, P, delta = feasible_factors(rng, J=(6, 7, 5), R=2)
        implicit = ImplicitEvolving(P, delta)
        gram = delta.T @ delta
        for Bk in materialize(implicit):
            assert np.linalg.norm(Bk.T @ Bk - gram) <= 1e-12

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            ImplicitEvolving([np.ones((3, 2))], np.eye(2))


def test_reconstruct_stack_roundtrip():
    rng = np.random.default_rng(9)
    factors = random_factors(rng)
    stack = reconstruct_stack(factors)
    for k in range(factors.K):
        assert np.array_equal(stack[k], reconstruct_slice(factors, k))
