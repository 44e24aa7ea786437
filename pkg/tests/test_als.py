import numpy as np

from pf2fit.als import AlsConfig, cp_cycle, fit_als
from pf2fit.core import reconstruct_stack
from pf2fit.metrics import fms, relative_sse
from pf2fit.simulate import SimSpec, simulate_dataset
from pf2fit.solver import SolverConfig, fit_ao_admm

from helpers import random_factors, random_stack


def cp_sse(Y, A, delta, D):
    return sum(
        np.sum(((A * D[k]) @ delta.T - Y[:, :, k]) ** 2) for k in range(Y.shape[2])
    )


class TestCpCycle:
    def test_exact_data_is_a_fixed_point(self):
        rng = np.random.default_rng(0)
        I, R, K = 6, 2, 4
        A = rng.standard_normal((I, R))
        delta = rng.standard_normal((R, R))
        D = rng.uniform(0.5, 1.5, (K, R))
        Y = np.stack([(A * D[k]) @ delta.T for k in range(K)], axis=2)
        A2, delta2, D2 = cp_cycle(Y, A.copy(), delta.copy(), D.copy())
        assert np.abs(A2 - A).max() <= 1e-12
        assert np.abs(delta2 - delta).max() <= 1e-12
        assert np.abs(D2 - D).max() <= 1e-12

    def test_sse_non_increasing_on_random_data(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            Y = rng.standard_normal((5, 2, 3))
            A = rng.standard_normal((5, 2))
            delta = rng.standard_normal((2, 2))
            D = rng.uniform(0.5, 1.5, (3, 2))
            before = cp_sse(Y, A, delta, D)
            A, delta, D = cp_cycle(Y, A, delta, D)
            assert cp_sse(Y, A, delta, D) <= before + 1e-12

    def test_a_update_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(2)
        I, R, K = 5, 2, 3
        Y = rng.standard_normal((I, R, K))
        A = rng.standard_normal((I, R))
        delta = rng.standard_normal((R, R))
        D = rng.uniform(0.5, 1.5, (K, R))
        A2, _, _ = cp_cycle(Y, A.copy(), delta.copy(), D.copy())
        gram = np.zeros((R, R))
        rhs = np.zeros((I, R))
        for k in range(K):
            F = delta @ np.diag(D[k])
            gram += F.T @ F
            rhs += Y[:, :, k] @ F
        want = np.stack(
            [np.linalg.lstsq(gram.T, rhs[i], rcond=None)[0] for i in range(I)]
        )
        assert np.abs(A2 - want).max() <= 1e-10

    def test_nonneg_updates_are_exact_constrained_solutions(self):
        rng = np.random.default_rng(3)
        Y = rng.standard_normal((5, 2, 3))
        A = np.abs(rng.standard_normal((5, 2)))
        delta = rng.standard_normal((2, 2))
        D = rng.uniform(0.5, 1.5, (3, 2))
        A2, delta2, D2 = cp_cycle(Y, A, delta, D, nonneg_a=True, nonneg_d=True)
        assert np.all(A2 >= 0.0)
        assert np.all(D2 >= 0.0)
        # objective at the constrained solution beats feasible perturbations
        base = cp_sse(Y, A2, delta2, D2)
        for _ in range(50):
            A_try = np.maximum(A2 + 1e-4 * rng.standard_normal(A2.shape), 0.0)
            assert cp_sse(Y, A_try, delta2, D2) >= base - 1e-12


class TestFitAls:
    def test_noise_free_recovery(self):
        spec = SimSpec(I=10, J=12, K=8, R=2, setup=1, eta=0.0, seed=42)
        stack, truth = simulate_dataset(spec)
        best = None
        for seed in range(5):
            factors, report = fit_als(stack, 2, AlsConfig(seed=seed))
            if best is None or report.final_objective < best[1].final_objective:
                best = (factors, report)
        factors, _ = best
        assert relative_sse(stack, factors) <= 1e-6
        assert fms(truth, factors).fms >= 0.999

    def test_rank_one_monotone(self):
        rng = np.random.default_rng(4)
        stack = random_stack(rng, I=6, J=(7, 8, 6))
        factors, report = fit_als(stack, 1, AlsConfig(seed=0, max_iter=60))
        sse = report.objective
        for prev, cur in zip(sse, sse[1:]):
            assert cur <= prev * (1 + 1e-12) + 1e-12

    def test_sse_monotone_on_noisy_data(self):
        spec = SimSpec(I=12, J=10, K=6, R=3, setup=1, eta=0.5, seed=7)
        stack, _ = simulate_dataset(spec)
        for nonneg in (False, True):
            config = AlsConfig(nonneg_a=nonneg, nonneg_d=nonneg, seed=1, max_iter=150)
            _, report = fit_als(stack, 3, config)
            sse = report.objective
            for prev, cur in zip(sse, sse[1:]):
                assert cur <= prev * (1 + 1e-12) + 1e-12

    def test_agrees_with_ao_admm_on_noise_free_data(self):
        spec = SimSpec(I=10, J=12, K=8, R=2, setup=1, eta=0.0, seed=11)
        stack, _ = simulate_dataset(spec)
        best_als = min(
            fit_als(stack, 2, AlsConfig(seed=s))[1].final_relative_sse
            for s in range(5)
        )
        best_admm = min(
            fit_ao_admm(stack, SolverConfig(rank=2, seed=s, outer_max_iter=500))[
                1
            ].final_relative_sse
            for s in range(5)
        )
        assert abs(best_als - best_admm) <= 1e-4

    def test_output_satisfies_constraint_exactly(self):
        rng = np.random.default_rng(5)
        stack = random_stack(rng, I=6, J=(7, 9, 8))
        factors, _ = fit_als(stack, 2, AlsConfig(seed=3, max_iter=30))
        grams = [Bk.T @ Bk for Bk in factors.B]
        for G in grams[1:]:
            assert np.abs(G - grams[0]).max() <= 1e-12 * max(1.0, np.abs(grams[0]).max())

    def test_nonneg_flags_respected(self):
        spec = SimSpec(I=12, J=10, K=6, R=2, setup=1, eta=0.33, seed=2)
        stack, _ = simulate_dataset(spec)
        factors, _ = fit_als(
            stack, 2, AlsConfig(nonneg_a=True, nonneg_d=True, seed=4, max_iter=80)
        )
        assert np.all(np.asarray(factors.A) >= 0.0)
        assert np.all(np.asarray(factors.D) >= 0.0)

    def test_ragged_slices_supported(self):
        rng = np.random.default_rng(6)
        truth = random_factors(rng, I=7, J=(8, 10, 9, 11), R=2, nonneg=True)
        stack = reconstruct_stack(truth)
        factors, report = fit_als(stack, 2, AlsConfig(seed=1, max_iter=120))
        assert report.relative_sse[-1] < 0.5

    def test_max_iter_zero_keeps_initialization(self):
        rng = np.random.default_rng(7)
        stack = random_stack(rng, I=5, J=(6, 6))
        factors, report = fit_als(stack, 2, AlsConfig(seed=0, max_iter=0))
        assert report.n_outer == 0
        assert report.termination == "max_iter"
        assert factors.rank == 2
