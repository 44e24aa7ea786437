"""Classical PARAFAC2 fitting by alternating least squares.

Uses the implicit parameterization B_k = P_k @ delta with orthonormal P_k
(Kiers, ten Berge & Bro, J. Chemometrics 1999): each iteration updates the
P_k by orthogonal Procrustes and then runs one least-squares cycle of the
rank-R CP factors (A, delta, D) on the projected slices X_k @ P_k.  The
unregularized sum of squared errors never increases.  Non-negativity can
optionally be imposed on A and on the weights via nonnegative least squares;
the evolving mode itself cannot be regularized in this parameterization.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import nnls as _nnls

from .constraint import orthonormal_polar_factor
from .core import Pf2Factors, sq_frobenius
from .solver import FitReport, _sqnorm, _uniform_width, _validate_problem, draw_initial_factors

__all__ = ["AlsConfig", "fit_als", "cp_cycle"]

logger = logging.getLogger(__name__)

GRAM_JITTER = 1e-12


@dataclass(frozen=True)
class AlsConfig:
    nonneg_a: bool = False
    nonneg_d: bool = False
    max_iter: int = 1000
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


def _chol_with_jitter(gram):
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        jitter = GRAM_JITTER * max(1.0, float(np.trace(gram)) / gram.shape[0])
        warnings.warn(
            "singular normal equations in least-squares update; adding ridge jitter",
            RuntimeWarning,
            stacklevel=2,
        )
        logger.debug("ridge jitter %.3e added to a singular Gram matrix", jitter)
        return np.linalg.cholesky(gram + jitter * np.eye(gram.shape[0]))


def _solve_rows(gram, rhs_rows, nonneg):
    """Row-wise solve of F @ gram = rhs_rows, optionally with F >= 0.

    The nonnegative path solves each row as an exact NNLS problem on the
    Cholesky factor, so both paths minimize the same quadratic.
    """
    L = _chol_with_jitter(gram)
    if not nonneg:
        return cho_solve((L, True), rhs_rows.T).T
    C = L.T
    out = np.empty_like(rhs_rows)
    for i in range(rhs_rows.shape[0]):
        target = solve_triangular(L, rhs_rows[i], lower=True)
        out[i], _ = _nnls(C, target)
    return out


def cp_cycle(Y, A, delta, D, nonneg_a=False, nonneg_d=False):
    """One least-squares update round of (A, delta, D) on an (I, R, K) tensor.

    Frontal slice k of Y is modelled as A @ diag(D[k]) @ delta^T; the three
    factors are updated in that order, each by exact (nonnegative) least
    squares with the others fixed.
    """
    Y = np.asarray(Y, dtype=np.float64)
    Yk_first = np.moveaxis(Y, 2, 0)  # (K, I, R) view

    gram = (delta.T @ delta) * (D.T @ D)
    scaled = delta[None, :, :] * D[:, None, :]  # each (R, R) slice is delta @ diag(d_k)
    rhs = np.einsum("kir,krs->is", Yk_first, scaled)
    A = _solve_rows(gram, rhs, nonneg_a)

    gram = (A.T @ A) * (D.T @ D)
    proj = np.matmul(Yk_first.transpose(0, 2, 1), A)  # (K, R, R), slice k is Y_k^T A
    rhs = (proj * D[:, None, :]).sum(axis=0)
    delta = _solve_rows(gram, rhs, False)

    gram = (A.T @ A) * (delta.T @ delta)
    cross = np.matmul(A.T[None, :, :], Yk_first)  # (K, R, R), slice k is A^T Y_k
    rhs = (cross * delta.T[None, :, :]).sum(axis=2)
    D = _solve_rows(gram, rhs, nonneg_d)
    return A, delta, D


def _rebalance(A, delta, D):
    """Move component norms into the weights.

    Pure per-component rescaling (model- and SSE-invariant); keeps the A and
    delta columns at unit norm so alternating updates cannot drift into
    huge-factor/tiny-factor configurations.
    """
    norm_a = np.linalg.norm(A, axis=0)
    norm_delta = np.linalg.norm(delta, axis=0)
    safe_a = np.where(norm_a == 0, 1.0, norm_a)
    safe_delta = np.where(norm_delta == 0, 1.0, norm_delta)
    return A / safe_a, delta / safe_delta, D * (norm_a * norm_delta)


def _sse(stack, A, D, delta, P):
    if _uniform_width(stack):
        X3 = np.stack(stack.slices)
        core = np.matmul(A[None, :, :] * D[:, None, :], delta.T[None, :, :])
        recon = np.matmul(core, np.stack(P).transpose(0, 2, 1))
        return _sqnorm(recon - X3)
    total = 0.0
    for k in range(stack.K):
        resid = ((A * D[k]) @ delta.T) @ P[k].T - stack[k]
        total += _sqnorm(resid)
    return total


def fit_als(stack, rank: int, config: AlsConfig = AlsConfig(), init: Pf2Factors | None = None):
    """Fit an unregularized PARAFAC2 model; returns (factors, report).

    The returned evolving factors are materialized as P_k @ delta and
    therefore satisfy the constant-cross-product constraint exactly.
    """
    stack = _validate_problem(stack, rank)
    t0 = time.perf_counter()
    if init is None:
        rng = np.random.default_rng(config.seed)
        A, delta, P, D = draw_initial_factors(rng, stack.I, stack.J, rank)
        if config.nonneg_a:
            # Sign-symmetric starts make row-wise NNLS zero out whole
            # components on mostly-positive data; fold to a feasible start.
            A = np.abs(A)
    else:
        if init.rank != rank or init.K != stack.K or init.I != stack.I:
            raise ValueError("initial factors do not match the data/config shapes")
        A = init.A.copy()
        D = init.D.copy()
        P = [orthonormal_polar_factor(Bk) for Bk in init.B]
        delta = np.eye(rank)

    uniform = _uniform_width(stack)
    X3 = np.stack(stack.slices) if uniform else None
    norm_x_sq = sq_frobenius(stack)
    report = FitReport()
    sse_prev = None
    termination = "max_iter"
    for _ in range(config.max_iter):
        if uniform:
            G3 = A[None, :, :] * D[:, None, :]
            targets = np.matmul(np.matmul(X3.transpose(0, 2, 1), G3), delta.T)
            U, _, Vt = np.linalg.svd(targets, full_matrices=False)
            P3 = np.matmul(U, Vt)
            P = list(P3)
            Y = np.matmul(X3, P3).transpose(1, 2, 0)
        else:
            for k in range(stack.K):
                P[k] = orthonormal_polar_factor(stack[k].T @ (A * D[k]) @ delta.T)
            Y = np.stack([stack[k] @ P[k] for k in range(stack.K)], axis=2)
        A, delta, D = cp_cycle(Y, A, delta, D, config.nonneg_a, config.nonneg_d)
        A, delta, D = _rebalance(A, delta, D)

        sse = _sse(stack, A, D, delta, P)
        report.objective.append(sse)
        report.relative_sse.append(sse / norm_x_sq if norm_x_sq > 0 else math.inf)
        report.feasibility_gaps.append({})
        report.inner_iterations.append({})
        report.n_outer += 1
        if sse_prev is not None:
            rel_change = abs(sse_prev - sse) / max(sse_prev, np.finfo(float).tiny)
            if rel_change <= config.tol:
                termination = "converged"
                break
        sse_prev = sse

    report.wall_time = time.perf_counter() - t0
    report.termination = termination
    factors = Pf2Factors(A, D, [Pk @ delta for Pk in P])
    return factors, report
