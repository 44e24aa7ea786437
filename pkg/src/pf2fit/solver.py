"""Regularized PARAFAC2 fitting by alternating optimization with ADMM.

The objective is

    sum_k ||A diag(d_k) B_k^T - X_k||_F^2
        + g_A(A) + sum_k [ g_B(B_k) + g_D(d_k) ]

subject to B_{k1}^T B_{k1} = B_{k2}^T B_{k2} for all slice pairs.  Each outer
iteration runs a few ADMM sweeps per mode: the data-fidelity proximal steps
are closed-form linear solves, the regularizers enter through their proximal
operators, and the cross-product constraint is handled with an approximate
projection onto the implicit form Y_k = P_k @ delta.  The ADMM scale
parameters are chosen adaptively from the current factors once per outer
iteration.

Non-negativity is always enforced on the d_k weights (on top of any
configured penalty) so that component signs are identified.

Slices may have different column counts; stacks with a uniform column count
take an equivalent batched path through the same update equations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls as _nnls

from .constraint import Pf2ProjectionState, orthonormal_polar_factor, project_pf2
from .core import Pf2Factors, SliceStack, sq_frobenius
from .penalties import (
    Regularizer,
    _solve_chain_smoothing,
    penalty_value,
    prox,
    tv_denoise_rows,
)

__all__ = [
    "SolverConfig",
    "FitReport",
    "DegenerateStateError",
    "DivergenceError",
    "BModeState",
    "AModeState",
    "DModeState",
    "b_loss_prox",
    "a_loss_prox",
    "d_loss_prox",
    "compute_rhos",
    "admm_b",
    "admm_a",
    "admm_d",
    "fit_ao_admm",
    "regularized_objective",
    "draw_initial_factors",
]

DIVERGENCE_FACTOR = 1e12

# Adaptive ADMM scales below this are pure pathology (collapsed factors whose
# squared norms underflowed); the subproblems would be numerically singular.
RHO_FLOOR = 1e-200

# Test hook: force the per-slice reference path even for uniform-width stacks.
_FORCE_RAGGED = False


class DegenerateStateError(RuntimeError):
    """A factor block collapsed to zero, leaving the ADMM scale undefined."""


class DivergenceError(RuntimeError):
    """The objective blew up or became non-finite; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    """Configuration of one AO-ADMM fit."""

    rank: int
    reg_a: Regularizer = Regularizer.none()
    reg_b: Regularizer = Regularizer.none()
    reg_d: Regularizer = Regularizer.none()
    inner_max_iter: int = 5
    inner_tol_abs: float = 1e-5
    inner_tol_rel: float = 1e-5
    outer_max_iter: int = 1000
    outer_tol: float = 1e-10
    feasibility_tol: float = 1e-4
    projection_sweeps: int = 1
    seed: int = 0
    return_projected_b: bool = True

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be >= 1")
        if self.outer_max_iter < 0:
            raise ValueError("outer_max_iter must be >= 0")
        if self.projection_sweeps < 1:
            raise ValueError("projection_sweeps must be >= 1")
        for name in ("inner_tol_abs", "inner_tol_rel", "outer_tol", "feasibility_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class FitReport:
    """Convergence trace of one fit."""

    objective: list = field(default_factory=list)
    relative_sse: list = field(default_factory=list)
    feasibility_gaps: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    wall_time: float = 0.0
    n_outer: int = 0
    termination: str = ""

    @property
    def final_objective(self):
        return self.objective[-1] if self.objective else math.inf

    @property
    def final_relative_sse(self):
        return self.relative_sse[-1] if self.relative_sse else math.inf

    def to_dict(self):
        return {
            "objective": list(self.objective),
            "relative_sse": list(self.relative_sse),
            "feasibility_gaps": list(self.feasibility_gaps),
            "inner_iterations": list(self.inner_iterations),
            "wall_time": self.wall_time,
            "n_outer": self.n_outer,
            "termination": self.termination,
        }


@dataclass
class BModeState:
    """Evolving-mode ADMM state: primal B_k, splits Z_k and Y_k, scaled duals."""

    B: list
    Z: list
    Y: list
    mu_Z: list
    mu_Y: list
    proj: Pf2ProjectionState
    rho: np.ndarray = None


@dataclass
class AModeState:
    A: np.ndarray
    Z: np.ndarray
    mu: np.ndarray
    rho: float = 0.0


@dataclass
class DModeState:
    D: np.ndarray
    Z: np.ndarray
    mu: np.ndarray
    rho: np.ndarray = None


# ---------------------------------------------------------------------------
# Closed-form data-fidelity proximal steps
# ---------------------------------------------------------------------------

def b_loss_prox(X_k, A, d_k, M, rho_bk) -> np.ndarray:
    """Minimizer of ||A diag(d_k) B^T - X_k||^2 + (rho/2)(||B-M1||^2 + ||B-M2||^2).

    ``M`` is the sum M1 + M2 of the two split targets; the solution is
    (X_k^T A diag(d_k) + (rho/2) M)(diag(d_k) A^T A diag(d_k) + rho I)^{-1}.
    """
    G = A * d_k
    lhs = G.T @ G + rho_bk * np.eye(G.shape[1])
    rhs = X_k.T @ G + 0.5 * rho_bk * M
    return np.linalg.solve(lhs, rhs.T).T


def a_loss_prox(stack, B, D, M, rho_a) -> np.ndarray:
    """Minimizer of sum_k ||A diag(d_k) B_k^T - X_k||^2 + (rho/2)||A - M||^2."""
    rank = D.shape[1]
    lhs = 0.5 * rho_a * np.eye(rank)
    rhs = 0.5 * rho_a * np.asarray(M, dtype=np.float64)
    for k, Xk in enumerate(stack):
        Gk = B[k] * D[k]
        lhs += Gk.T @ Gk
        rhs = rhs + Xk @ Gk
    return np.linalg.solve(lhs, rhs.T).T


def d_loss_prox(X_k, A, B_k, v, rho_dk) -> np.ndarray:
    """Minimizer of ||A diag(d) B_k^T - X_k||^2 + (rho/2)||d - v||^2 over d."""
    lhs = (A.T @ A) * (B_k.T @ B_k) + 0.5 * rho_dk * np.eye(A.shape[1])
    xi = ((A.T @ X_k) * B_k.T).sum(axis=1)
    return np.linalg.solve(lhs, xi + 0.5 * rho_dk * np.asarray(v, dtype=np.float64))


def compute_rhos(A, B, D):
    """Adaptive ADMM scales: trace of each mode's Gram matrix divided by rank.

    Returns (rho_a, rho_b, rho_d) where rho_b and rho_d hold one value per
    slice.  Raises DegenerateStateError if any scale is non-finite or below
    RHO_FLOOR (a vanished factor block makes the ADMM subproblem singular).
    """
    rank = A.shape[1]
    a_col = np.sum(A * A, axis=0)
    b_col = np.array([np.sum(Bk * Bk, axis=0) for Bk in B])
    d_sq = np.asarray(D) ** 2
    rho_b = d_sq @ a_col / rank
    rho_a = float(np.sum(d_sq * b_col) / rank)
    rho_d = b_col @ a_col / rank
    if not (
        np.isfinite(rho_a)
        and rho_a > RHO_FLOOR
        and np.all(np.isfinite(rho_b))
        and np.all(rho_b > RHO_FLOOR)
        and np.all(np.isfinite(rho_d))
        and np.all(rho_d > RHO_FLOOR)
    ):
        raise DegenerateStateError(
            "adaptive ADMM scale is vanishing or non-finite; a factor block "
            "has collapsed"
        )
    return rho_a, rho_b, rho_d


# ---------------------------------------------------------------------------
# Inner stopping rule (per split): primal and dual residuals against
# absolute + relative tolerances, with n the number of entries in the block.
# ---------------------------------------------------------------------------

def _sqnorm(a):
    v = a.ravel()
    return float(np.dot(v, v))


def _stacked_norm(blocks):
    return math.sqrt(sum(_sqnorm(b) for b in blocks))


def _split_converged_blocks(primal, aux, aux_prev, dual, rho, n, tol_abs, tol_rel):
    r = math.sqrt(sum(_sqnorm(p - a) for p, a in zip(primal, aux)))
    eps_pri = math.sqrt(n) * tol_abs + tol_rel * max(
        _stacked_norm(primal), _stacked_norm(aux)
    )
    if r > eps_pri:
        return False
    s = math.sqrt(
        sum(
            rho_k**2 * _sqnorm(a - ap)
            for rho_k, a, ap in zip(rho, aux, aux_prev)
        )
    )
    eps_dual = math.sqrt(n) * tol_abs + tol_rel * math.sqrt(
        sum(rho_k**2 * _sqnorm(m) for rho_k, m in zip(rho, dual))
    )
    return s <= eps_dual


def _split_converged_arrays(primal, aux, aux_prev, dual, rho_bcast, n, tol_abs, tol_rel):
    r = math.sqrt(_sqnorm(primal - aux))
    eps_pri = math.sqrt(n) * tol_abs + tol_rel * max(
        math.sqrt(_sqnorm(primal)), math.sqrt(_sqnorm(aux))
    )
    if r > eps_pri:
        return False
    s = math.sqrt(_sqnorm(rho_bcast * (aux - aux_prev)))
    eps_dual = math.sqrt(n) * tol_abs + tol_rel * math.sqrt(_sqnorm(rho_bcast * dual))
    return s <= eps_dual


def _uniform_width(stack):
    J = stack.J
    return not _FORCE_RAGGED and all(Jk == J[0] for Jk in J)


# ---------------------------------------------------------------------------
# Per-mode ADMM loops
# ---------------------------------------------------------------------------

def _admm_b_ragged(stack, A, D, state, config):
    K = stack.K
    rho = state.rho
    eye = np.eye(config.rank)
    AtA = A.T @ A
    # A and D are fixed for the whole inner loop, so the linear systems are
    # fixed too; factor them once.
    C = [stack[k].T @ (A * D[k]) for k in range(K)]
    inv = [
        np.linalg.inv(AtA * np.outer(D[k], D[k]) + rho[k] * eye) for k in range(K)
    ]
    n_entries = sum(Jk * config.rank for Jk in stack.J)
    state.proj.rho = rho
    sweeps = 0
    for sweep in range(1, config.inner_max_iter + 1):
        sweeps = sweep
        for k in range(K):
            M = state.Z[k] - state.mu_Z[k] + state.Y[k] - state.mu_Y[k]
            state.B[k] = (C[k] + 0.5 * rho[k] * M) @ inv[k]
        Z_prev = state.Z
        state.Z = [
            prox(config.reg_b, state.B[k] + state.mu_Z[k], rho[k]) for k in range(K)
        ]
        project_pf2(
            [state.B[k] + state.mu_Y[k] for k in range(K)],
            state.proj,
            config.projection_sweeps,
        )
        Y_prev = state.Y
        state.Y = state.proj.materialize()
        for k in range(K):
            state.mu_Z[k] = state.mu_Z[k] + state.B[k] - state.Z[k]
            state.mu_Y[k] = state.mu_Y[k] + state.B[k] - state.Y[k]
        if sweep == config.inner_max_iter:
            break
        done_z = _split_converged_blocks(
            state.B, state.Z, Z_prev, state.mu_Z, rho, n_entries,
            config.inner_tol_abs, config.inner_tol_rel,
        )
        done_y = _split_converged_blocks(
            state.B, state.Y, Y_prev, state.mu_Y, rho, n_entries,
            config.inner_tol_abs, config.inner_tol_rel,
        )
        if done_z and done_y:
            break
    return state, sweeps


def _prox_b_batched(reg, V3, rho):
    """Evolving-mode regularizer prox on a (K, J, R) block with per-slice rho."""
    if reg.kind == "none" or (reg.kind != "nonneg" and reg.strength == 0.0):
        return V3
    if reg.kind == "nonneg":
        return np.maximum(V3, 0.0)
    if reg.kind == "ridge":
        return V3 * (rho / (2.0 * reg.strength + rho))[:, None, None]
    K, J, rank = V3.shape
    if reg.kind == "tv":
        flat = V3.transpose(0, 2, 1).reshape(K * rank, J)
        lams = np.repeat(reg.strength / rho, rank)
        return tv_denoise_rows(flat, lams).reshape(K, rank, J).transpose(0, 2, 1)
    # graph_laplacian_chain: one vectorized tridiagonal solve, one rho per slice
    flat = V3.transpose(1, 0, 2).reshape(J, K * rank)
    rho_cols = np.repeat(rho, rank)
    out = _solve_chain_smoothing(flat, reg.strength, rho_cols)
    return out.reshape(J, K, rank).transpose(1, 0, 2)


def _admm_b_uniform(stack, A, D, state, config):
    """Batched version of the evolving-mode sweeps for uniform slice widths."""
    K, rank = stack.K, config.rank
    rho = state.rho
    X3 = np.stack(stack.slices)
    B3 = np.stack(state.B)
    Z3 = np.stack(state.Z)
    Y3 = np.stack(state.Y)
    muZ3 = np.stack(state.mu_Z)
    muY3 = np.stack(state.mu_Y)
    P3 = np.stack(state.proj.P)
    delta = state.proj.delta
    state.proj.rho = rho

    AtA = A.T @ A
    G3 = A[None, :, :] * D[:, None, :]
    C3 = np.matmul(X3.transpose(0, 2, 1), G3)
    gram = AtA[None, :, :] * (D[:, None, :] * D[:, :, None])
    gram = gram + rho[:, None, None] * np.eye(rank)[None, :, :]
    inv3 = np.linalg.inv(gram)
    rho_b = rho[:, None, None]
    n_entries = K * stack.J[0] * rank
    rho_total = rho.sum()
    sweeps = 0
    for sweep in range(1, config.inner_max_iter + 1):
        sweeps = sweep
        B3 = np.matmul(C3 + 0.5 * rho_b * (Z3 - muZ3 + Y3 - muY3), inv3)
        Z_prev = Z3
        Z3 = _prox_b_batched(config.reg_b, B3 + muZ3, rho)
        W3 = B3 + muY3
        for _ in range(config.projection_sweeps):
            U, _, Vt = np.linalg.svd(np.matmul(W3, delta.T), full_matrices=False)
            P3 = np.matmul(U, Vt)
            delta = np.einsum("k,kjr,kjs->rs", rho, P3, W3) / rho_total
        Y_prev = Y3
        Y3 = np.matmul(P3, delta)
        muZ3 = muZ3 + B3 - Z3
        muY3 = muY3 + B3 - Y3
        if sweep == config.inner_max_iter:
            break
        done_z = _split_converged_arrays(
            B3, Z3, Z_prev, muZ3, rho_b, n_entries,
            config.inner_tol_abs, config.inner_tol_rel,
        )
        done_y = _split_converged_arrays(
            B3, Y3, Y_prev, muY3, rho_b, n_entries,
            config.inner_tol_abs, config.inner_tol_rel,
        )
        if done_z and done_y:
            break
    state.B = list(B3)
    state.Z = list(Z3)
    state.Y = list(Y3)
    state.mu_Z = list(muZ3)
    state.mu_Y = list(muY3)
    state.proj.P = list(P3)
    state.proj.delta = delta
    return state, sweeps


def admm_b(stack, A, D, state: BModeState, config: SolverConfig):
    """Run the evolving-mode ADMM sweeps; returns (state, sweeps_used)."""
    if _uniform_width(stack):
        return _admm_b_uniform(stack, A, D, state, config)
    return _admm_b_ragged(stack, A, D, state, config)


def admm_a(stack, B, D, state: AModeState, config: SolverConfig):
    """Run the shared-mode ADMM sweeps; returns (state, sweeps_used)."""
    rank = config.rank
    rho = state.rho
    lhs = 0.5 * rho * np.eye(rank)
    rhs0 = np.zeros((stack.I, rank))
    for k, Xk in enumerate(stack):
        Gk = B[k] * D[k]
        lhs += Gk.T @ Gk
        rhs0 += Xk @ Gk
    inv = np.linalg.inv(lhs)
    n_entries = stack.I * rank
    sweeps = 0
    for sweep in range(1, config.inner_max_iter + 1):
        sweeps = sweep
        state.A = (rhs0 + 0.5 * rho * (state.Z - state.mu)) @ inv
        Z_prev = state.Z
        state.Z = prox(config.reg_a, state.A + state.mu, rho)
        state.mu = state.mu + state.A - state.Z
        if sweep == config.inner_max_iter:
            break
        if _split_converged_arrays(
            state.A, state.Z, Z_prev, state.mu, rho, n_entries,
            config.inner_tol_abs, config.inner_tol_rel,
        ):
            break
    return state, sweeps


def _prox_d_rows(reg: Regularizer, V, rho):
    """Proximal step for the weight rows with non-negativity always imposed.

    The composition is exact for these kinds: clipping commutes with the
    separable ridge shrinkage and with 1-D TV denoising; the chain-smoothing
    case is solved directly as a small nonnegative least-squares problem.
    """
    V = np.asarray(V, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if reg.kind in ("none", "nonneg") or reg.strength == 0.0:
        return np.maximum(V, 0.0)
    if reg.kind == "ridge":
        scale = rho / (2.0 * reg.strength + rho)
        return np.maximum(V * scale[:, None], 0.0)
    if reg.kind == "tv":
        return np.maximum(tv_denoise_rows(V, reg.strength / rho), 0.0)
    # graph_laplacian_chain: min_{x >= 0} gamma x^T L x + (rho/2) ||x - v||^2
    rank = V.shape[1]
    if rank == 1:  # a single node has no edges, so only the clip remains
        return np.maximum(V, 0.0)
    L = 2.0 * np.eye(rank)
    L[0, 0] = L[-1, -1] = 1.0
    L -= np.diag(np.ones(rank - 1), 1) + np.diag(np.ones(rank - 1), -1)
    out = np.empty_like(V)
    for k in range(V.shape[0]):
        H = 2.0 * reg.strength * L + rho[k] * np.eye(rank)
        chol_upper = np.linalg.cholesky(H).T
        target = np.linalg.solve(chol_upper.T, rho[k] * V[k])
        out[k], _ = _nnls(chol_upper, target)
    return out


def _penalty_d(reg: Regularizer, Zd):
    """Configured penalty over the weight rows (each row is one d_k)."""
    if reg.kind in ("none", "nonneg", "ridge"):
        return penalty_value(reg, Zd)
    return sum(penalty_value(reg, Zd[k][:, None]) for k in range(Zd.shape[0]))


def _penalty_b(reg: Regularizer, Z_blocks):
    """Total evolving-mode penalty over the K blocks (batched when uniform)."""
    if reg.kind == "none" or (reg.kind != "nonneg" and reg.strength == 0.0):
        return 0.0
    if len({Zk.shape for Zk in Z_blocks}) == 1:
        Z3 = Z_blocks if isinstance(Z_blocks, np.ndarray) else np.stack(Z_blocks)
        if reg.kind == "nonneg":
            return 0.0 if np.all(Z3 >= 0.0) else math.inf
        if reg.kind == "ridge":
            return reg.strength * _sqnorm(Z3)
        diffs = np.diff(Z3, axis=1)
        if reg.kind == "tv":
            return reg.strength * float(np.sum(np.abs(diffs)))
        return reg.strength * float(np.sum(diffs * diffs))
    return sum(penalty_value(reg, Zk) for Zk in Z_blocks)


def admm_d(stack, A, B, state: DModeState, config: SolverConfig):
    """Run the weight-mode ADMM sweeps; returns (state, sweeps_used)."""
    K = stack.K
    rank = config.rank
    rho = state.rho
    eye = np.eye(rank)
    AtA = A.T @ A
    inv = np.stack(
        [
            np.linalg.inv(AtA * (B[k].T @ B[k]) + 0.5 * rho[k] * eye)
            for k in range(K)
        ]
    )
    xi = np.stack([((A.T @ stack[k]) * B[k].T).sum(axis=1) for k in range(K)])
    n_entries = K * rank
    rho_col = rho[:, None]
    sweeps = 0
    for sweep in range(1, config.inner_max_iter + 1):
        sweeps = sweep
        rhs = xi + 0.5 * rho_col * (state.Z - state.mu)
        state.D = np.einsum("krs,ks->kr", inv, rhs)
        Z_prev = state.Z
        state.Z = _prox_d_rows(config.reg_d, state.D + state.mu, rho)
        state.mu = state.mu + state.D - state.Z
        if sweep == config.inner_max_iter:
            break
        if _split_converged_arrays(
            state.D, state.Z, Z_prev, state.mu, rho_col, n_entries,
            config.inner_tol_abs, config.inner_tol_rel,
        ):
            break
    return state, sweeps


# ---------------------------------------------------------------------------
# Objective bookkeeping
# ---------------------------------------------------------------------------

def _data_fidelity(stack, A, D, B):
    if _uniform_width(stack):
        X3 = np.stack(stack.slices)
        B3 = B if isinstance(B, np.ndarray) else np.stack(B)
        recon = np.matmul(A[None, :, :] * D[:, None, :], B3.transpose(0, 2, 1))
        return _sqnorm(recon - X3)
    sse = 0.0
    for k, Xk in enumerate(stack):
        resid = (A * D[k]) @ B[k].T - Xk
        sse += _sqnorm(resid)
    return sse


def regularized_objective(stack, factors, reg_a=None, reg_b=None, reg_d=None):
    """Data fidelity plus all penalty terms, evaluated at one factor set."""
    reg_a = reg_a or Regularizer.none()
    reg_b = reg_b or Regularizer.none()
    reg_d = reg_d or Regularizer.none()
    if not isinstance(stack, SliceStack):
        stack = SliceStack(stack)
    total = _data_fidelity(stack, factors.A, factors.D, factors.B)
    total += penalty_value(reg_a, factors.A)
    total += _penalty_b(reg_b, factors.B)
    total += _penalty_d(reg_d, np.asarray(factors.D))
    return total


def _gap(primal_blocks, aux_blocks):
    num = _stacked_norm([p - a for p, a in zip(primal_blocks, aux_blocks)])
    denom = _stacked_norm(aux_blocks)
    if denom == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / denom


# ---------------------------------------------------------------------------
# Initialization and the outer loop
# ---------------------------------------------------------------------------

def draw_initial_factors(rng, n_rows, col_counts, rank):
    """Random starting point shared by both fitting algorithms.

    A and the core delta are standard normal, each P_k is the orthonormal
    polar factor of a standard-normal draw (so B_k = P_k @ delta satisfies
    the cross-product constraint exactly), and the weight rows are uniform
    on [0.1, 1.1] to keep them away from zero.
    """
    A = rng.standard_normal((n_rows, rank))
    delta = rng.standard_normal((rank, rank))
    P = [
        orthonormal_polar_factor(rng.standard_normal((Jk, rank)))
        for Jk in col_counts
    ]
    D = rng.uniform(0.1, 1.1, size=(len(col_counts), rank))
    return A, delta, P, D


def _validate_problem(stack, rank):
    if not isinstance(stack, SliceStack):
        stack = SliceStack(stack)
    if min(stack.J) < rank:
        raise ValueError(
            f"rank {rank} exceeds the smallest slice width {min(stack.J)}; "
            "every slice needs at least rank columns"
        )
    return stack


def _init_states(stack, config, init):
    rank = config.rank
    if init is None:
        rng = np.random.default_rng(config.seed)
        A, delta, P, D = draw_initial_factors(rng, stack.I, stack.J, rank)
        B = [Pk @ delta for Pk in P]
    else:
        if init.rank != rank or init.K != stack.K or init.I != stack.I:
            raise ValueError("initial factors do not match the data/config shapes")
        if init.J != stack.J:
            raise ValueError("initial evolving factors do not match slice widths")
        A = init.A.copy()
        D = init.D.copy()
        B = [Bk.copy() for Bk in init.B]
        P = [orthonormal_polar_factor(Bk) for Bk in B]
        delta = np.eye(rank)
    proj = Pf2ProjectionState(P=P, delta=delta, rho=np.ones(stack.K))
    b_state = BModeState(
        B=B,
        Z=[Bk.copy() for Bk in B],
        Y=proj.materialize(),
        mu_Z=[np.zeros_like(Bk) for Bk in B],
        mu_Y=[np.zeros_like(Bk) for Bk in B],
        proj=proj,
    )
    a_state = AModeState(A=A, Z=A.copy(), mu=np.zeros_like(A))
    d_state = DModeState(D=D, Z=D.copy(), mu=np.zeros_like(D))
    return a_state, b_state, d_state


def fit_ao_admm(stack, config: SolverConfig, init: Pf2Factors | None = None):
    """Fit a regularized PARAFAC2 model; returns (factors, report).

    The returned factors are the constraint-satisfying auxiliary blocks:
    A from its regularizer split, the weights from theirs (always
    nonnegative), and B_k either in the exactly cross-product-feasible
    projected form (default) or from the regularizer split
    (``config.return_projected_b=False``).

    Raises DivergenceError if the objective becomes non-finite or grows by
    a factor 1e12 over its starting value.
    """
    stack = _validate_problem(stack, config.rank)
    t0 = time.perf_counter()
    a_state, b_state, d_state = _init_states(stack, config, init)
    report = FitReport()

    def penalties():
        total = penalty_value(config.reg_a, a_state.Z)
        total += _penalty_b(config.reg_b, b_state.Z)
        total += _penalty_d(config.reg_d, d_state.Z)
        return total

    norm_x_sq = sq_frobenius(stack)
    obj_init = _data_fidelity(stack, a_state.A, d_state.D, b_state.B) + penalties()
    obj_prev = None
    termination = "max_iter"
    for _ in range(config.outer_max_iter):
        rho_a, rho_b, rho_d = compute_rhos(a_state.A, b_state.B, d_state.D)
        a_state.rho = rho_a
        b_state.rho = rho_b
        d_state.rho = rho_d
        b_state, n_b = admm_b(stack, a_state.A, d_state.D, b_state, config)
        a_state, n_a = admm_a(stack, b_state.B, d_state.D, a_state, config)
        d_state, n_d = admm_d(stack, a_state.A, b_state.B, d_state, config)

        gaps = {
            "b_split": _gap(b_state.B, b_state.Z),
            "b_pf2": _gap(b_state.B, b_state.Y),
            "a_split": _gap([a_state.A], [a_state.Z]),
            "d_split": _gap([d_state.D], [d_state.Z]),
        }
        obj = _data_fidelity(stack, a_state.A, d_state.D, b_state.B) + penalties()
        est_b = b_state.Y if config.return_projected_b else b_state.Z
        rel_sse = (
            _data_fidelity(stack, a_state.Z, d_state.Z, est_b) / norm_x_sq
            if norm_x_sq > 0
            else math.inf
        )
        report.objective.append(obj)
        report.relative_sse.append(rel_sse)
        report.feasibility_gaps.append(gaps)
        report.inner_iterations.append({"b": n_b, "a": n_a, "d": n_d})
        report.n_outer += 1

        if not math.isfinite(obj) or obj > DIVERGENCE_FACTOR * max(obj_init, 1e-30):
            report.wall_time = time.perf_counter() - t0
            report.termination = "diverged"
            raise DivergenceError(
                f"objective diverged at outer iteration {report.n_outer} "
                f"({obj:.3e} from {obj_init:.3e})",
                report=report,
            )
        if obj_prev is not None:
            rel_change = abs(obj - obj_prev) / max(obj_prev, np.finfo(float).tiny)
            if rel_change <= config.outer_tol and max(gaps.values()) <= config.feasibility_tol:
                termination = "converged"
                break
        obj_prev = obj

    report.wall_time = time.perf_counter() - t0
    report.termination = termination
    est_b = b_state.Y if config.return_projected_b else b_state.Z
    factors = Pf2Factors(a_state.Z, d_state.Z, est_b)
    return factors, report
