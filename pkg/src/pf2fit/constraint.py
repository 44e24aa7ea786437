"""Approximate projection onto collections of matrices with constant cross product.

Given arbitrary matrices W_k, we seek the nearest collection Y_k (in a
weighted Frobenius sense) such that Y_k^T Y_k is the same for every k.
Writing Y_k = P_k @ delta with orthonormal-column P_k makes the constraint
structural, and block-coordinate descent on (P_1..P_K, delta) gives a cheap
approximate projection: each P_k update is an orthogonal Procrustes problem
and the delta update is a weighted average.  A single sweep is typically
enough inside an ADMM loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Pf2ProjectionState", "orthonormal_polar_factor", "project_pf2"]


def orthonormal_polar_factor(M) -> np.ndarray:
    """Orthonormal-column factor U @ V^T of the economy SVD M = U S V^T.

    This is the maximizer of trace(P^T M) over matrices P with orthonormal
    columns (orthogonal Procrustes).  Requires rows >= columns.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] < M.shape[1]:
        raise ValueError(
            f"need rows >= columns for an orthonormal factor, got {M.shape}"
        )
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    return U @ Vt


@dataclass
class Pf2ProjectionState:
    """Working state of the projection: bases P_k, core delta, weights rho.

    ``delta`` is warm-started from the previous call; the caller materializes
    the projected collection as Y_k = P_k @ delta.
    """

    P: list = field(default_factory=list)
    delta: np.ndarray = None
    rho: np.ndarray = None

    def materialize(self):
        return [Pk @ self.delta for Pk in self.P]


def project_pf2(W, state: Pf2ProjectionState, n_iter: int = 1) -> Pf2ProjectionState:
    """Run ``n_iter`` block-coordinate sweeps of the approximate projection.

    Each sweep sets P_k to the polar factor of W_k @ delta^T and then
    delta to the rho-weighted average of P_k^T W_k.  The weighted objective
    sum_k (rho_k/2) ||P_k delta - W_k||_F^2 never increases across sweeps.

    Parameters
    ----------
    W : list of (J_k, R) arrays
        The collection to project (in ADMM use, B_k plus its dual).
    state : Pf2ProjectionState
        Mutated in place and returned.
    n_iter : int
        Number of sweeps; one is usually sufficient.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    rho = np.asarray(state.rho, dtype=np.float64)
    if rho.shape != (len(W),) or np.any(rho <= 0):
        raise ValueError("state.rho must hold one positive weight per matrix")
    total = rho.sum()
    for _ in range(n_iter):
        for k, Wk in enumerate(W):
            state.P[k] = orthonormal_polar_factor(Wk @ state.delta.T)
        acc = np.zeros_like(state.delta)
        for k, Wk in enumerate(W):
            acc += rho[k] * (state.P[k].T @ Wk)
        state.delta = acc / total
    return state
