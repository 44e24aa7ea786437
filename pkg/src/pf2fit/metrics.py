"""Recovery and convergence metrics.

Relative SSE measures reconstruction quality; the factor match score (FMS)
measures how well estimated components line up with known ground truth after
resolving the column-permutation indeterminacy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Pf2Factors, sq_frobenius

__all__ = ["FmsResult", "relative_sse", "fms"]


@dataclass(frozen=True)
class FmsResult:
    """Factor match score with the matching that produced it.

    ``permutation[s]`` is the true-component index matched to estimated
    component ``s``; ``per_component[r]`` is the matched congruence product
    for true component ``r``.
    """

    fms: float
    permutation: tuple
    per_component: tuple


def relative_sse(stack, factors: Pf2Factors) -> float:
    """Sum of squared reconstruction errors divided by the squared data norm."""
    if factors.K != stack.K or factors.I != stack.I or factors.J != stack.J:
        raise ValueError("factor shapes do not match the slice stack")
    norm_sq = sq_frobenius(stack)
    if norm_sq == 0.0:
        raise ValueError("relative SSE is undefined for all-zero data")
    sse = 0.0
    for k, Xk in enumerate(stack):
        resid = (factors.A * factors.D[k]) @ factors.B[k].T - Xk
        sse += float(np.sum(resid * resid))
    return sse / norm_sq


def _component_matrices(factors: Pf2Factors):
    """Per-mode component vectors as columns: A, stacked B, weights over k."""
    B_cat = np.concatenate(list(factors.B), axis=0)
    return np.asarray(factors.A), B_cat, np.asarray(factors.D)


def _normalize_columns(M, what):
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"zero column in {what}; congruence is undefined")
    return M / norms


def fms(true: Pf2Factors, est: Pf2Factors, absolute: bool = False) -> FmsResult:
    """Factor match score between a true and an estimated factor set.

    For each component the three mode vectors (column of A, the r-th columns
    of all B_k concatenated, and the K weights) are normalized to unit
    length; the score of a (true, estimated) pairing is the product of the
    three congruences.  The permutation is chosen by optimal assignment and
    the FMS is the mean matched product.  Signs are not resolved here (use
    nonnegative weights to identify them); ``absolute=True`` takes absolute
    congruences for diagnostics only.
    """
    if true.rank != est.rank:
        raise ValueError(
            f"rank mismatch: true has {true.rank}, estimate has {est.rank}"
        )
    if true.K != est.K or true.I != est.I or true.J != est.J:
        raise ValueError("factor shapes do not match between truth and estimate")
    score = np.ones((true.rank, true.rank))
    for Mt, Me, what in zip(
        _component_matrices(true), _component_matrices(est), ("A", "B", "D")
    ):
        congruence = (
            _normalize_columns(Mt, f"true {what}").T
            @ _normalize_columns(Me, f"estimated {what}")
        )
        if absolute:
            congruence = np.abs(congruence)
        score *= congruence
    rows, cols = linear_sum_assignment(-score)
    per_component = score[rows, cols]
    permutation = np.empty(true.rank, dtype=int)
    permutation[cols] = rows
    return FmsResult(
        fms=float(per_component.mean()),
        permutation=tuple(int(p) for p in permutation),
        per_component=tuple(float(v) for v in per_component),
    )
