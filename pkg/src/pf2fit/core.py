"""Core containers: ragged slice stacks and PARAFAC2 factor sets.

A dataset is a stack of K dense matrices that share their row count I but may
differ in column count J_k.  A rank-R PARAFAC2 model of such a stack consists
of a shared factor A (I x R), per-slice diagonal weights D_k (stored as the
rows of a K x R matrix) and per-slice evolving factors B_k (J_k x R) whose
cross products B_k^T B_k are constant over k.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SliceStack",
    "Pf2Factors",
    "ImplicitEvolving",
    "reconstruct_slice",
    "reconstruct_stack",
    "sq_frobenius",
    "materialize",
]

ORTHONORMALITY_TOL = 1e-10


def _readonly_matrix(value, name):
    arr = np.array(value, dtype=np.float64, order="C")
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class SliceStack:
    """Immutable stack of K dense matrices with a shared row count.

    Parameters
    ----------
    slices : sequence of (I, J_k) arrays
        All slices must have the same number of rows; column counts may vary.
        Entries must be finite.
    """

    __slots__ = ("slices",)

    def __init__(self, slices):
        slices = tuple(
            _readonly_matrix(Xk, f"slice {k}") for k, Xk in enumerate(slices)
        )
        if len(slices) == 0:
            raise ValueError("a SliceStack needs at least one slice")
        n_rows = slices[0].shape[0]
        for k, Xk in enumerate(slices):
            if Xk.shape[0] != n_rows:
                raise ValueError(
                    f"slice {k} has {Xk.shape[0]} rows, expected {n_rows}"
                )
        object.__setattr__(self, "slices", slices)

    def __setattr__(self, name, value):
        raise AttributeError("SliceStack is immutable")

    @property
    def K(self):
        return len(self.slices)

    @property
    def I(self):  # noqa: E743 - domain name for the shared row count
        return self.slices[0].shape[0]

    @property
    def J(self):
        """Per-slice column counts."""
        return tuple(Xk.shape[1] for Xk in self.slices)

    def __len__(self):
        return len(self.slices)

    def __iter__(self):
        return iter(self.slices)

    def __getitem__(self, k):
        return self.slices[k]

    def __repr__(self):
        return f"SliceStack(K={self.K}, I={self.I}, J={list(self.J)})"


class Pf2Factors:
    """Immutable PARAFAC2 factor set (A, D, B).

    Parameters
    ----------
    A : (I, R) array
        Shared mode factor.
    D : (K, R) array
        Row k holds the diagonal of the k-th weight matrix.
    B : sequence of (J_k, R) arrays
        Evolving mode factors, one per slice.
    """

    __slots__ = ("A", "D", "B")

    def __init__(self, A, D, B):
        A = _readonly_matrix(A, "A")
        D = _readonly_matrix(D, "D")
        B = tuple(_readonly_matrix(Bk, f"B[{k}]") for k, Bk in enumerate(B))
        rank = A.shape[1]
        if D.shape[1] != rank:
            raise ValueError(f"D has {D.shape[1]} columns, expected rank {rank}")
        if len(B) != D.shape[0]:
            raise ValueError(
                f"got {len(B)} evolving factors for {D.shape[0]} slices"
            )
        for k, Bk in enumerate(B):
            if Bk.shape[1] != rank:
                raise ValueError(
                    f"B[{k}] has {Bk.shape[1]} columns, expected rank {rank}"
                )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "B", B)

    def __setattr__(self, name, value):
        raise AttributeError("Pf2Factors is immutable")

    @property
    def rank(self):
        return self.A.shape[1]

    @property
    def K(self):
        return self.D.shape[0]

    @property
    def I(self):  # noqa: E743
        return self.A.shape[0]

    @property
    def J(self):
        return tuple(Bk.shape[0] for Bk in self.B)

    def __repr__(self):
        return (
            f"Pf2Factors(rank={self.rank}, I={self.I}, K={self.K}, "
            f"J={list(self.J)})"
        )


class ImplicitEvolving:
    """Evolving factors in implicit form B_k = P_k @ delta.

    The P_k have orthonormal columns, so every materialized collection
    satisfies B_k^T B_k = delta^T delta independently of k.
    """

    __slots__ = ("P", "delta")

    def __init__(self, P, delta):
        P = tuple(_readonly_matrix(Pk, f"P[{k}]") for k, Pk in enumerate(P))
        delta = _readonly_matrix(delta, "delta")
        rank = delta.shape[0]
        if delta.shape[1] != rank:
            raise ValueError(f"delta must be square, got shape {delta.shape}")
        if len(P) == 0:
            raise ValueError("need at least one orthonormal basis P_k")
        eye = np.eye(rank)
        for k, Pk in enumerate(P):
            if Pk.shape[1] != rank:
                raise ValueError(
                    f"P[{k}] has {Pk.shape[1]} columns, expected {rank}"
                )
            defect = np.linalg.norm(Pk.T @ Pk - eye)
            if defect > ORTHONORMALITY_TOL:
                raise ValueError(
                    f"P[{k}] columns are not orthonormal "
                    f"(defect {defect:.3e} > {ORTHONORMALITY_TOL:.0e})"
                )
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "delta", delta)

    def __setattr__(self, name, value):
        raise AttributeError("ImplicitEvolving is immutable")

    @property
    def rank(self):
        return self.delta.shape[0]

    @property
    def K(self):
        return len(self.P)


def reconstruct_slice(factors: Pf2Factors, k: int) -> np.ndarray:
    """Model slice k: A @ diag(D[k]) @ B_k^T."""
    if not 0 <= k < factors.K:
        raise IndexError(f"slice index {k} out of range for K={factors.K}")
    return (factors.A * factors.D[k]) @ factors.B[k].T


def reconstruct_stack(factors: Pf2Factors) -> SliceStack:
    """All K model slices as a SliceStack."""
    return SliceStack([reconstruct_slice(factors, k) for k in range(factors.K)])


def sq_frobenius(x) -> float:
    """Squared Frobenius norm of a matrix or of a whole SliceStack."""
    if isinstance(x, SliceStack):
        return float(sum(np.sum(Xk * Xk) for Xk in x.slices))
    arr = np.asarray(x, dtype=np.float64)
    return float(np.sum(arr * arr))


def materialize(implicit: ImplicitEvolving) -> list[np.ndarray]:
    """Evolving factors B_k = P_k @ delta from the implicit form."""
    return [Pk @ implicit.delta for Pk in implicit.P]
