"""Scaled proximal operators and penalty evaluations.

Every regularizer ``g`` exposes two things: the scaled proximal operator

    prox(g/rho)(Y) = argmin_X  g(X) + (rho/2) ||X - Y||_F^2

and the penalty value ``g(X)`` itself (which may be +inf for indicator
penalties).  Supported kinds:

``none``
    g = 0, prox is the identity.
``nonneg``
    Indicator of the nonnegative orthant, prox clips at zero.
``ridge``
    g(X) = strength * ||X||_F^2, prox shrinks by rho / (2*strength + rho).
``tv``
    g(X) = strength * sum over columns of the total-variation seminorm
    (sum of absolute first differences).  The prox is exact 1-D TV
    denoising per column, computed with the direct non-iterative
    algorithm of Condat (IEEE SPL, 2013).
``graph_laplacian_chain``
    g(X) = strength * sum over columns x of sum_j (x_j - x_{j+1})^2, the
    chain-graph smoothness penalty.  The prox solves the tridiagonal
    system (2*strength*L + rho*I) x = rho*y per column (Thomas algorithm).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

__all__ = ["Regularizer", "prox", "penalty_value", "tv_denoise_1d", "tv_denoise_rows"]

KINDS = ("none", "nonneg", "ridge", "tv", "graph_laplacian_chain")


@dataclass(frozen=True)
class Regularizer:
    """A penalty descriptor: a kind plus a nonnegative strength.

    The strength is the multiplicative coefficient of the penalty; it is
    meaningless for ``none`` and ``nonneg`` and normalized to zero there.
    """

    kind: str = "none"
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown regularizer kind {self.kind!r}; expected one of {KINDS}"
            )
        strength = float(self.strength)
        if not np.isfinite(strength) or strength < 0:
            raise ValueError(f"strength must be finite and >= 0, got {strength}")
        if self.kind in ("none", "nonneg"):
            strength = 0.0
        object.__setattr__(self, "strength", strength)

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def nonneg(cls):
        return cls("nonneg")

    @classmethod
    def ridge(cls, strength):
        return cls("ridge", strength)

    @classmethod
    def tv(cls, strength):
        return cls("tv", strength)

    @classmethod
    def graph_laplacian(cls, strength):
        return cls("graph_laplacian_chain", strength)

    def __str__(self):
        if self.kind in ("none", "nonneg"):
            return self.kind
        return f"{self.kind}:{self.strength:g}"


def _tv_denoise_kernel(y, lam, x):
    """Direct 1-D total variation denoising (Condat 2013), in place into x."""
    n = y.shape[0]
    k = k0 = kminus = kplus = 0
    vmin = y[0] - lam
    vmax = y[0] + lam
    umin = lam
    umax = -lam
    while True:
        # Grow the current segment while both running bounds stay admissible.
        while k < n - 1:
            if y[k + 1] + umin < vmin - lam:
                # Negative jump: the lower bound cannot be continued.
                for i in range(k0, kminus + 1):
                    x[i] = vmin
                kminus += 1
                k = k0 = kplus = kminus
                vmin = y[k]
                vmax = y[k] + 2.0 * lam
                umin = lam
                umax = -lam
            elif y[k + 1] + umax > vmax + lam:
                # Positive jump.
                for i in range(k0, kplus + 1):
                    x[i] = vmax
                kplus += 1
                k = k0 = kminus = kplus
                vmin = y[k] - 2.0 * lam
                vmax = y[k]
                umin = lam
                umax = -lam
            else:
                k += 1
                umin += y[k] - vmin
                umax += y[k] - vmax
                if umin >= lam:
                    vmin += (umin - lam) / (k - k0 + 1)
                    umin = lam
                    kminus = k
                if umax <= -lam:
                    vmax += (umax + lam) / (k - k0 + 1)
                    umax = -lam
                    kplus = k
        # Tail: flush the pending segment, or finish if both bounds close.
        if umin < 0.0:
            for i in range(k0, kminus + 1):
                x[i] = vmin
            kminus += 1
            k = k0 = kplus = kminus
            vmin = y[k]
            umin = lam
            umax = y[k] + lam - vmax
        elif umax > 0.0:
            for i in range(k0, kplus + 1):
                x[i] = vmax
            kplus += 1
            k = k0 = kminus = kplus
            vmax = y[k]
            umax = -lam
            umin = y[k] - lam - vmin
        else:
            v = vmin + umin / (k - k0 + 1)
            for i in range(k0, n):
                x[i] = v
            return
        # Only the last sample remains: it is fixed directly (for a negative
        # jump vmin + umin = y[k] + lam, for a positive one y[k] - lam).
        if k == n - 1:
            x[k] = vmin + umin
            return


def _tv_denoise_rows_kernel(Y, lams, out):
    """Row-wise TV denoising of a contiguous (n_rows, n) block."""
    for i in range(Y.shape[0]):
        if Y.shape[1] <= 1 or lams[i] <= 0.0:
            out[i] = Y[i]
        else:
            _tv_denoise_kernel(Y[i], lams[i], out[i])


def _chain_smooth_rows_kernel(Yt, gamma, rhos, shift, out):
    """Row-wise Thomas solve of (2*gamma*L + rho*I) x = rho*y on (n_rows, n).

    Works on the scaled system (L + mu*I) x = mu*y with mu = rho/(2*gamma),
    tracking shift_i = pivot_i - 1 through a recurrence with only positive
    terms.  The naive pivot recurrence cancels to exactly zero once mu drops
    below the unit roundoff; this form stays positive and tends smoothly to
    the row-mean solution as mu -> 0.
    """
    n = Yt.shape[1]
    for c in range(Yt.shape[0]):
        mu = rhos[c] / (2.0 * gamma)
        if mu > 1e100:  # smoothing below roundoff; the solve would overflow
            out[c] = Yt[c]
            continue
        shift[0] = mu
        out[c, 0] = mu * Yt[c, 0] / (1.0 + mu)
        for i in range(1, n):
            numer = mu + shift[i - 1] * (1.0 + mu)
            denom = 1.0 + shift[i - 1]
            if i < n - 1:
                shift[i] = numer / denom
                pivot = 1.0 + shift[i]
            else:
                pivot = numer / denom  # last node has degree one
                shift[i] = pivot
            out[c, i] = (mu * Yt[c, i] + out[c, i - 1]) / pivot
        for i in range(n - 2, -1, -1):
            out[c, i] += out[c, i + 1] / (1.0 + shift[i])


# Undecorated versions are kept as a fallback: the kernels are pure float
# arithmetic whose denominators are strictly positive whenever they are
# reached, so any error out of a compiled kernel is a toolchain fault, not a
# numerical one, and the slow path can take over.
_tv_denoise_kernel_py = _tv_denoise_kernel
_tv_denoise_rows_kernel_py = _tv_denoise_rows_kernel
_chain_smooth_rows_kernel_py = _chain_smooth_rows_kernel

if HAS_NUMBA:
    # Eager signatures: compile at import so worker processes never JIT
    # mid-run.
    _tv_denoise_kernel = numba.njit(
        "void(float64[::1], float64, float64[::1])", cache=True
    )(_tv_denoise_kernel)
    _tv_denoise_rows_kernel = numba.njit(
        "void(float64[:, ::1], float64[::1], float64[:, ::1])", cache=True
    )(_tv_denoise_rows_kernel)
    _chain_smooth_rows_kernel = numba.njit(
        "void(float64[:, ::1], float64, float64[::1], float64[::1], float64[:, ::1])",
        cache=True,
    )(_chain_smooth_rows_kernel)


def _kernel_call(jitted, fallback, *args):
    if jitted is fallback:
        fallback(*args)
        return
    try:
        jitted(*args)
    except Exception as exc:  # pragma: no cover - compiled-kernel fault only
        warnings.warn(
            f"compiled kernel {getattr(jitted, '__name__', jitted)!r} failed "
            f"({exc!r}); recomputing with the interpreted fallback",
            RuntimeWarning,
            stacklevel=3,
        )
        fallback(*args)


def _writable_c(arr):
    """C-contiguous float64, copied if needed; the kernels reject readonly views."""
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if not arr.flags.writeable:
        arr = arr.copy()
    return arr


def tv_denoise_rows(Y, lams) -> np.ndarray:
    """TV-denoise each row of Y with its own threshold."""
    Y = _writable_c(Y)
    lams = _writable_c(np.broadcast_to(lams, (Y.shape[0],)))
    out = np.empty_like(Y)
    _kernel_call(_tv_denoise_rows_kernel, _tv_denoise_rows_kernel_py, Y, lams, out)
    return out


def tv_denoise_1d(y, lam: float) -> np.ndarray:
    """Solve argmin_x lam * sum|x_{i+1} - x_i| + (1/2) ||x - y||^2.

    Parameters
    ----------
    y : 1-D array
    lam : float
        Nonnegative threshold (already divided by the prox scale).
    """
    y = _writable_c(np.asarray(y))
    if y.ndim != 1:
        raise ValueError("tv_denoise_1d expects a 1-D array")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if y.shape[0] <= 1 or lam == 0.0:
        return y.copy()
    x = np.empty_like(y)
    _kernel_call(_tv_denoise_kernel, _tv_denoise_kernel_py, y, lam, x)
    return x


def _solve_chain_smoothing(Y, gamma, rho):
    """Columnwise solve of (2*gamma*L + rho*I) x = rho*y, L the chain Laplacian.

    ``rho`` is a scalar or one value per column of Y.  The matrix is strictly
    diagonally dominant, so the Thomas sweeps need no pivoting.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if n == 1:
        return Y.copy()
    col_shape = Y.shape[1:]
    rho_cols = _writable_c(
        np.broadcast_to(np.asarray(rho, dtype=np.float64), col_shape).ravel()
    )
    Yt = _writable_c(Y.reshape(n, -1).T)
    out = np.empty_like(Yt)
    _kernel_call(
        _chain_smooth_rows_kernel, _chain_smooth_rows_kernel_py,
        Yt, float(gamma), rho_cols, np.empty(n), out,
    )
    return out.T.reshape(Y.shape)


def prox(reg: Regularizer, Y, rho: float) -> np.ndarray:
    """Scaled proximal operator of ``reg`` at Y with scale rho.

    Parameters
    ----------
    reg : Regularizer
    Y : (m, n) array
    rho : float
        Positive scale; larger rho keeps the output closer to Y.

    Returns
    -------
    (m, n) array, the minimizer of g(X) + (rho/2) ||X - Y||_F^2.
    """
    rho = float(rho)
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    Y = np.asarray(Y, dtype=np.float64)
    if not np.all(np.isfinite(Y)):
        raise ValueError("prox input contains non-finite entries")
    if reg.kind == "none" or (reg.kind != "nonneg" and reg.strength == 0.0):
        return Y.copy()
    if reg.kind == "nonneg":
        return np.maximum(Y, 0.0)
    if reg.kind == "ridge":
        return Y * (rho / (2.0 * reg.strength + rho))
    if reg.kind == "tv":
        return tv_denoise_rows(Y.T, reg.strength / rho).T
    # graph_laplacian_chain
    return _solve_chain_smoothing(Y, reg.strength, rho)


def penalty_value(reg: Regularizer, X) -> float:
    """Evaluate the penalty g(X); +inf for violated indicator constraints."""
    X = np.asarray(X, dtype=np.float64)
    if reg.kind == "none":
        return 0.0
    if reg.kind == "nonneg":
        return 0.0 if np.all(X >= 0.0) else float("inf")
    if reg.kind == "ridge":
        return reg.strength * float(np.sum(X * X))
    diffs = np.diff(X, axis=0)
    if reg.kind == "tv":
        return reg.strength * float(np.sum(np.abs(diffs)))
    # graph_laplacian_chain
    return reg.strength * float(np.sum(diffs * diffs))
