"""Synthetic ground-truth factors and noisy slice stacks.

The shared factor A is folded standard normal (entrywise |N(0,1)|) and the
weight rows are uniform on [0.1, 1.1], keeping them away from zero so the
evolving factors stay recoverable.  The evolving factors are cyclic row
shifts of a single blueprint matrix, which makes the generated collection
satisfy the constant-cross-product constraint exactly.  Three blueprint
styles are available:

1. folded-normal entries,
2. smooth columns (positive mixtures of 2-3 Gaussian bumps with distinct
   centers per component),
3. piecewise-constant columns with exactly 6 jumps whose level changes sum
   to zero (so a cyclically shifted column has no seam).

Noise is scaled relative to the whole stack: X + eta * ||X|| * E / ||E||
with E standard normal, so the realized noise-to-signal norm ratio is
exactly eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Pf2Factors, SliceStack, reconstruct_stack, sq_frobenius
from .seeding import derive_seed

__all__ = [
    "SimSpec",
    "gen_factors",
    "cyclic_shift_blueprint",
    "add_noise",
    "simulate_dataset",
]

_NOISE_STREAM = 0x6E6F6973  # keeps the noise draw independent of the factor draw


@dataclass(frozen=True)
class SimSpec:
    """Dimensions, blueprint style, noise level and seed of one dataset."""

    I: int = 30  # noqa: E741 - domain name for the shared row count
    J: int = 40
    K: int = 15
    R: int = 3
    setup: int = 1
    eta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("I", "J", "K", "R"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.J < self.R:
            raise ValueError("need J >= R for identifiable evolving factors")
        if self.setup not in (1, 2, 3):
            raise ValueError("setup must be 1, 2 or 3")
        if self.setup == 3 and self.J < 7:
            raise ValueError("setup 3 needs J >= 7 to place 6 distinct jumps")
        if not self.eta >= 0:
            raise ValueError("eta must be >= 0")


def _blueprint_folded_normal(rng, J, R):
    return np.abs(rng.standard_normal((J, R)))


def _blueprint_smooth(rng, J, R):
    grid = np.arange(J, dtype=np.float64)
    Bhat = np.zeros((J, R))
    for r in range(R):
        n_bumps = int(rng.integers(2, 4))
        centers = rng.uniform(0.15 * J, 0.85 * J, size=n_bumps)
        widths = rng.uniform(J / 20.0, J / 8.0, size=n_bumps)
        amplitudes = rng.uniform(0.5, 1.5, size=n_bumps)
        for c, w, a in zip(centers, widths, amplitudes):
            Bhat[:, r] += a * np.exp(-0.5 * ((grid - c) / w) ** 2)
    return Bhat


def _blueprint_piecewise_constant(rng, J, R):
    Bhat = np.zeros((J, R))
    for r in range(R):
        positions = np.sort(rng.choice(np.arange(1, J), size=6, replace=False))
        changes = rng.standard_normal(5)
        changes = np.append(changes, -changes.sum())
        column = np.full(J, rng.standard_normal())
        for pos, change in zip(positions, changes):
            column[pos:] += change
        Bhat[:, r] = column
    return Bhat


_BLUEPRINTS = {
    1: _blueprint_folded_normal,
    2: _blueprint_smooth,
    3: _blueprint_piecewise_constant,
}


def cyclic_shift_blueprint(Bhat, k: int) -> np.ndarray:
    """Row j of the output is row ((j + k) mod J) of the blueprint."""
    if k < 0:
        raise ValueError("shift must be >= 0")
    Bhat = np.asarray(Bhat)
    return np.roll(Bhat, -k, axis=0)


def gen_factors(spec: SimSpec) -> Pf2Factors:
    """Ground-truth factor set for the given specification (deterministic)."""
    rng = np.random.default_rng(spec.seed)
    A = np.abs(rng.standard_normal((spec.I, spec.R)))
    D = rng.uniform(0.1, 1.1, size=(spec.K, spec.R))
    Bhat = _BLUEPRINTS[spec.setup](rng, spec.J, spec.R)
    B = [cyclic_shift_blueprint(Bhat, k) for k in range(spec.K)]
    return Pf2Factors(A, D, B)


def add_noise(stack: SliceStack, eta: float, seed: int) -> SliceStack:
    """Add stack-wide scaled Gaussian noise: the norm ratio is exactly eta."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if eta == 0.0:
        return stack
    rng = np.random.default_rng(seed)
    E = [rng.standard_normal(Xk.shape) for Xk in stack]
    norm_e = np.sqrt(sum(np.sum(Ek * Ek) for Ek in E))
    scale = eta * np.sqrt(sq_frobenius(stack)) / norm_e
    return SliceStack([Xk + scale * Ek for Xk, Ek in zip(stack, E)])


def simulate_dataset(spec: SimSpec):
    """Ground truth plus its noisy observation; returns (noisy_stack, truth)."""
    truth = gen_factors(spec)
    clean = reconstruct_stack(truth)
    noisy = add_noise(clean, spec.eta, derive_seed(spec.seed, _NOISE_STREAM))
    return noisy, truth
