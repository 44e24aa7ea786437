"""Shared builders for random test problems."""

from pf2fit.constraint import orthonormal_polar_factor
from pf2fit.core import Pf2Factors, SliceStack, reconstruct_stack


def random_factors(rng, I=4, J=(5, 6, 4), R=2, nonneg=False):
    draw = rng.uniform if nonneg else rng.standard_normal
    if nonneg:
        A = rng.uniform(0.1, 1.0, size=(I, R))
        B = [rng.uniform(0.1, 1.0, size=(Jk, R)) for Jk in J]
    else:
        A = draw(size=(I, R))
        B = [draw(size=(Jk, R)) for Jk in J]
    D = rng.uniform(0.1, 1.1, size=(len(J), R))
    return Pf2Factors(A, D, B)


def random_stack(rng, I=4, J=(5, 6, 4)):
    return SliceStack([rng.standard_normal((I, Jk)) for Jk in J])


def feasible_factors(rng, I=4, J=(5, 6, 4), R=2):
    """Factors whose evolving blocks satisfy the cross-product constraint."""
    A = rng.standard_normal((I, R))
    delta = rng.standard_normal((R, R))
    P = [orthonormal_polar_factor(rng.standard_normal((Jk, R))) for Jk in J]
    D = rng.uniform(0.1, 1.1, size=(len(J), R))
    return Pf2Factors(A, D, [Pk @ delta for Pk in P]), P, delta


def exact_fit_problem(rng, I=4, J=(5, 6, 4), R=2):
    """A stack plus factors that reconstruct it exactly."""
    factors, P, delta = feasible_factors(rng, I, J, R)
    return reconstruct_stack(factors), factors, P, delta
