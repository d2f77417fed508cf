"""Shared helpers for the test suite."""

import numpy as np

from anikep import AngularPotential, PotentialSpec


def random_positive_angular(rng, max_degree=3):
    """Random trig polynomial bounded away from zero.

    The harmonic coefficients are scaled so their absolute sum stays below
    45% of the constant term, which guarantees positivity.
    """
    a0 = float(rng.uniform(1.0, 2.0))
    degree = int(rng.integers(1, max_degree + 1))
    cos_c = rng.uniform(-1.0, 1.0, degree)
    sin_c = rng.uniform(-1.0, 1.0, degree)
    total = np.sum(np.abs(cos_c)) + np.sum(np.abs(sin_c))
    scale = 0.45 * a0 / total
    return AngularPotential(
        a0=a0,
        cos_coeffs=tuple(cos_c * scale),
        sin_coeffs=tuple(sin_c * scale),
    )


def random_spec(rng, alpha=None, max_degree=3):
    if alpha is None:
        alpha = float(rng.uniform(0.3, 1.7))
    return PotentialSpec(alpha=alpha, angular=random_positive_angular(rng, max_degree))
