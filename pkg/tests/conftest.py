import numpy as np
import pytest

from anikep import AngularPotential, PotentialSpec


@pytest.fixture
def benchmark_spec():
    """alpha=1, U(theta) = 1 + 0.1(1 - cos 2 theta); minima at 0 and pi."""
    return PotentialSpec(
        alpha=1.0, angular=AngularPotential(a0=1.1, cos_coeffs=(0.0, -0.1))
    )


@pytest.fixture
def kepler_spec():
    """Isotropic alpha=1 potential, U identically 1."""
    return PotentialSpec(alpha=1.0, angular=AngularPotential(a0=1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
