import numpy as np
import pytest

from phred.bench import MSDConfig, msd_chain
from phred.core import ThetaVector, theta_length


@pytest.fixture(scope="session")
def msd_fom():
    """The n = 100, m = 2 chain benchmark."""
    return msd_chain(MSDConfig())


@pytest.fixture(scope="session")
def msd_fom_cache():
    """Shared full-model response cache for benchmark-level tests."""
    return {}


@pytest.fixture(scope="session")
def msd_r8_init(msd_fom, msd_fom_cache):
    """Greedy order-8 starting model for the benchmark, shared per session."""
    from phred.greedy import greedy_init, theta_from_init

    rom0, points = greedy_init(msd_fom, 8, fom_cache=msd_fom_cache)
    return rom0, points, theta_from_init(rom0)


def random_theta(rng, n, m, scale=1.0):
    return ThetaVector(n, m, scale * rng.standard_normal(theta_length(n, m)))
