import numpy as np
import pytest

from src.engine.model import (
    DisorderConfig,
    LambdaDistribution,
    PotentialProfile,
    entries_from_matrix,
    reference_config,
)


@pytest.fixture
def free_l1():
    return reference_config("free-l1", seed=1)


@pytest.fixture
def free_l2():
    return reference_config("free-l2", seed=1)


@pytest.fixture
def coupled_l2():
    return reference_config("coupled-l2", seed=11)


@pytest.fixture
def broken_l2():
    """Hermitian but not time-reversal symmetric: only channel 1 is disordered."""
    W = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
    return DisorderConfig(
        L=2,
        K=1,
        profiles=[PotentialProfile(values=[entries_from_matrix(W)], widths=[1.0])],
        lambda_dist=LambdaDistribution(kind="uniform", low=-1.0, high=1.0),
        seed=3,
        time_reversal=False,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
