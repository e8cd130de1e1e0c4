import numpy as np
import pytest

from kslog.models import binary_asymmetric_model, cfn_model


@pytest.fixture(scope="session")
def cfn():
    return cfn_model()


@pytest.fixture(scope="session")
def asym():
    return binary_asymmetric_model(0.7)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
