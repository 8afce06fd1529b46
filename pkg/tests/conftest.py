import pytest

from fairexperts import HyperParams, generate_synthetic, train_erm, train_experts

from helpers import separable_config


@pytest.fixture(scope="session")
def separable_ds():
    return generate_synthetic(separable_config(seed=42))


@pytest.fixture(scope="session")
def erm42(separable_ds):
    return train_erm(separable_ds, HyperParams(seed=42))


@pytest.fixture(scope="session")
def experts42(separable_ds):
    return train_experts(separable_ds, HyperParams(seed=42))
