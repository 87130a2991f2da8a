import numpy as np
import pytest

from dgtd.harness.presets import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small():
    """A 7-state, 3-feature, 3-agent instance."""
    return random_instance(11, n_states=(7, 7), q=(3, 3), n_agents=(3, 3))


@pytest.fixture
def random_instances():
    return [random_instance(seed) for seed in range(20)]
