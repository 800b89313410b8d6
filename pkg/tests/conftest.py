import numpy as np
import pytest

from drn.data import SyntheticSpec, block_task_covariance, generate_synthetic
from drn.mtl_net import init_net


def random_spd(rng, n, jitter=0.5):
    a = rng.standard_normal((n, n))
    return a @ a.T / n + jitter * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net():
    """D=7, trunk 7->5, bottleneck 5->4, C=3, T=2."""
    return init_net(7, 3, 2, trunk_widths=[5], task_widths=[4], init_scale=0.5, rng=np.random.default_rng(7))


@pytest.fixture
def related_tasks():
    """Tasks 0-2 strongly correlated, task 3 independent."""
    spec = SyntheticSpec(
        num_tasks=4,
        feature_dim=6,
        num_classes=3,
        samples_per_task=40,
        task_covariance=block_task_covariance(4, [0, 1, 2], 0.9),
        seed=3,
    )
    return generate_synthetic(spec)
