import numpy as np
import pytest

from doapose.doa import ArrayGeometry
from doapose.geometry import Pose, Rotation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def circ4():
    """4-mic circular array, 5 cm radius."""
    return ArrayGeometry.circular(4, 0.05)


def random_rotation(rng) -> Rotation:
    return Rotation.from_quat(rng.standard_normal(4))


def random_pose(rng, scale=5.0) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-scale, scale, 3))
