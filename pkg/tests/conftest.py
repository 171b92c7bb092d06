import numpy as np
import pytest

from usrecon.se3 import Pose6, RigidTransform, mat_from_pose6


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_transform(rng: np.random.Generator, t_scale: float = 50.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-t_scale, t_scale, size=3))


def random_pose(rng: np.random.Generator, ry_limit: float = 1.4) -> Pose6:
    t = rng.uniform(-50, 50, size=3)
    rx, rz = rng.uniform(-np.pi, np.pi, size=2)
    ry = rng.uniform(-ry_limit, ry_limit)
    return Pose6(t[0], t[1], t[2], rx, ry, rz)


def random_transform_euler(rng: np.random.Generator) -> RigidTransform:
    return mat_from_pose6(random_pose(rng))


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
