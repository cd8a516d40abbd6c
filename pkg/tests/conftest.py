import time

import numpy as np
import pytest

from slotfit.geometry import RigidTransform, nearest_rotation

SESSION_START = time.perf_counter()


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, [0, 1]] = q[:, [1, 0]]
    return nearest_rotation(q)


def random_transform(rng: np.random.Generator, translation_scale=1.0) -> RigidTransform:
    return RigidTransform(
        random_rotation(rng), rng.uniform(-translation_scale, translation_scale, 3)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
