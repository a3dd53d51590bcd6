import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from intercause.classes import ALL_CLASSES, MONOTONE_CLASSES
from intercause.em import Dataset

settings.register_profile(
    "default", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_dataset(rng: np.random.Generator, n: int, monotonic: bool = True, p: int = 1, sep: float = 3.0) -> Dataset:
    """Small labelled mixture dataset: random classes, cells and class-specific W means."""
    classes = MONOTONE_CLASSES if monotonic else ALL_CLASSES
    K = len(classes)
    cls = rng.integers(0, K, n)
    cell = rng.integers(0, 4, n)
    bits = np.array(classes)
    y = bits[cls, cell]
    cov = rng.standard_normal((n, p - 1)) if p > 1 else None
    w = sep * cls + rng.standard_normal(n)
    if cov is not None:
        w = w + cov @ rng.uniform(-1, 1, p - 1)
    return Dataset.from_arrays(cell >> 1, cell & 1, y, w, cov)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)
