import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hrislink.channel import GeometryParams, SystemConfig


@pytest.fixture
def desk_cfg() -> SystemConfig:
    return SystemConfig(n_ris=16, n_active=2)


@pytest.fixture
def geo() -> GeometryParams:
    return GeometryParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_hermitian_pd(rng: np.random.Generator, n: int) -> np.ndarray:
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return b @ b.conj().T + np.eye(n)
