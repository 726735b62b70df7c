from collections.abc import Iterator

import numpy as np
import pytest

from robust_renyi.core import QuadratureSpec, Sample, get_config
from robust_renyi.models import ExponentialScale, MvnMean, NormalLocation, NormalScale

SETTINGS = (
    "THREADS",
    "BETA_MAX",
    "GH_NODES",
    "PROGRESS",
    "LOG_LEVEL",
    "SOLVER_TOL",
    "SOLVER_MAX_ITER",
    "SOLVER_N_STARTS",
)


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """Every test reads the configuration from a clean environment."""
    for name in SETTINGS:
        monkeypatch.delenv(f"ROBUST_RENYI_{name}", raising=False)
    get_config.cache_clear()
    yield
    get_config.cache_clear()


@pytest.fixture
def normal_scale() -> NormalScale:
    return NormalScale(m=0.0)


@pytest.fixture
def normal_location() -> NormalLocation:
    return NormalLocation(sigma=1.0)


@pytest.fixture
def exponential() -> ExponentialScale:
    return ExponentialScale()


@pytest.fixture
def mvn2() -> MvnMean:
    return MvnMean(np.diag([2.0, 1.0]))


@pytest.fixture
def quad() -> QuadratureSpec:
    return QuadratureSpec.default()


@pytest.fixture
def small_mvn_quad() -> QuadratureSpec:
    return QuadratureSpec.default(nodes=24)


@pytest.fixture
def seeded_normal_sample() -> Sample:
    """Twenty standard normal draws from a fixed seed."""
    return Sample(np.random.default_rng(20240601).standard_normal(20))

