import numpy as np
import pytest

from app.config import Settings
from app.families import FAMILY_PRESETS, build_family
from app.services.bvp_discretize import build


@pytest.fixture
def settings():
    """Test settings: serial, smaller sampling budgets."""
    return Settings(
        workers=1,
        log_level="DEBUG",
        seeds_per_dim=12,
        min_seeds=64,
        max_seeds=2048,
        boundary_samples_per_dim=17,
        max_boundary_samples=4000,
        random_seed=20240601,
    )


@pytest.fixture
def disc16(settings):
    return build(16, settings)


@pytest.fixture
def disc32(settings):
    return build(32, settings)


@pytest.fixture
def nonlocal_phi(disc16):
    return build_family(FAMILY_PRESETS["nonlocal"].descriptor, disc16)


@pytest.fixture
def piecewise_phi(disc16):
    return build_family(FAMILY_PRESETS["piecewise_affine"].descriptor, disc16)


@pytest.fixture
def aumann_phi(disc16):
    return build_family(FAMILY_PRESETS["aumann"].descriptor, disc16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
