"""Test configuration and fixtures."""

import math
import os

import pytest

# Keep test runs quiet and single-threaded regardless of the caller's environment
os.environ["ADSNULL_LOG_LEVEL"] = "WARNING"
os.environ.pop("ADSNULL_THREADS", None)

from src.config.settings import Settings
from src.models.geometry import Cosmology
from src.models.matter import BumpProfile
from src.services.initial_data import construct_from_profile, make_construction_profile


@pytest.fixture
def cosmo():
    """Lambda = -3 (k = 1) on the standard width v_infinity = pi."""
    return Cosmology(cosmological_constant=-3.0, v_infinity=math.pi)


@pytest.fixture
def small_settings():
    """Coarse grids and few particles so every test runs in seconds."""
    return Settings(
        n_per_slab=32,
        target_u=math.pi / 4,
        data_nodes=128,
        particle_counts=(12, 6, 6),
        moment_orders=(24, 16),
        quadrature_orders=(8, 16, 8),
        norm_lattice=(16, 32),
        log_level="WARNING",
    )


@pytest.fixture
def bump_profile():
    """A single smooth shell of unit amplitude supported in the middle of the slab."""
    return BumpProfile(amp=1.0, vc=math.pi / 2, vw=0.5, pc=1.0, pw=0.3, lc=0.5, lw=0.2)


@pytest.fixture
def trivial_data(cosmo, small_settings, bump_profile):
    """Rescaled AdS data carrying no matter."""
    cp = make_construction_profile(bump_profile.scaled(0.0), cosmo, small_settings)
    return construct_from_profile(cp, settings=small_settings)


@pytest.fixture
def bump_data(cosmo, small_settings, bump_profile):
    """Normalised data for a small shell."""
    cp = make_construction_profile(bump_profile.scaled(1e-2), cosmo, small_settings)
    return construct_from_profile(cp, settings=small_settings)
