import numpy as np
import pytest

from spwaves.grid import Grid3, SpectralWorkspace


@pytest.fixture(scope="session")
def grid64():
    return Grid3(64, 16.0)


@pytest.fixture(scope="session")
def ws64(grid64):
    return SpectralWorkspace(grid64)


@pytest.fixture(scope="session")
def grid32():
    return Grid3(32, 16.0)


@pytest.fixture(scope="session")
def ws32(grid32):
    return SpectralWorkspace(grid32)


@pytest.fixture(scope="session")
def grid24():
    return Grid3(24, 16.0)


@pytest.fixture(scope="session")
def ws24(grid24):
    return SpectralWorkspace(grid24)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def smooth_random_complex(grid, rng, decay=0.5, envelope_width=None):
    """Random complex field, low-pass filtered and localized in the box."""
    import scipy.fft as sfft

    raw = rng.standard_normal((grid.n,) * 3) + 1j * rng.standard_normal((grid.n,) * 3)
    k2 = grid.wavenumber_sq()
    filt = sfft.ifftn(sfft.fftn(raw) * np.exp(-decay * k2))
    w = envelope_width if envelope_width is not None else grid.length / 6.0
    return filt * np.exp(-grid.radius_sq() / (2.0 * w**2))
