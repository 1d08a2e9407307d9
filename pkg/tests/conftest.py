import math

import numpy as np
import pytest

from core.model import DetectorGrid, Geometry, SourceSpec, make_double_pinhole_mask

WAVELENGTH = 780e-9
DISTANCE = 0.910
SLIT_WIDTH = 0.36e-3
SCAN_STEP = 0.125e-3


@pytest.fixture
def geometry() -> Geometry:
    return Geometry(wavelength=WAVELENGTH, dist_reference=DISTANCE, dist_object=DISTANCE)


@pytest.fixture
def slit_source() -> SourceSpec:
    """A 0.36 mm slit, modeled as a rectangle scanned along its width."""
    return SourceSpec.rectangle(width=SLIT_WIDTH, height=0.16e-3, emitter_pitch=0.02e-3)


@pytest.fixture
def disk_source() -> SourceSpec:
    return SourceSpec.disk(diameter=0.36e-3, emitter_pitch=0.03e-3)


@pytest.fixture
def hbt_scan_grid() -> DetectorGrid:
    """|dx| <= 3 mm at the 0.125 mm scanning step."""
    return DetectorGrid.centered(pitch=SCAN_STEP, nx=49)


@pytest.fixture
def pinhole_mask():
    """2 mm pinholes 5 mm apart, sampled at 0.2 mm."""
    grid = DetectorGrid.centered(pitch=0.2e-3, nx=47, ny=13)
    return make_double_pinhole_mask(grid, diameter=2.0e-3, separation=5.0e-3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def sinc_squared(u):
    u = np.asarray(u, dtype=float)
    safe = np.where(u == 0, 1.0, u)
    return np.where(u == 0, 1.0, (np.sin(safe) / safe) ** 2)


def slit_argument(delta):
    return math.pi * SLIT_WIDTH * np.asarray(delta) / (WAVELENGTH * DISTANCE)
