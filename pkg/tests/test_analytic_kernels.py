import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from scipy.signal import find_peaks

from conftest import DISTANCE, WAVELENGTH
from core.model import DetectorGrid, Statistics, TransmissionMask, make_double_pinhole_mask
from exceptions.exceptions import DomainException, ValidationException
from services.analytic_kernels import (
    SERIES_LIMIT,
    Dimensionality,
    KernelParams,
    bessel_j1,
    g2_analytic,
    ghost_image_analytic,
    ghost_image_delta_limit,
    point_to_spot_fwhm,
    point_to_spot_profile,
    somb,
)

J1_FIRST_ZERO = 3.8317059702


def _bessel_series(x: float, order: int) -> float:
    """J0 or J1 by their power series, summed in 60-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 60
        half = Decimal(float(x)) / 2
        term = half if order == 1 else Decimal(1)
        total = term
        k = 0
        while abs(term) > Decimal("1e-45"):
            term = -term * half * half / ((k + 1) * (k + 1 + order))
            total += term
            k += 1
        return float(total)


@pytest.fixture
def params_2d() -> KernelParams:
    return KernelParams(source_extent=0.36e-3, wavelength=WAVELENGTH, distance=DISTANCE)


@pytest.fixture
def params_1d() -> KernelParams:
    return KernelParams(source_extent=0.36e-3, wavelength=WAVELENGTH, distance=DISTANCE,
                        dimensionality=Dimensionality.ONE_D)


def test_j1_reference_values():
    assert bessel_j1(0.0) == 0.0
    assert bessel_j1(1.0) == pytest.approx(0.4400505857, abs=1e-10)
    assert abs(bessel_j1(J1_FIRST_ZERO)) < 1e-9


@pytest.mark.slow
def test_j1_matches_the_series_oracle_up_to_fifty():
    xs = np.concatenate([np.linspace(0.0, 50.0, 10_000), [SERIES_LIMIT, 11.999, 12.001]])
    values = bessel_j1(xs)
    expected = np.array([_bessel_series(x, 1) for x in xs])
    assert np.max(np.abs(values - expected)) <= 1e-10


def test_j1_is_odd_and_vectorized():
    xs = np.linspace(-30.0, 30.0, 61).reshape(61, 1)
    values = bessel_j1(xs)
    assert values.shape == (61, 1)
    assert np.array_equal(values, -bessel_j1(-xs))


def test_j1_branches_meet_at_the_switch_point():
    below = bessel_j1(SERIES_LIMIT)
    above = bessel_j1(math.nextafter(SERIES_LIMIT, math.inf))
    assert abs(above - below) <= 1e-11


def test_j1_satisfies_the_derivative_recurrence(rng):
    xs = rng.uniform(0.5, 50.0, 100)
    xs = xs[np.abs(xs - SERIES_LIMIT) > 1e-3]
    h = 1e-5
    derivative = (bessel_j1(xs + h) - bessel_j1(xs - h)) / (2 * h)
    recurrence = np.array([_bessel_series(x, 0) for x in xs]) - bessel_j1(xs) / xs
    assert np.max(np.abs(derivative - recurrence)) <= 1e-9


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_special_functions_reject_non_finite_input(bad):
    with pytest.raises(DomainException):
        bessel_j1(bad)
    with pytest.raises(DomainException):
        somb(np.array([0.0, bad]))


def test_somb_values(rng):
    assert somb(0.0) == 1.0
    assert abs(somb(J1_FIRST_ZERO)) < 1e-9
    assert somb(1e-5) == pytest.approx(1.0 - 1e-10 / 8.0, abs=1e-15)
    xs = rng.uniform(-20.0, 20.0, 200)
    assert np.array_equal(somb(xs), somb(-xs))


def test_g2_at_zero_separation(params_2d, params_1d):
    for params in (params_2d, params_1d):
        assert g2_analytic(0.0, Statistics.FERMION, params) == 0.0
        assert g2_analytic(0.0, Statistics.BOSON, params) == 2.0
        assert g2_analytic(0.0, Statistics.CLASSICAL, params) == 1.0


def test_one_dimensional_fermion_kernel_vanishes_at_the_first_sinc_zero(params_1d):
    delta = WAVELENGTH * DISTANCE / 0.36e-3
    assert delta == pytest.approx(1.9717e-3, abs=1e-7)
    assert params_1d.coherence_scale == pytest.approx(delta)
    assert g2_analytic(delta, Statistics.FERMION, params_1d) == pytest.approx(1.0, abs=1e-12)


def test_kernel_identity_holds_everywhere(params_2d, params_1d, rng):
    deltas = rng.uniform(-6e-3, 6e-3, 500)
    for params in (params_2d, params_1d):
        fermion = g2_analytic(deltas, Statistics.FERMION, params)
        boson = g2_analytic(deltas, Statistics.BOSON, params)
        assert np.allclose(fermion + boson, 2.0, rtol=0.0, atol=1e-15)
        assert np.all((fermion >= 0.0) & (fermion <= 1.0))


def test_kernel_params_reject_non_positive_values():
    with pytest.raises(ValidationException) as error:
        KernelParams(source_extent=0.0, wavelength=WAVELENGTH, distance=DISTANCE)
    assert error.value.field == "source_extent"


def test_point_to_spot_widths(params_2d, params_1d):
    scale = WAVELENGTH * DISTANCE / 0.36e-3
    assert point_to_spot_fwhm(params_1d) == pytest.approx(0.8859 * scale, rel=1e-4)
    assert point_to_spot_fwhm(params_1d) == pytest.approx(1.747e-3, abs=1e-6)
    assert point_to_spot_fwhm(params_2d, Statistics.BOSON) == pytest.approx(1.0290 * scale, rel=1e-4)
    with pytest.raises(DomainException):
        point_to_spot_fwhm(params_2d, Statistics.CLASSICAL)


def test_point_to_spot_profile_crosses_half_at_the_width(params_1d):
    half = 0.5 * point_to_spot_fwhm(params_1d)
    profile = point_to_spot_profile(params_1d, Statistics.FERMION, [-half, 0.0, half])
    assert profile == pytest.approx([0.5, 0.0, 0.5], abs=1e-10)


def _pinholes(pitch: float) -> TransmissionMask:
    nx = 2 * round(3.6e-3 / pitch) + 1
    ny = 2 * round(1.1e-3 / pitch) + 1
    return make_double_pinhole_mask(DetectorGrid.centered(pitch=pitch, nx=nx, ny=ny), 2e-3, 5e-3)


def test_classical_ghost_image_is_flat(params_2d):
    mask = _pinholes(0.1e-3)
    scan = DetectorGrid.centered(pitch=0.5e-3, nx=13)
    image = ghost_image_analytic(mask, Statistics.CLASSICAL, params_2d, scan)
    assert np.all(image.values == np.sum(mask.intensity_weights))
    assert image.baseline == pytest.approx(mask.support.size * 1e-8)


def test_fermionic_ghost_image_shows_both_pinholes(params_2d):
    mask = _pinholes(0.1e-3)
    scan = DetectorGrid.centered(pitch=0.05e-3, nx=241)
    fermion = ghost_image_analytic(mask, Statistics.FERMION, params_2d, scan)
    boson = ghost_image_analytic(mask, Statistics.BOSON, params_2d, scan)

    minima, properties = find_peaks(-fermion.values, prominence=0.0)
    deepest = np.sort(minima[np.argsort(properties["prominences"])[-2:]])
    separation = scan.x_axis[deepest[1]] - scan.x_axis[deepest[0]]
    assert separation == pytest.approx(5e-3, abs=0.1e-3)

    assert np.allclose(fermion.values + boson.values, 2.0 * fermion.baseline, rtol=1e-12, atol=0.0)
    assert fermion.baseline == boson.baseline


def test_ghost_image_quadrature_converges(params_2d):
    scan = DetectorGrid.centered(pitch=0.1e-3, nx=121)
    coarse = ghost_image_analytic(_pinholes(0.05e-3), Statistics.FERMION, params_2d, scan)
    fine = ghost_image_analytic(_pinholes(0.025e-3), Statistics.FERMION, params_2d, scan)
    coarse_g2 = coarse.values / coarse.baseline
    fine_g2 = fine.values / fine.baseline
    assert np.max(np.abs(coarse_g2 - fine_g2) / fine_g2) < 0.005


def test_ghost_image_needs_a_transmissive_mask(params_2d):
    grid = DetectorGrid.centered(pitch=0.1e-3, nx=5, ny=5)
    opaque = TransmissionMask(grid=grid, values=np.zeros(25))
    with pytest.raises(DomainException):
        ghost_image_analytic(opaque, Statistics.FERMION, params_2d, grid)
    with pytest.raises(DomainException):
        ghost_image_delta_limit(opaque)


def test_delta_limit_of_a_uniform_mask_is_flat():
    grid = DetectorGrid.centered(pitch=0.5, nx=4, ny=4)
    image = ghost_image_delta_limit(TransmissionMask(grid=grid, values=np.ones(16)))
    assert image.kind is Statistics.FERMION
    assert image.baseline == pytest.approx(4.0)
    assert np.allclose(image.values, 3.0)


def test_delta_limit_subtracts_the_pinhole_indicator():
    mask = _pinholes(0.1e-3)
    image = ghost_image_delta_limit(mask)
    c1 = mask.support.size * 1e-8
    assert np.allclose(image.values, c1 - mask.values)


@pytest.mark.slow
def test_large_sources_approach_the_delta_limit():
    mask = make_double_pinhole_mask(DetectorGrid.centered(pitch=0.1e-3, nx=101, ny=41), 2e-3, 5e-3)
    params = KernelParams(source_extent=5e-3, wavelength=WAVELENGTH, distance=DISTANCE)
    blurred = ghost_image_analytic(mask, Statistics.FERMION, params, mask.grid)
    limit = ghost_image_delta_limit(mask)
    assert np.corrcoef(blurred.values, limit.values)[0, 1] >= 0.95
