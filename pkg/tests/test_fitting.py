import math

import numpy as np
import pytest

from conftest import DISTANCE, WAVELENGTH
from core.model import CorrelationMap, DetectorGrid, GhostImage, Statistics
from exceptions.exceptions import DomainException, RangeException, ValidationException
from services.analytic_kernels import Dimensionality, KernelParams, g2_analytic
from services.fitting import (
    FitResult,
    ModelKind,
    ProfileModel,
    dip_separation,
    extract_section,
    fit_profile,
    fwhm,
)

XS = np.linspace(-6e-3, 6e-3, 193)


def _converged(kind, params, n_components=1) -> FitResult:
    model = ProfileModel(kind, params, n_components)
    return FitResult(model=model, residual_rms=0.0, iterations=1, converged=True,
                     param_stderr=np.zeros(model.params.size))


def test_sinc_dip_round_trip():
    truth = ProfileModel(ModelKind.SINC2_DIP, [1.0, 0.95, 0.2e-3, 0.6e-3])
    fit = fit_profile(XS, truth.evaluate(XS), ModelKind.SINC2_DIP)
    assert fit.converged
    assert not fit.degenerate
    assert np.allclose(fit.model.params, truth.params, rtol=1e-6, atol=1e-9)
    assert fit.residual_rms < 1e-6


def test_sinc_peak_round_trip_with_a_fixed_baseline():
    truth = ProfileModel(ModelKind.SINC2_PEAK, [1.0, 0.8, 0.0, 0.5e-3])
    fit = fit_profile(XS, truth.evaluate(XS), "sinc2_peak", fixed_baseline=1.0)
    assert fit.converged
    assert fit.model.baseline == 1.0
    assert fit.param_stderr[0] == 0.0
    assert fit.model.widths[0] == pytest.approx(0.5e-3, rel=1e-6)


def test_two_gaussian_dips_give_the_center_separation():
    truth = ProfileModel(ModelKind.GAUSSIAN_DIPS, [1.0, 0.4, -2.5e-3, 0.8e-3, 0.35, 2.5e-3, 0.8e-3], 2)
    fit = fit_profile(XS, truth.evaluate(XS), ModelKind.GAUSSIAN_DIPS, n_components=2)
    separation, stderr = dip_separation(fit)
    assert separation == pytest.approx(5e-3, rel=0.01)
    assert np.allclose(np.sort(fit.model.centers), [-2.5e-3, 2.5e-3], atol=1e-8)
    assert stderr >= 0.0


def test_gaussian_peaks_recover_noisy_data(rng):
    truth = ProfileModel(ModelKind.GAUSSIAN_PEAKS, [1.0, 0.4, -2.5e-3, 0.8e-3, 0.4, 2.5e-3, 0.8e-3], 2)
    ys = truth.evaluate(XS) + rng.normal(0.0, 0.01, XS.size)
    fit = fit_profile(XS, ys, ModelKind.GAUSSIAN_PEAKS, n_components=2)
    separation, stderr = dip_separation(fit)
    assert separation == pytest.approx(5e-3, abs=3 * stderr + 0.05e-3)
    assert 0.0 < stderr < 0.1e-3
    assert fit.residual_rms == pytest.approx(0.01, rel=0.2)


def test_explicit_initial_guess_is_used():
    truth = ProfileModel(ModelKind.SINC2_DIP, [1.0, 1.0, 0.0, 0.6e-3])
    fit = fit_profile(XS, truth.evaluate(XS), ModelKind.SINC2_DIP, init=[0.9, 0.8, 0.1e-3, 0.5e-3])
    assert fit.model.centers[0] == pytest.approx(0.0, abs=1e-9)


def test_constant_profile_is_degenerate():
    fit = fit_profile(XS, np.full(XS.size, 1.0), ModelKind.SINC2_DIP)
    assert fit.degenerate
    assert not fit.converged
    assert np.all(np.isnan(fit.param_stderr))
    assert fit.model.baseline == 1.0
    with pytest.raises(DomainException):
        fwhm(fit)


def test_samples_must_be_strictly_increasing():
    xs = XS.copy()
    xs[10] = xs[9]
    with pytest.raises(ValidationException) as error:
        fit_profile(xs, np.ones(xs.size), ModelKind.SINC2_DIP)
    assert error.value.index == 10
    with pytest.raises(ValidationException):
        fit_profile(XS[:5], np.ones(5), ModelKind.SINC2_DIP)
    with pytest.raises(ValidationException):
        fit_profile(XS, np.ones(XS.size - 1), ModelKind.SINC2_DIP)


def test_profile_model_validation():
    with pytest.raises(ValidationException):
        ProfileModel(ModelKind.SINC2_DIP, [1.0, 0.5, 0.0])
    with pytest.raises(ValidationException):
        ProfileModel(ModelKind.SINC2_DIP, [1.0, -0.5, 0.0, 1e-3])
    with pytest.raises(ValidationException):
        ProfileModel(ModelKind.GAUSSIAN_DIPS, [1.0, 0.5, 0.0, 0.0], 1)


def test_fwhm_of_the_antibunching_dip():
    w = WAVELENGTH * DISTANCE / (math.pi * 0.36e-3)
    fit = _converged(ModelKind.SINC2_DIP, [1.0, 1.0, 0.0, w])
    assert fwhm(fit) == pytest.approx(0.8859 * WAVELENGTH * DISTANCE / 0.36e-3, rel=1e-4)
    assert fwhm(fit) == pytest.approx(1.747e-3, abs=1e-6)


def test_fwhm_of_a_gaussian_component():
    fit = _converged(ModelKind.GAUSSIAN_PEAKS, [0.0, 1.0, 0.0, 1e-3, 1.0, 4e-3, 2e-3], 2)
    assert fwhm(fit, 1) == pytest.approx(2.0 * math.sqrt(2.0 * math.log(2.0)) * 2e-3)


def test_dip_separation_needs_two_gaussians():
    with pytest.raises(DomainException):
        dip_separation(_converged(ModelKind.SINC2_DIP, [1.0, 1.0, 0.0, 1e-3]))
    with pytest.raises(DomainException):
        dip_separation(_converged(ModelKind.GAUSSIAN_DIPS, [1.0, 1.0, 0.0, 1e-3], 1))


def test_fit_is_equivariant_under_shifts_and_scaling():
    truth = ProfileModel(ModelKind.SINC2_DIP, [1.0, 0.9, 0.3e-3, 0.6e-3])
    ys = truth.evaluate(XS)
    base = fit_profile(XS, ys, ModelKind.SINC2_DIP)

    shift = 0.7e-3
    shifted = fit_profile(XS + shift, ys, ModelKind.SINC2_DIP)
    assert shifted.model.centers[0] - base.model.centers[0] == pytest.approx(shift, rel=1e-6)
    assert shifted.model.widths[0] == pytest.approx(base.model.widths[0], rel=1e-6)

    scaled = fit_profile(XS, 3.0 * ys, ModelKind.SINC2_DIP)
    assert scaled.model.baseline == pytest.approx(3.0 * base.model.baseline, rel=1e-7)
    assert scaled.model.amplitudes[0] == pytest.approx(3.0 * base.model.amplitudes[0], rel=1e-7)
    assert scaled.model.centers[0] == pytest.approx(base.model.centers[0], rel=1e-7)
    assert scaled.model.widths[0] == pytest.approx(base.model.widths[0], rel=1e-7)


def test_objective_trace_never_increases(rng):
    truth = ProfileModel(ModelKind.GAUSSIAN_DIPS, [1.0, 0.5, 0.0, 1e-3])
    fit = fit_profile(XS, truth.evaluate(XS) + rng.normal(0.0, 0.02, XS.size), ModelKind.GAUSSIAN_DIPS)
    trace = np.array(fit.objective_trace)
    assert trace.size > 0
    assert trace[-1] == pytest.approx(fit.residual_rms ** 2 * XS.size, rel=1e-9)
    assert np.all(np.diff(trace) <= 1e-15 * trace[:-1])


def test_fitted_width_scales_inversely_with_source_size():
    xs = np.linspace(-12e-3, 12e-3, 481)
    products = []
    for d in (0.18e-3, 0.36e-3, 0.72e-3):
        params = KernelParams(d, WAVELENGTH, DISTANCE, Dimensionality.ONE_D)
        fit = fit_profile(xs, g2_analytic(xs, Statistics.FERMION, params), ModelKind.SINC2_DIP)
        products.append(fwhm(fit) * d)
    assert max(products) / min(products) - 1.0 < 0.01
    assert products[1] / 0.36e-3 == pytest.approx(1.747e-3, rel=1e-3)


@pytest.fixture
def plane() -> CorrelationMap:
    grid = DetectorGrid.centered(pitch=0.5e-3, nx=9, ny=7)
    x, y = grid.coordinates().T
    return CorrelationMap(scan=grid, values=1.0 + 200.0 * x - 100.0 * y, kind=Statistics.BOSON)


def test_sections_are_exact_on_linear_maps(plane):
    xs, ys = extract_section(plane, (-2e-3, -1.5e-3), (2e-3, 1.5e-3), 11)
    assert xs[0] == pytest.approx(-2.5e-3)
    assert xs[-1] == pytest.approx(2.5e-3)
    t = np.linspace(0.0, 1.0, 11)
    x = -2e-3 + 4e-3 * t
    y = -1.5e-3 + 3e-3 * t
    assert np.allclose(ys, 1.0 + 200.0 * x - 100.0 * y, atol=1e-12)


def test_section_along_a_one_dimensional_scan():
    grid = DetectorGrid.centered(pitch=1e-3, nx=5)
    image = GhostImage(scan=grid, values=[0.0, 1.0, 2.0, 3.0, 4.0], kind=Statistics.FERMION, baseline=1.0)
    xs, ys = extract_section(image, (-2e-3, 0.0), (2e-3, 0.0), 9)
    assert np.allclose(ys, np.linspace(0.0, 4.0, 9))
    assert np.allclose(xs, np.linspace(-2e-3, 2e-3, 9))


def test_section_errors(plane):
    with pytest.raises(ValidationException):
        extract_section(plane, (0.0, 0.0), (1e-3, 0.0), 1)
    with pytest.raises(RangeException):
        extract_section(plane, (1e-3, 1e-3), (1e-3, 1e-3), 5)
    with pytest.raises(RangeException):
        extract_section(plane, (0.0, 0.0), (5e-3, 0.0), 5)
