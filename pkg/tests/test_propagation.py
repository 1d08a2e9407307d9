import math

import numpy as np
import pytest

from core.model import DetectorGrid, SourceSpec
from exceptions.exceptions import DomainException
from services.propagation import (
    PlanTarget,
    PropagationPlan,
    propagate,
    propagate_batch,
    propagator_amplitude,
    propagator_matrix,
)
from services.speckle_source import AmplitudeMode, SeedSpec, SourceRealization, sample_realization

WAVELENGTH = 780e-9
DISTANCE = 0.910


def test_zero_offset_is_the_unit_phasor():
    assert propagator_amplitude((1e-3, 2e-3), (1e-3, 2e-3), DISTANCE, WAVELENGTH) == complex(1.0, 0.0)


def test_phase_reaches_pi_at_the_fresnel_length():
    offset = math.sqrt(WAVELENGTH * DISTANCE)
    value = propagator_amplitude((0.0, 0.0), (offset, 0.0), DISTANCE, WAVELENGTH)
    assert value.real == pytest.approx(-1.0, abs=1e-12)
    assert value.imag == pytest.approx(0.0, abs=1e-12)


def test_phase_for_a_one_millimeter_offset():
    value = propagator_amplitude((0.0, 0.0), (0.0, 1e-3), DISTANCE, WAVELENGTH)
    phase = math.pi * 1e-6 / (WAVELENGTH * DISTANCE)
    assert phase == pytest.approx(4.426, abs=1e-3)
    assert value == pytest.approx(complex(math.cos(phase), math.sin(phase)), abs=1e-15)
    assert abs(value) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("distance, wavelength", [(0.0, WAVELENGTH), (DISTANCE, -1.0), (math.inf, WAVELENGTH)])
def test_non_positive_lengths_are_rejected(distance, wavelength):
    with pytest.raises(DomainException):
        propagator_amplitude((0.0, 0.0), (0.0, 0.0), distance, wavelength)
    with pytest.raises(DomainException):
        propagator_matrix(np.zeros((1, 2)), np.zeros((1, 2)), distance, wavelength)


def test_large_offsets_warn_about_the_paraxial_form(caplog):
    with caplog.at_level("WARNING"):
        propagator_amplitude((0.0, 0.0), (0.2, 0.0), 1.0, WAVELENGTH)
    assert "paraxial" in caplog.text


def test_matrix_matches_the_scalar_propagator():
    sources = np.array([[0.0, 0.0], [1e-4, -2e-4]])
    targets = np.array([[1e-3, 0.0], [-5e-4, 3e-4], [0.0, 0.0]])
    matrix = propagator_matrix(sources, targets, DISTANCE, WAVELENGTH)
    for s, source in enumerate(sources):
        for t, target in enumerate(targets):
            assert matrix[s, t] == pytest.approx(propagator_amplitude(source, target, DISTANCE, WAVELENGTH),
                                                 abs=1e-14)


def _plan(geometry, grid):
    return PropagationPlan(geometry=geometry, which=PlanTarget.TO_REFERENCE, target=grid)


def test_single_emitter_gives_a_unit_modulus_field(geometry):
    grid = DetectorGrid.centered(pitch=0.1e-3, nx=21, ny=5)
    realization = SourceRealization(np.array([[3e-5, -1e-5]]), [1.0], AmplitudeMode.UNIT_PHASOR)
    field = propagate(realization, _plan(geometry, grid))
    assert np.allclose(np.abs(field.values), 1.0, atol=1e-14)


def test_two_emitters_give_young_fringes(geometry):
    d = 0.36e-3
    grid = DetectorGrid.centered(pitch=0.05e-3, nx=121)
    realization = SourceRealization(np.array([[-d / 2, 0.0], [d / 2, 0.0]]), [1.0, 1.0], AmplitudeMode.UNIT_PHASOR)
    field = propagate(realization, _plan(geometry, grid))
    expected = 2.0 + 2.0 * np.cos(2 * np.pi * d * grid.x_axis / (WAVELENGTH * DISTANCE))
    assert np.allclose(field.intensity, expected, atol=1e-11)


def test_propagation_is_linear(geometry, disk_source):
    grid = DetectorGrid.centered(pitch=0.2e-3, nx=15, ny=15)
    plan = _plan(geometry, grid)
    first = sample_realization(disk_source, SeedSpec(5, 0))
    second = sample_realization(disk_source, SeedSpec(5, 1))
    combined = propagate(first + second, plan).values
    separate = propagate(first, plan).values + propagate(second, plan).values
    assert np.allclose(combined, separate, rtol=1e-12, atol=1e-12 * np.abs(separate).max())


def test_propagation_is_translation_covariant(geometry, disk_source):
    shift = np.array([2e-4, -1e-4])
    grid = DetectorGrid.centered(pitch=0.2e-3, nx=11, ny=11)
    moved_grid = DetectorGrid(origin=tuple(np.add(grid.origin, shift)), pitch=grid.pitch, counts=grid.counts)
    realization = sample_realization(disk_source, SeedSpec(5, 2))
    moved = SourceRealization(realization.positions + shift, realization.amplitudes, realization.mode)
    original = propagate(realization, _plan(geometry, grid)).values
    shifted = propagate(moved, _plan(geometry, moved_grid)).values
    assert np.allclose(shifted, original, rtol=0.0, atol=1e-10 * np.abs(original).max())


def test_batch_rows_match_single_propagation(geometry, disk_source):
    grid = DetectorGrid.centered(pitch=0.2e-3, nx=9)
    realizations = [sample_realization(disk_source, SeedSpec(9, k)) for k in range(3)]
    phasors = propagator_matrix(realizations[0].positions, grid.coordinates(), DISTANCE, WAVELENGTH)
    batch = propagate_batch(np.stack([r.amplitudes for r in realizations]), phasors)
    for row, realization in zip(batch, realizations):
        np.testing.assert_allclose(row, propagate(realization, _plan(geometry, grid)).values, rtol=1e-13)


def test_empty_realization_is_rejected(geometry):
    empty = SourceRealization(np.zeros((0, 2)), np.zeros(0), AmplitudeMode.GAUSSIAN_FIELD)
    with pytest.raises(DomainException):
        propagate(empty, _plan(geometry, DetectorGrid.centered(pitch=1e-4, nx=3)))


@pytest.mark.slow
def test_mean_intensity_is_flat_across_the_scan(geometry):
    source = SourceSpec.disk(diameter=0.36e-3, emitter_pitch=0.03e-3)
    grid = DetectorGrid.centered(pitch=0.25e-3, nx=25)
    plan = _plan(geometry, grid)
    mean = np.zeros(grid.size)
    for index in range(5000):
        mean += propagate(sample_realization(source, SeedSpec(17, index)), plan).intensity
    mean /= 5000
    assert np.max(np.abs(mean / mean.mean() - 1.0)) < 0.05
