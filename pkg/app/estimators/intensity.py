from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Dict

import numpy as np

from core.model import CorrelationMap, GhostImage, Statistics
from estimators.utils import intensity_moments, intensity_ratio, ordered_weighted_sum
from exceptions.exceptions import DegenerateEnsembleException
from interfaces.interfaces import CorrelationEstimator, EstimatorKind
from services.ensemble import EnsembleRunner, accumulate_rows
from services.propagation import propagate_batch, propagator_matrix
from services.speckle_source import AmplitudeMode, SeedSpec, emitter_lattice, sample_amplitudes

if TYPE_CHECKING:
    from services.correlators import HbtScanConfig
    from services.ghost_imaging import GhostConfig

logger = logging.getLogger(__name__)

REALIZATION_BLOCK = 250


class IntensityEstimator(CorrelationEstimator):
    """
    One fully developed speckle pattern per realization; D1 records I1, the
    second arm records I2 (a point detector) or the bucket signal B.
    """

    @property
    def name(self) -> EstimatorKind:
        return EstimatorKind.INTENSITY

    def hbt_scan(self, config: HbtScanConfig, runner: EnsembleRunner) -> Dict[Statistics, CorrelationMap]:
        config.geometry.require_balanced()
        positions, weights = emitter_lattice(config.source)
        wavelength = config.geometry.wavelength
        reference = propagator_matrix(positions, config.scan.coordinates(), config.geometry.dist_reference, wavelength)
        fixed = propagator_matrix(positions, np.array([config.fixed_point]), config.geometry.dist_object, wavelength)
        phasors = np.hstack([reference, fixed])
        n_scan = config.scan.size

        def work(start: int, stop: int):
            intensity = self._intensities(weights, phasors, config.seed, start, stop)
            return accumulate_rows(intensity_moments(intensity[:, :n_scan], intensity[:, n_scan:]))

        sums = runner.reduce(config.ensemble_size, REALIZATION_BLOCK, work, label="hbt intensity")
        boson, boson_err, norm_err = self._normalize(sums, config.ensemble_size)

        common = dict(scan=config.scan, seed=config.seed, ensemble_size=config.ensemble_size)
        return {
            Statistics.BOSON: CorrelationMap(values=boson, kind=Statistics.BOSON, stderr=boson_err, **common),
            Statistics.CLASSICAL: CorrelationMap(values=np.ones(n_scan), kind=Statistics.CLASSICAL,
                                                 stderr=norm_err, **common),
        }

    def ghost_image(self, config: GhostConfig, runner: EnsembleRunner) -> Dict[Statistics, GhostImage]:
        config.geometry.require_balanced()
        support = config.mask.require_support()
        bucket_weights = config.mask.intensity_weights
        positions, weights = emitter_lattice(config.source)
        wavelength = config.geometry.wavelength
        reference = propagator_matrix(positions, config.reference_scan.coordinates(),
                                      config.geometry.dist_reference, wavelength)
        objects = propagator_matrix(positions, config.mask.grid.coordinates()[support],
                                    config.geometry.dist_object, wavelength)
        phasors = np.hstack([reference, objects])
        n_scan = config.reference_scan.size

        def work(start: int, stop: int):
            intensity = self._intensities(weights, phasors, config.seed, start, stop)
            bucket = ordered_weighted_sum(intensity[:, n_scan:], bucket_weights)[:, None]
            return accumulate_rows(intensity_moments(intensity[:, :n_scan], bucket))

        sums = runner.reduce(config.ensemble_size, REALIZATION_BLOCK, work, label="ghost intensity")
        boson, boson_err, norm_err = self._normalize(sums, config.ensemble_size)
        classical = np.ones(n_scan)

        common = dict(scan=config.reference_scan, baseline=1.0, seed=config.seed,
                      ensemble_size=config.ensemble_size)
        return {
            Statistics.BOSON: GhostImage(values=boson, kind=Statistics.BOSON, stderr=boson_err, **common),
            Statistics.CLASSICAL: GhostImage(values=classical, kind=Statistics.CLASSICAL, stderr=norm_err, **common),
            Statistics.FERMION: GhostImage(values=2.0 * classical - boson, kind=Statistics.FERMION,
                                           stderr=np.sqrt(4.0 * norm_err ** 2 + boson_err ** 2), **common),
        }

    @staticmethod
    def _intensities(weights: np.ndarray, phasors: np.ndarray, seed: int, start: int, stop: int) -> np.ndarray:
        amplitudes = np.stack([
            sample_amplitudes(weights, SeedSpec(seed, index), AmplitudeMode.GAUSSIAN_FIELD)
            for index in range(start, stop)
        ])
        fields = propagate_batch(amplitudes, phasors)
        return fields.real ** 2 + fields.imag ** 2

    @staticmethod
    def _normalize(sums, n: int):
        if not np.all(sums["i1"] > 0) or not np.all(sums["i2"] > 0):
            raise DegenerateEnsembleException("mean intensity vanished on at least one detector")
        return intensity_ratio(sums, n)
