from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Dict, Tuple

import numpy as np

from core.model import CorrelationMap, GhostImage, Statistics
from estimators.utils import ordered_weighted_sum, pair_g2, pair_moments, pair_ratio, squared_modulus
from interfaces.interfaces import CorrelationEstimator, EstimatorKind
from services.ensemble import EnsembleRunner, accumulate_rows
from services.propagation import propagator_matrix
from services.speckle_source import derive_seed, emitter_lattice

if TYPE_CHECKING:
    from services.correlators import HbtScanConfig
    from services.ghost_imaging import GhostConfig

logger = logging.getLogger(__name__)

PAIR_BLOCK = 1000
# Pair blocks draw from a separate range of stream indices so they never share
# a stream with the speckle realizations of the same master seed.
PAIR_STREAM = 1 << 62


class PairDraw:
    """Two independent emitters per draw, each with a uniform random phase."""

    def __init__(self, weights: np.ndarray, seed: int, block: int, count: int):
        rng = np.random.default_rng(derive_seed(seed, PAIR_STREAM + block))
        self.a = rng.integers(0, weights.size, count)
        self.b = rng.integers(0, weights.size, count)
        phases = rng.uniform(0.0, 2.0 * np.pi, (2, count))
        self.amp_a = np.sqrt(weights[self.a]) * np.exp(1j * phases[0])
        self.amp_b = np.sqrt(weights[self.b]) * np.exp(1j * phases[1])

    def amplitudes(self, phasors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """A_{a j} and A_{b j} for every detector point j in the phasor matrix columns."""
        return self.amp_a[:, None] * phasors[self.a], self.amp_b[:, None] * phasors[self.b]


class AmplitudePairEstimator(CorrelationEstimator):
    """
    Samples the two-particle alternatives directly: particle a to D1 and b to
    D2, or a to D2 and b to D1, added with a minus sign for fermions, a plus
    sign for bosons, and as probabilities for classical particles.
    """

    @property
    def name(self) -> EstimatorKind:
        return EstimatorKind.AMPLITUDE_PAIR

    def hbt_scan(self, config: HbtScanConfig, runner: EnsembleRunner) -> Dict[Statistics, CorrelationMap]:
        config.geometry.require_balanced()
        positions, weights = emitter_lattice(config.source)
        wavelength = config.geometry.wavelength
        reference = propagator_matrix(positions, config.scan.coordinates(), config.geometry.dist_reference, wavelength)
        fixed = propagator_matrix(positions, np.array([config.fixed_point]), config.geometry.dist_object, wavelength)

        def work(start: int, stop: int):
            draw = PairDraw(weights, config.seed, start // PAIR_BLOCK, stop - start)
            a1, b1 = draw.amplitudes(reference)
            a2, b2 = draw.amplitudes(fixed)
            return accumulate_rows(pair_moments(*pair_g2(a1, a2, b1, b2)))

        sums = runner.reduce(config.ensemble_size, PAIR_BLOCK, work, label="hbt amplitude pairs")
        n = config.ensemble_size
        common = dict(scan=config.scan, seed=config.seed, ensemble_size=n)
        maps = {Statistics.CLASSICAL: CorrelationMap(values=np.ones(config.scan.size),
                                                     kind=Statistics.CLASSICAL, **common)}
        for kind in (Statistics.FERMION, Statistics.BOSON):
            values, stderr = pair_ratio(sums, n, kind.value)
            maps[kind] = CorrelationMap(values=values, kind=kind, stderr=stderr, **common)
        return maps

    def ghost_image(self, config: GhostConfig, runner: EnsembleRunner) -> Dict[Statistics, GhostImage]:
        """
        The coincidence probabilities are integrated over the object plane
        in expanded form: with c = |A_a1|^2 sum_2 w |A_b2|^2 + |A_b1|^2 sum_2 w |A_a2|^2
        and x = 2 Re(A_a1 conj(A_b1) sum_2 w A_b2 conj(A_a2)), the bosonic sum is
        c + x and the fermionic one c - x (w = |T|^2 d(rho2)).
        """
        config.geometry.require_balanced()
        support = config.mask.require_support()
        bucket_weights = config.mask.intensity_weights
        positions, weights = emitter_lattice(config.source)
        wavelength = config.geometry.wavelength
        reference = propagator_matrix(positions, config.reference_scan.coordinates(),
                                      config.geometry.dist_reference, wavelength)
        objects = propagator_matrix(positions, config.mask.grid.coordinates()[support],
                                    config.geometry.dist_object, wavelength)

        def work(start: int, stop: int):
            draw = PairDraw(weights, config.seed, start // PAIR_BLOCK, stop - start)
            a1, b1 = draw.amplitudes(reference)
            a2, b2 = draw.amplitudes(objects)
            fermion, boson, classical = integrated_pair_g2(a1, a2, b1, b2, bucket_weights)
            return accumulate_rows(pair_moments(fermion, boson, classical))

        sums = runner.reduce(config.ensemble_size, PAIR_BLOCK, work, label="ghost amplitude pairs")
        n = config.ensemble_size
        common = dict(scan=config.reference_scan, baseline=1.0, seed=config.seed, ensemble_size=n)
        images = {Statistics.CLASSICAL: GhostImage(values=np.ones(config.reference_scan.size),
                                                   kind=Statistics.CLASSICAL, **common)}
        for kind in (Statistics.FERMION, Statistics.BOSON):
            values, stderr = pair_ratio(sums, n, kind.value)
            images[kind] = GhostImage(values=values, kind=kind, stderr=stderr, **common)
        return images


def integrated_pair_g2(a1: np.ndarray, a2: np.ndarray, b1: np.ndarray, b2: np.ndarray,
                       weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    sum over object samples of the (fermion, boson, classical) pair
    probabilities, weighted by `weights`. a1, b1: (P, M) at D1; a2, b2: (P, S)
    on the object support. Returns three (P, M) arrays.
    """
    to_a = ordered_weighted_sum(squared_modulus(a2), weights)
    to_b = ordered_weighted_sum(squared_modulus(b2), weights)
    overlap = ordered_weighted_sum(b2 * np.conj(a2), weights)
    classical = squared_modulus(a1) * to_b[:, None] + squared_modulus(b1) * to_a[:, None]
    interference = 2.0 * (a1 * np.conj(b1) * overlap[:, None]).real
    return classical - interference, classical + interference, classical
