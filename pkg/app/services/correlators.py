"""
Normalized second-order coherence for thermal bosons, fermions and classical
particles, by two independent estimators:

* intensity: speckle intensities at D1 and D2, g2 = <I1 I2> / (<I1><I2>).
  Measures bosons directly; classical particles are the normalization
  (g2 = 1), and fermions follow from fermion = 2 classical - boson.
* amplitude_pair: two emitters per draw and the explicit exchange sum
  |A_a1 A_b2 -+ A_a2 A_b1|^2, normalized by the classical coincidences.

Every map is normalized by the classical (independent-particle) coincidence
rate, so classical maps are identically 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from core.model import AmplitudePair, CorrelationMap, DetectorGrid, Geometry, SourceSpec, Statistics
from estimators.utils import pair_g2
from exceptions.exceptions import DomainException, ShapeMismatchException, ValidationException
from interfaces.interfaces import EstimatorKind
from services.correlation_analyzer import CorrelationAnalyzer
from services.ensemble import EnsembleRunner

logger = logging.getLogger(__name__)

MIN_INTENSITY_REALIZATIONS = 100
MIN_AMPLITUDE_PAIRS = 1000


@dataclass(frozen=True)
class HbtScanConfig:
    source: SourceSpec
    geometry: Geometry
    fixed_point: Tuple[float, float]
    scan: DetectorGrid
    ensemble_size: int
    seed: int
    estimator: EstimatorKind = EstimatorKind.INTENSITY

    def __post_init__(self):
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        object.__setattr__(self, "fixed_point", tuple(float(v) for v in self.fixed_point))
        minimum = (MIN_INTENSITY_REALIZATIONS if self.estimator is EstimatorKind.INTENSITY
                   else MIN_AMPLITUDE_PAIRS)
        if int(self.ensemble_size) < minimum:
            raise ValidationException(
                f"the {self.estimator.value} estimator needs at least {minimum} samples, got {self.ensemble_size}",
                field="ensemble_size",
            )


def g2_from_amplitude_pair(pair: AmplitudePair, kind: Statistics) -> float:
    fermion, boson, classical = pair_g2(pair.a1, pair.a2, pair.b1, pair.b2)
    return float({Statistics.FERMION: fermion, Statistics.BOSON: boson,
                  Statistics.CLASSICAL: classical}[Statistics(kind)])


def _scan(config: HbtScanConfig, expected: EstimatorKind,
          runner: Optional[EnsembleRunner]) -> Dict[Statistics, CorrelationMap]:
    if config.estimator is not expected:
        raise DomainException(f"configuration selects the {config.estimator.value} estimator, not {expected.value}")
    with CorrelationAnalyzer(runner=runner) as analyzer:
        return analyzer.hbt_scan(config)


def hbt_scan_amplitude_pair(config: HbtScanConfig,
                            runner: Optional[EnsembleRunner] = None) -> Dict[Statistics, CorrelationMap]:
    return _scan(config, EstimatorKind.AMPLITUDE_PAIR, runner)


def hbt_scan_intensity(config: HbtScanConfig,
                       runner: Optional[EnsembleRunner] = None) -> Dict[Statistics, CorrelationMap]:
    return _scan(config, EstimatorKind.INTENSITY, runner)


def synthesize_fermion(boson: CorrelationMap, classical: CorrelationMap) -> CorrelationMap:
    """fermion = 2 classical - boson, stderr combined in quadrature."""
    if boson.kind is not Statistics.BOSON or classical.kind is not Statistics.CLASSICAL:
        raise ShapeMismatchException(
            f"expected boson and classical maps, got {boson.kind.value} and {classical.kind.value}"
        )
    if boson.scan != classical.scan:
        raise ShapeMismatchException("boson and classical maps must share one scan grid")
    return CorrelationMap(
        scan=boson.scan,
        values=2.0 * classical.values - boson.values,
        kind=Statistics.FERMION,
        stderr=np.sqrt(4.0 * classical.stderr ** 2 + boson.stderr ** 2),
        seed=boson.seed,
        ensemble_size=boson.ensemble_size,
    )
