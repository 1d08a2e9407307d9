"""
Monte Carlo ghost imaging: a scanning reference detector D1 correlated with an
ideal bucket detector that collects every particle transmitted by the object.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from core.model import ComplexField, DetectorGrid, Geometry, GhostImage, SourceSpec, Statistics, TransmissionMask
from estimators.utils import ordered_weighted_sum
from exceptions.exceptions import ShapeMismatchException, ValidationException
from interfaces.interfaces import EstimatorKind
from services.correlation_analyzer import CorrelationAnalyzer
from services.ensemble import EnsembleRunner

logger = logging.getLogger(__name__)

MIN_GHOST_REALIZATIONS = 500
MIN_GHOST_PAIRS = 10_000
BACKGROUND_FRACTION = 0.2
DEFAULT_REFERENCE_PITCH = 0.125e-3


@dataclass(frozen=True)
class GhostConfig:
    source: SourceSpec
    geometry: Geometry
    mask: TransmissionMask
    reference_scan: DetectorGrid
    ensemble_size: int
    seed: int
    estimator: EstimatorKind = EstimatorKind.INTENSITY

    def __post_init__(self):
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        minimum = MIN_GHOST_REALIZATIONS if self.estimator is EstimatorKind.INTENSITY else MIN_GHOST_PAIRS
        if int(self.ensemble_size) < minimum:
            raise ValidationException(
                f"the {self.estimator.value} estimator needs at least {minimum} samples, got {self.ensemble_size}",
                field="ensemble_size",
            )


@dataclass(frozen=True)
class BucketSample:
    value: float


@dataclass(frozen=True)
class SnrEstimate:
    value: float
    excursion: float
    background_std: float
    degenerate: bool = False


def bucket_signal(object_field: ComplexField, mask: TransmissionMask) -> BucketSample:
    """B = sum |field|^2 |T|^2 d(rho2), in grid order."""
    if object_field.grid != mask.grid:
        raise ShapeMismatchException("the object field and the mask must share one grid")
    support = mask.support
    if support.size == 0:
        return BucketSample(value=0.0)
    intensity = object_field.intensity[support]
    value = ordered_weighted_sum(intensity[None, :], mask.intensity_weights)[0]
    return BucketSample(value=float(value))


def run_ghost_imaging(config: GhostConfig,
                      runner: Optional[EnsembleRunner] = None) -> Dict[Statistics, GhostImage]:
    with CorrelationAnalyzer(runner=runner) as analyzer:
        return analyzer.ghost_image(config)


def background_region(grid: DetectorGrid, fraction: float = BACKGROUND_FRACTION) -> np.ndarray:
    """Samples in the outer `fraction` ring of the scan, as a flat boolean array."""
    offsets = grid.centered_offsets()
    half_x, half_y = grid.half_extent
    reach = np.abs(offsets[:, 0]) / half_x if half_x > 0 else np.zeros(grid.size)
    if half_y > 0:
        reach = np.maximum(reach, np.abs(offsets[:, 1]) / half_y)
    return reach > 1.0 - fraction


def snr_estimate(image: GhostImage, background: Optional[np.ndarray] = None) -> SnrEstimate:
    """|largest excursion from the background mean| / background standard deviation."""
    if image.scan.size < 10:
        raise ValidationException(f"need at least 10 scan points, got {image.scan.size}", field="scan")
    background = background_region(image.scan) if background is None else np.asarray(background, dtype=bool)
    if background.sum() < 2 or background.all():
        raise ValidationException("the background region must hold at least two points and leave signal",
                                  field="background")

    level = float(np.mean(image.values[background]))
    spread = float(np.std(image.values[background], ddof=1))
    excursion = float(np.max(np.abs(image.values[~background] - level)))
    if excursion == 0.0:
        return SnrEstimate(value=0.0, excursion=0.0, background_std=spread)
    if spread == 0.0:
        logger.warning("Background of the %s image has zero variance", image.kind.value)
        return SnrEstimate(value=math.inf, excursion=excursion, background_std=0.0, degenerate=True)
    return SnrEstimate(value=excursion / spread, excursion=excursion, background_std=spread)
