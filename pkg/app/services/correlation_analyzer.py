from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Dict, Optional

from core.model import CorrelationMap, GhostImage, Statistics
from estimators.amplitude_pair import AmplitudePairEstimator
from estimators.intensity import IntensityEstimator
from exceptions.exceptions import ConfigurationException
from interfaces.interfaces import CorrelationEstimator, EstimatorKind
from services.ensemble import EnsembleRunner

if TYPE_CHECKING:
    from services.correlators import HbtScanConfig
    from services.ghost_imaging import GhostConfig

logger = logging.getLogger(__name__)


class CorrelationAnalyzer:
    """Estimator registry keyed by name, sharing one ensemble runner."""

    def __init__(
        self,
        intensity_estimator: Optional[CorrelationEstimator] = None,
        amplitude_pair_estimator: Optional[CorrelationEstimator] = None,
        runner: Optional[EnsembleRunner] = None,
    ):
        estimators = (intensity_estimator or IntensityEstimator(),
                      amplitude_pair_estimator or AmplitudePairEstimator())
        self._estimators: Dict[EstimatorKind, CorrelationEstimator] = {e.name: e for e in estimators}
        self._owns_runner = runner is None
        self._runner = runner or EnsembleRunner(max_workers=1)

    def estimator(self, kind: EstimatorKind) -> CorrelationEstimator:
        kind = EstimatorKind(kind)
        if kind not in self._estimators:
            raise ConfigurationException(f"Unsupported estimator: {kind.value}", key="estimator")
        return self._estimators[kind]

    def hbt_scan(self, config: HbtScanConfig) -> Dict[Statistics, CorrelationMap]:
        estimator = self.estimator(config.estimator)
        logger.info("HBT scan: %d points, %s estimator, %d samples",
                    config.scan.size, estimator.name.value, config.ensemble_size)
        return estimator.hbt_scan(config, self._runner)

    def ghost_image(self, config: GhostConfig) -> Dict[Statistics, GhostImage]:
        estimator = self.estimator(config.estimator)
        logger.info("Ghost imaging: %d reference points, %d object samples, %s estimator, %d samples",
                    config.reference_scan.size, config.mask.support.size, estimator.name.value,
                    config.ensemble_size)
        return estimator.ghost_image(config, self._runner)

    def close(self) -> None:
        if self._owns_runner:
            self._runner.shutdown()

    def __enter__(self) -> "CorrelationAnalyzer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
