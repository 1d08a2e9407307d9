from __future__ import annotations

from abc import ABC, abstractmethod
from enum import Enum
from typing import TYPE_CHECKING, Dict

from core.model import CorrelationMap, GhostImage, Statistics

if TYPE_CHECKING:
    from services.correlators import HbtScanConfig
    from services.ensemble import EnsembleRunner
    from services.ghost_imaging import GhostConfig


class EstimatorKind(str, Enum):
    INTENSITY = "intensity"
    AMPLITUDE_PAIR = "amplitude_pair"


class CorrelationEstimator(ABC):

    @abstractmethod
    def hbt_scan(self, config: HbtScanConfig, runner: EnsembleRunner) -> Dict[Statistics, CorrelationMap]:
        """
        Scans D1 over config.scan with D2 held at config.fixed_point.
        Returns one normalized g2 map per statistics kind the estimator measures.
        """
        pass

    @abstractmethod
    def ghost_image(self, config: GhostConfig, runner: EnsembleRunner) -> Dict[Statistics, GhostImage]:
        """
        Correlates the reference detector with the bucket behind the object.
        Returns one normalized image per statistics kind.
        """
        pass

    @property
    @abstractmethod
    def name(self) -> EstimatorKind:
        """
        Returns the estimator name.
        """
        pass
