"""
Paraxial (Fresnel) propagation by direct quadrature over emitters.

The propagator from a source point to a detector point is the unit phasor
exp(i pi |rho_det - rho_src|^2 / (lambda l)). The constant 1/(i lambda l) exp(ikl)
prefactor is dropped: every reported quantity is a normalized g2 where it cancels.

Fields are accumulated over emitters in emitter-index order with Kahan
compensation, so a given (realization, plan) always yields the same bits no
matter how many workers share the surrounding ensemble.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from core.model import ComplexField, DetectorGrid, Geometry
from exceptions.exceptions import DomainException
from services.speckle_source import SourceRealization

logger = logging.getLogger(__name__)

PARAXIAL_LIMIT = 0.1


class PlanTarget(str, Enum):
    TO_REFERENCE = "to_reference"
    TO_OBJECT = "to_object"


@dataclass(frozen=True)
class PropagationPlan:
    geometry: Geometry
    which: PlanTarget
    target: DetectorGrid

    def __post_init__(self):
        object.__setattr__(self, "which", PlanTarget(self.which))

    @property
    def distance(self) -> float:
        if self.which is PlanTarget.TO_REFERENCE:
            return self.geometry.dist_reference
        return self.geometry.dist_object


def _check_lengths(distance: float, wavelength: float) -> None:
    for name, value in (("distance", distance), ("wavelength", wavelength)):
        if not math.isfinite(value) or value <= 0:
            raise DomainException(f"{name} must be positive and finite, got {value!r}")


def propagator_amplitude(source_pt, det_pt, distance: float, wavelength: float) -> complex:
    _check_lengths(distance, wavelength)
    dx = float(det_pt[0]) - float(source_pt[0])
    dy = float(det_pt[1]) - float(source_pt[1])
    r2 = dx * dx + dy * dy
    if r2 > (PARAXIAL_LIMIT * distance) ** 2:
        logger.warning("Transverse offset %.3g m exceeds %.1f x distance; paraxial form is inaccurate",
                       math.sqrt(r2), PARAXIAL_LIMIT)
    phase = math.pi * r2 / (wavelength * distance)
    return complex(math.cos(phase), math.sin(phase))


def propagator_matrix(sources: np.ndarray, targets: np.ndarray, distance: float, wavelength: float) -> np.ndarray:
    """(N_sources, N_targets) matrix of propagator phasors."""
    _check_lengths(distance, wavelength)
    sources = np.atleast_2d(sources)
    targets = np.atleast_2d(targets)
    dx = targets[None, :, 0] - sources[:, None, 0]
    dy = targets[None, :, 1] - sources[:, None, 1]
    r2 = dx * dx + dy * dy
    if r2.size and r2.max() > (PARAXIAL_LIMIT * distance) ** 2:
        logger.warning("Largest transverse offset %.3g m exceeds %.1f x distance; paraxial form is inaccurate",
                       math.sqrt(r2.max()), PARAXIAL_LIMIT)
    phase = (math.pi / (wavelength * distance)) * r2
    return np.cos(phase) + 1j * np.sin(phase)


def propagate_batch(amplitudes: np.ndarray, phasors: np.ndarray) -> np.ndarray:
    """
    Fields for a batch of realizations sharing emitter positions.

    amplitudes: (R, N) emitter amplitudes; phasors: (N, M) propagator matrix.
    Returns (R, M). Emitters are summed in index order with Kahan compensation.
    """
    amplitudes = np.atleast_2d(amplitudes)
    if amplitudes.shape[1] == 0:
        raise DomainException("cannot propagate an empty realization")
    total = np.zeros((amplitudes.shape[0], phasors.shape[1]), dtype=complex)
    carry = np.zeros_like(total)
    for s in range(amplitudes.shape[1]):
        term = amplitudes[:, s, None] * phasors[s][None, :] - carry
        updated = total + term
        carry = (updated - total) - term
        total = updated
    return total


def propagate(realization: SourceRealization, plan: PropagationPlan) -> ComplexField:
    if realization.amplitudes.size == 0:
        raise DomainException("cannot propagate an empty realization")
    phasors = propagator_matrix(realization.positions, plan.target.coordinates(),
                                plan.distance, plan.geometry.wavelength)
    values = propagate_batch(realization.amplitudes[None, :], phasors)[0]
    return ComplexField(grid=plan.target, values=values)
