"""
Seeded pseudothermal source realizations (the simulated rotating ground glass).

Seed derivation
---------------
Every random stream is keyed by ``derive_seed(master_seed, realization_index)``,
a SplitMix64-style avalanche over the 128-bit input, all arithmetic modulo 2**64::

    mix64(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27; z *= 0x94D049BB133111EB
               z ^= z >> 31
    h        = mix64(master_seed + 0x9E3779B97F4A7C15)
    seed     = mix64((h ^ realization_index) + 0x9E3779B97F4A7C15)

For a fixed master seed the map index -> seed is a bijection of 64-bit
integers, so distinct indices below 2**64 never collide. The derived seed feeds
``numpy.random.default_rng`` (PCG64), which is platform independent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Tuple

import numpy as np

from core.model import SourceShape, SourceSpec, _cells_across
from exceptions.exceptions import DomainException

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class AmplitudeMode(str, Enum):
    GAUSSIAN_FIELD = "gaussian_field"
    UNIT_PHASOR = "unit_phasor"


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    realization_index: int

    @property
    def derived(self) -> int:
        return derive_seed(self.master_seed, self.realization_index)


@dataclass(frozen=True)
class SourceRealization:
    positions: np.ndarray
    amplitudes: np.ndarray
    mode: AmplitudeMode

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float, copy=True).reshape(-1, 2)
        amplitudes = np.array(self.amplitudes, dtype=complex, copy=True).ravel()
        if positions.shape[0] != amplitudes.size:
            raise DomainException("one amplitude per emitter position is required")
        if not np.all(np.isfinite(amplitudes)):
            raise DomainException("source amplitudes must be finite")
        positions.setflags(write=False)
        amplitudes.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "mode", AmplitudeMode(self.mode))

    def __add__(self, other: "SourceRealization") -> "SourceRealization":
        if not np.array_equal(self.positions, other.positions):
            raise DomainException("realizations can only be added when they share emitter positions")
        return SourceRealization(self.positions, self.amplitudes + other.amplitudes, self.mode)


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, realization_index: int) -> int:
    h = _mix64((int(master_seed) + GOLDEN_GAMMA) & MASK64)
    return _mix64(((h ^ (int(realization_index) & MASK64)) + GOLDEN_GAMMA) & MASK64)


@lru_cache(maxsize=32)
def _lattice(source: SourceSpec) -> Tuple[np.ndarray, np.ndarray]:
    pitch = source.emitter_pitch
    if source.shape is SourceShape.BITMAP:
        ny, nx = source.bitmap.shape
        intensities = source.bitmap
    else:
        width = source.diameter if source.shape is SourceShape.DISK else source.width
        height = source.diameter if source.shape is SourceShape.DISK else source.height
        nx, ny = _cells_across(width, pitch), _cells_across(height, pitch)
        intensities = np.ones((ny, nx))

    xs, ys = np.meshgrid((np.arange(nx) - 0.5 * (nx - 1)) * pitch, (np.arange(ny) - 0.5 * (ny - 1)) * pitch)
    positions = np.column_stack([xs.ravel(), ys.ravel()])
    weights = intensities.ravel().astype(float)

    keep = source.contains(positions) & (weights > 0)
    positions, weights = positions[keep], weights[keep]
    positions.setflags(write=False)
    weights.setflags(write=False)
    logger.debug("Discretized %s source into %d emitters", source.shape.value, len(weights))
    return positions, weights


def emitter_lattice(source: SourceSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Emitter cell centres inside the source support and their emission intensities."""
    return _lattice(source)


def sample_amplitudes(weights: np.ndarray, seed: SeedSpec, mode: AmplitudeMode) -> np.ndarray:
    rng = np.random.default_rng(seed.derived)
    mode = AmplitudeMode(mode)
    if mode is AmplitudeMode.GAUSSIAN_FIELD:
        draws = rng.standard_normal((weights.size, 2))
        return np.sqrt(0.5 * weights) * (draws[:, 0] + 1j * draws[:, 1])
    phases = rng.uniform(0.0, 2.0 * np.pi, weights.size)
    return np.sqrt(weights) * np.exp(1j * phases)


def sample_realization(source: SourceSpec, seed: SeedSpec,
                       mode: AmplitudeMode = AmplitudeMode.GAUSSIAN_FIELD) -> SourceRealization:
    """
    Circular complex Gaussian amplitudes with variance equal to the local
    intensity (gaussian_field), or uniform-phase phasors of modulus
    sqrt(intensity) (unit_phasor).
    """
    positions, weights = emitter_lattice(source)
    return SourceRealization(positions=positions, amplitudes=sample_amplitudes(weights, seed, mode), mode=mode)
