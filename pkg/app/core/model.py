"""
Shared domain types for the ghost imaging simulator.

All lengths are SI meters. Every type is an immutable value: arrays are
copied on construction and flagged read-only, so instances can be handed
to worker threads without synchronization.

Sampled 2D quantities are stored flat in row-major grid order, the sample
(i, j) living at index j * nx + i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from exceptions.exceptions import ConfigurationException, DomainException, ValidationException

BALANCE_TOLERANCE = 1e-12
MIN_EMITTERS_ACROSS = 8


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


def _require_positive(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValidationException(f"must be positive and finite, got {value!r}", field=name)
    return value


class Statistics(str, Enum):
    BOSON = "boson"
    FERMION = "fermion"
    CLASSICAL = "classical"


class SourceShape(str, Enum):
    DISK = "disk"
    RECTANGLE = "rectangle"
    BITMAP = "bitmap"


@dataclass(frozen=True)
class Geometry:
    wavelength: float
    dist_reference: float
    dist_object: float

    def __post_init__(self):
        for name in ("wavelength", "dist_reference", "dist_object"):
            object.__setattr__(self, name, _require_positive(getattr(self, name), name))

    @property
    def balanced(self) -> bool:
        return abs(self.dist_reference - self.dist_object) / self.dist_reference < BALANCE_TOLERANCE

    def require_balanced(self) -> None:
        if not self.balanced:
            raise DomainException(
                "the correlation kernels only hold in the imaging condition l1 = l2, "
                f"got dist_reference={self.dist_reference!r} and dist_object={self.dist_object!r}"
            )


@dataclass(frozen=True)
class DetectorGrid:
    origin: Tuple[float, float]
    pitch: float
    counts: Tuple[int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        if len(origin) != 2 or not all(math.isfinite(v) for v in origin):
            raise ValidationException(f"must be a finite 2-vector, got {self.origin!r}", field="origin")
        nx, ny = (int(c) for c in self.counts)
        if nx < 1 or ny < 1:
            raise ValidationException(f"must be positive, got {self.counts!r}", field="counts")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "counts", (nx, ny))
        object.__setattr__(self, "pitch", _require_positive(self.pitch, "pitch"))

    @classmethod
    def centered(cls, pitch: float, nx: int, ny: int = 1,
                 center: Tuple[float, float] = (0.0, 0.0)) -> "DetectorGrid":
        """Grid whose middle sample (or midpoint between the two middle samples) sits on `center`."""
        origin = (center[0] - 0.5 * (nx - 1) * pitch, center[1] - 0.5 * (ny - 1) * pitch)
        return cls(origin=origin, pitch=pitch, counts=(nx, ny))

    @property
    def nx(self) -> int:
        return self.counts[0]

    @property
    def ny(self) -> int:
        return self.counts[1]

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def is_1d(self) -> bool:
        return self.ny == 1

    @property
    def cell_area(self) -> float:
        """Quadrature weight of one sample: pitch for 1D grids, pitch squared otherwise."""
        return self.pitch if self.is_1d else self.pitch * self.pitch

    @property
    def x_axis(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.nx) * self.pitch

    @property
    def y_axis(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny) * self.pitch

    def coordinate(self, i: int, j: int) -> Tuple[float, float]:
        return (self.origin[0] + i * self.pitch, self.origin[1] + j * self.pitch)

    def coordinates(self) -> np.ndarray:
        """(nx*ny, 2) array of sample positions in row-major order."""
        xs, ys = np.meshgrid(self.x_axis, self.y_axis)
        return np.column_stack([xs.ravel(), ys.ravel()])

    def centered_offsets(self) -> np.ndarray:
        """Sample offsets from the grid center, exactly antisymmetric about it."""
        i = np.arange(self.nx) - 0.5 * (self.nx - 1)
        j = np.arange(self.ny) - 0.5 * (self.ny - 1)
        xs, ys = np.meshgrid(i * self.pitch, j * self.pitch)
        return np.column_stack([xs.ravel(), ys.ravel()])

    @property
    def center(self) -> Tuple[float, float]:
        return (self.origin[0] + 0.5 * (self.nx - 1) * self.pitch,
                self.origin[1] + 0.5 * (self.ny - 1) * self.pitch)

    @property
    def half_extent(self) -> Tuple[float, float]:
        return (0.5 * (self.nx - 1) * self.pitch, 0.5 * (self.ny - 1) * self.pitch)


@dataclass(frozen=True)
class SourceSpec:
    shape: SourceShape
    emitter_pitch: float
    diameter: Optional[float] = None
    width: Optional[float] = None
    height: Optional[float] = None
    bitmap: Optional[np.ndarray] = field(default=None, compare=False)
    bitmap_key: Optional[bytes] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", SourceShape(self.shape))
        object.__setattr__(self, "emitter_pitch", _require_positive(self.emitter_pitch, "emitter_pitch"))

        if self.shape is SourceShape.DISK:
            object.__setattr__(self, "diameter", _require_positive(self.diameter or 0.0, "diameter"))
        elif self.shape is SourceShape.RECTANGLE:
            object.__setattr__(self, "width", _require_positive(self.width or 0.0, "width"))
            object.__setattr__(self, "height", _require_positive(self.height or 0.0, "height"))
        else:
            if self.bitmap is None:
                raise ValidationException("bitmap sources need sampled intensities", field="bitmap")
            bitmap = np.atleast_2d(np.asarray(self.bitmap, dtype=float))
            if not np.all(np.isfinite(bitmap)) or np.any(bitmap < 0):
                raise ValidationException("intensities must be finite and non-negative", field="bitmap")
            if not np.any(bitmap > 0):
                raise ValidationException("at least one intensity must be positive", field="bitmap")
            object.__setattr__(self, "bitmap", _frozen(bitmap))
            object.__setattr__(self, "bitmap_key", repr(bitmap.shape).encode() + bitmap.tobytes())

        across = self.smallest_dimension / self.emitter_pitch
        if across < MIN_EMITTERS_ACROSS * (1 - 1e-9):
            raise ConfigurationException(
                f"emitter pitch {self.emitter_pitch!r} m leaves {across:.2f} emitters across the "
                f"smallest source dimension; use a pitch of at most "
                f"{self.smallest_dimension / MIN_EMITTERS_ACROSS!r} m",
                key="source.emitter_pitch",
            )

    @classmethod
    def disk(cls, diameter: float, emitter_pitch: float) -> "SourceSpec":
        return cls(shape=SourceShape.DISK, emitter_pitch=emitter_pitch, diameter=diameter)

    @classmethod
    def rectangle(cls, width: float, height: float, emitter_pitch: float) -> "SourceSpec":
        return cls(shape=SourceShape.RECTANGLE, emitter_pitch=emitter_pitch, width=width, height=height)

    @classmethod
    def from_bitmap(cls, intensities: np.ndarray, emitter_pitch: float) -> "SourceSpec":
        """Bitmap rows run along y, columns along x, centred on the optical axis."""
        return cls(shape=SourceShape.BITMAP, emitter_pitch=emitter_pitch, bitmap=intensities)

    @classmethod
    def gaussian(cls, diameter: float, waist: float, emitter_pitch: float) -> "SourceSpec":
        """Disk of the given diameter with intensity exp(-2 r^2 / waist^2)."""
        diameter = _require_positive(diameter, "diameter")
        waist = _require_positive(waist, "waist")
        n = _cells_across(diameter, emitter_pitch)
        offsets = (np.arange(n) - 0.5 * (n - 1)) * emitter_pitch
        xs, ys = np.meshgrid(offsets, offsets)
        r2 = xs ** 2 + ys ** 2
        intensities = np.where(r2 < (0.5 * diameter) ** 2, np.exp(-2.0 * r2 / waist ** 2), 0.0)
        return cls.from_bitmap(intensities, emitter_pitch)

    @property
    def smallest_dimension(self) -> float:
        if self.shape is SourceShape.DISK:
            return self.diameter
        if self.shape is SourceShape.RECTANGLE:
            return min(self.width, self.height)
        ny, nx = self.bitmap.shape
        return min(nx, ny) * self.emitter_pitch

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Shape predicate for (N, 2) positions; bitmap sources test their positive cells."""
        points = np.atleast_2d(points)
        if self.shape is SourceShape.DISK:
            return points[:, 0] ** 2 + points[:, 1] ** 2 < (0.5 * self.diameter) ** 2
        if self.shape is SourceShape.RECTANGLE:
            return (np.abs(points[:, 0]) <= 0.5 * self.width) & (np.abs(points[:, 1]) <= 0.5 * self.height)
        ny, nx = self.bitmap.shape
        i = np.rint(points[:, 0] / self.emitter_pitch + 0.5 * (nx - 1)).astype(int)
        j = np.rint(points[:, 1] / self.emitter_pitch + 0.5 * (ny - 1)).astype(int)
        inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        result = np.zeros(len(points), dtype=bool)
        result[inside] = self.bitmap[j[inside], i[inside]] > 0
        return result


def _cells_across(extent: float, pitch: float) -> int:
    return max(1, math.ceil(extent / pitch - 1e-9))


@dataclass(frozen=True)
class TransmissionMask:
    grid: DetectorGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValidationException(
                f"expected {self.grid.size} samples for a {self.grid.nx}x{self.grid.ny} grid, got {values.size}",
                field="values",
            )
        bad = np.flatnonzero(~np.isfinite(values) | (values < 0) | (values > 1))
        if bad.size:
            raise ValidationException(
                f"transmission must lie in [0, 1], got {values[bad[0]]!r}", field="values", index=int(bad[0])
            )
        object.__setattr__(self, "values", _frozen(values))

    @property
    def support(self) -> np.ndarray:
        """Flat indices of the samples with non-zero transmission, in grid order."""
        return np.flatnonzero(self.values > 0)

    @property
    def intensity_weights(self) -> np.ndarray:
        """|T|^2 times the sample area, per support sample."""
        support = self.support
        return self.values[support] ** 2 * self.grid.cell_area

    def require_support(self) -> np.ndarray:
        support = self.support
        if support.size == 0:
            raise DomainException("the object mask is opaque everywhere (empty support)")
        return support

    def as_image(self) -> np.ndarray:
        return self.values.reshape(self.grid.ny, self.grid.nx)


@dataclass(frozen=True)
class ComplexField:
    grid: DetectorGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex).ravel()
        if values.size != self.grid.size:
            raise ValidationException(f"expected {self.grid.size} amplitudes, got {values.size}", field="values")
        if not np.all(np.isfinite(values)):
            raise DomainException("field amplitudes must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def intensity(self) -> np.ndarray:
        return self.values.real ** 2 + self.values.imag ** 2


@dataclass(frozen=True)
class AmplitudePair:
    """A_{alpha j}: amplitude for particle alpha in {a, b} to reach detector j in {1, 2}."""

    a1: complex
    a2: complex
    b1: complex
    b2: complex

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise DomainException(f"amplitude {name} is not finite: {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class CorrelationMap:
    scan: DetectorGrid
    values: np.ndarray
    kind: Statistics
    stderr: Optional[np.ndarray] = None
    seed: Optional[int] = None
    ensemble_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Statistics(self.kind))
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.scan.size:
            raise ValidationException(f"expected {self.scan.size} values, got {values.size}", field="values")
        stderr = np.zeros_like(values) if self.stderr is None else np.asarray(self.stderr, dtype=float).ravel()
        if stderr.size != values.size:
            raise ValidationException("stderr must match values", field="stderr")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "stderr", _frozen(stderr))


@dataclass(frozen=True)
class GhostImage:
    scan: DetectorGrid
    values: np.ndarray
    kind: Statistics
    baseline: float
    stderr: Optional[np.ndarray] = None
    seed: Optional[int] = None
    ensemble_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Statistics(self.kind))
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.scan.size:
            raise ValidationException(f"expected {self.scan.size} values, got {values.size}", field="values")
        if not np.all(np.isfinite(values)):
            raise DomainException("ghost image values must be finite")
        stderr = np.zeros_like(values) if self.stderr is None else np.asarray(self.stderr, dtype=float).ravel()
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "stderr", _frozen(stderr))
        object.__setattr__(self, "baseline", float(self.baseline))

    def as_image(self) -> np.ndarray:
        return self.values.reshape(self.scan.ny, self.scan.nx)


def make_double_pinhole_mask(grid: DetectorGrid, diameter: float, separation: float) -> TransmissionMask:
    """
    Two fully transmissive disks centred at (+-separation/2, 0) relative to the
    grid center. A sample belongs to a disk iff its center lies strictly inside.
    """
    diameter = _require_positive(diameter, "diameter")
    separation = float(separation)
    if not math.isfinite(separation) or separation < 0:
        raise ValidationException(f"must be non-negative, got {separation!r}", field="separation")

    radius = 0.5 * diameter
    need_x, need_y = 0.5 * separation + radius, radius
    half_x, half_y = grid.half_extent
    if half_x < need_x or (not grid.is_1d and half_y < need_y):
        raise ConfigurationException(
            f"grid half-extent ({half_x!r}, {half_y!r}) m cannot hold both pinholes; "
            f"it must reach at least ({need_x!r}, {need_y!r}) m from its center",
            key="mask",
        )

    offsets = grid.centered_offsets()
    y2 = offsets[:, 1] ** 2
    left = (offsets[:, 0] + 0.5 * separation) ** 2 + y2 < radius ** 2
    right = (offsets[:, 0] - 0.5 * separation) ** 2 + y2 < radius ** 2
    return TransmissionMask(grid=grid, values=(left | right).astype(float))


def make_mask_from_bitmap(grid: DetectorGrid, samples: np.ndarray) -> TransmissionMask:
    return TransmissionMask(grid=grid, values=np.asarray(samples, dtype=float).ravel())
