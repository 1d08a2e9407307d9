"""
Closed-form correlation kernels and their quadrature over an object mask.

J1 is evaluated by its power series for |x| <= 12 and by the Hankel
asymptotic expansion beyond. The series is truncated after 40 terms: for
|x| <= 12 the 40th term is below 1e-30 of the leading one. The asymptotic
series is summed through its 24th term, the smallest term at the crossover.
The remaining truncation error there is about 1e-12 absolute, and it bounds
the mismatch between the two branches.
Odd symmetry is exact: J1(-x) is computed as -J1(|x|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from core.model import DetectorGrid, GhostImage, Statistics, TransmissionMask
from exceptions.exceptions import DomainException, ValidationException

SERIES_LIMIT = 12.0
SERIES_TERMS = 40
ASYMPTOTIC_TERMS = 24
SOMB_TAYLOR_LIMIT = 1e-4
SCAN_BLOCK = 2048


class Dimensionality(str, Enum):
    ONE_D = "one_d"
    TWO_D = "two_d"


@dataclass(frozen=True)
class KernelParams:
    source_extent: float
    wavelength: float
    distance: float
    dimensionality: Dimensionality = Dimensionality.TWO_D

    def __post_init__(self):
        for name in ("source_extent", "wavelength", "distance"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise ValidationException(f"must be positive and finite, got {value!r}", field=name)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "dimensionality", Dimensionality(self.dimensionality))

    @property
    def coherence_scale(self) -> float:
        """lambda l / d: the first sinc zero of the one-dimensional kernel."""
        return self.wavelength * self.distance / self.source_extent

    def argument(self, delta: np.ndarray) -> np.ndarray:
        return (math.pi * self.source_extent / (self.wavelength * self.distance)) * np.abs(delta)


def _finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainException("special functions need finite arguments")
    return x


def _j1_series(x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    q = half * half
    term = half.copy()
    total = half.copy()
    for k in range(SERIES_TERMS - 1):
        term = -term * q / ((k + 1) * (k + 2))
        total = total + term
    return total


def _j1_asymptotic(x: np.ndarray) -> np.ndarray:
    mu = 4.0
    p = np.ones_like(x)
    q = np.zeros_like(x)
    coefficient = 1.0
    power = np.ones_like(x)
    for k in range(1, ASYMPTOTIC_TERMS):
        coefficient *= (mu - (2 * k - 1) ** 2) / (8.0 * k)
        power = power / x
        term = coefficient * power
        if k % 2 == 0:
            p = p + (-1) ** (k // 2) * term
        else:
            q = q + (-1) ** ((k - 1) // 2) * term
    chi = x - 0.75 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def _scalar_or_array(values: np.ndarray, shape):
    values = values.reshape(shape)
    return values if values.ndim else float(values)


def bessel_j1(x):
    x = _finite(x)
    shape = x.shape
    ax = np.abs(x).ravel()
    result = np.empty_like(ax)
    small = ax <= SERIES_LIMIT
    result[small] = _j1_series(ax[small])
    result[~small] = _j1_asymptotic(ax[~small])
    result = np.where(x.ravel() < 0, -result, result)
    return _scalar_or_array(result, shape)


def somb(x):
    """2 J1(x) / x, with somb(0) = 1 exactly."""
    x = _finite(x)
    shape = x.shape
    ax = np.abs(x).ravel()
    taylor = ax <= SOMB_TAYLOR_LIMIT
    x2 = ax[taylor] ** 2
    result = np.empty_like(ax)
    result[taylor] = 1.0 - x2 / 8.0 + x2 * x2 / 192.0
    wide = ax[~taylor]
    result[~taylor] = 2.0 * _j1_values(wide) / wide
    return _scalar_or_array(result, shape)


def _j1_values(ax: np.ndarray) -> np.ndarray:
    return np.asarray(bessel_j1(ax), dtype=float).reshape(ax.shape)


def sinc(u):
    """sin(u) / u with sinc(0) = 1; the argument is used as given, not multiplied by pi."""
    u = _finite(u)
    safe = np.where(u == 0.0, 1.0, u)
    result = np.where(u == 0.0, 1.0, np.sin(safe) / safe)
    return result if result.ndim else float(result)


def correlation_kernel(delta, params: KernelParams):
    """K(u): somb^2 for two-dimensional sources, sinc^2 for one-dimensional ones."""
    u = params.argument(_finite(delta))
    if params.dimensionality is Dimensionality.TWO_D:
        return np.asarray(somb(u)) ** 2
    return np.asarray(sinc(u)) ** 2


def g2_analytic(delta, kind: Statistics, params: KernelParams):
    kind = Statistics(kind)
    kernel = correlation_kernel(delta, params)
    if kind is Statistics.FERMION:
        result = 1.0 - kernel
    elif kind is Statistics.BOSON:
        result = 1.0 + kernel
    else:
        result = np.ones_like(kernel)
    return result if np.ndim(result) else float(result)


def point_to_spot_profile(params: KernelParams, kind: Statistics, offsets) -> np.ndarray:
    """g2 as a function of the image-object offset x_I - x_O."""
    return np.asarray(g2_analytic(np.asarray(offsets, dtype=float), kind, params))


def _half_excursion_root(dimensionality: Dimensionality) -> float:
    if dimensionality is Dimensionality.TWO_D:
        return brentq(lambda u: float(somb(u)) ** 2 - 0.5, 1.0, 2.5, xtol=1e-13)
    return brentq(lambda u: float(sinc(u)) ** 2 - 0.5, 1.0, 2.0, xtol=1e-13)


def point_to_spot_fwhm(params: KernelParams, kind: Statistics = Statistics.FERMION) -> float:
    """Full width at half excursion of the bunching peak / antibunching dip."""
    if Statistics(kind) is Statistics.CLASSICAL:
        raise DomainException("classical particles have a flat g2: there is no spot to measure")
    u_half = _half_excursion_root(params.dimensionality)
    return 2.0 * u_half * params.wavelength * params.distance / (math.pi * params.source_extent)


def _pair_distances(scan: np.ndarray, points: np.ndarray, dimensionality: Dimensionality) -> np.ndarray:
    dx = scan[:, None, 0] - points[None, :, 0]
    if dimensionality is Dimensionality.ONE_D:
        return np.abs(dx)
    dy = scan[:, None, 1] - points[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)


def ghost_image_analytic(mask: TransmissionMask, kind: Statistics, params: KernelParams,
                         scan: DetectorGrid) -> GhostImage:
    """
    Midpoint quadrature of g2(|rho1 - rho2|) |T(rho2)|^2 over the mask samples.
    The classical image is flat and equals the |T|^2 integral; it doubles as the
    baseline of all three images.
    """
    kind = Statistics(kind)
    support = mask.require_support()
    points = mask.grid.coordinates()[support]
    weights = mask.intensity_weights
    classical = float(np.sum(weights))

    if kind is Statistics.CLASSICAL:
        return GhostImage(scan=scan, values=np.full(scan.size, classical), kind=kind, baseline=classical)

    positions = scan.coordinates()
    blurred = np.empty(scan.size)
    for start in range(0, scan.size, SCAN_BLOCK):
        block = positions[start:start + SCAN_BLOCK]
        kernel = correlation_kernel(_pair_distances(block, points, params.dimensionality), params)
        blurred[start:start + SCAN_BLOCK] = kernel @ weights

    values = classical - blurred if kind is Statistics.FERMION else classical + blurred
    return GhostImage(scan=scan, values=values, kind=kind, baseline=classical)


def ghost_image_delta_limit(mask: TransmissionMask) -> GhostImage:
    """
    c1 - |T(rho1)|^2 on the mask grid, c1 being the support area. The two terms
    carry different units (m^2 and dimensionless); only the shape is physical.
    """
    support = mask.require_support()
    c1 = support.size * mask.grid.cell_area
    return GhostImage(scan=mask.grid, values=c1 - mask.values ** 2, kind=Statistics.FERMION, baseline=c1)
