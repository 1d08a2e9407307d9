from typing import Dict, Tuple

import numpy as np

from services.ensemble import Moments


def squared_modulus(z: np.ndarray) -> np.ndarray:
    return z.real * z.real + z.imag * z.imag


def pair_g2(a1, a2, b1, b2) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Two-particle coincidence probabilities for (fermion, boson, classical):
    |a1 b2 - a2 b1|^2, |a1 b2 + a2 b1|^2 and |a1 b2|^2 + |a2 b1|^2.
    Broadcasts over arrays.
    """
    direct = a1 * b2
    exchange = a2 * b1
    fermion = squared_modulus(direct - exchange)
    boson = squared_modulus(direct + exchange)
    classical = squared_modulus(direct) + squared_modulus(exchange)
    return fermion, boson, classical


def ordered_weighted_sum(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_s values[:, s] * weights[s], accumulated in column order."""
    total = np.zeros(values.shape[:-1], dtype=values.dtype)
    for s in range(values.shape[-1]):
        total = total + values[..., s] * weights[s]
    return total


def intensity_moments(i1: np.ndarray, i2: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Per-realization products needed for the normalized correlation
    <I1 I2> / (<I1><I2>) and its delta-method variance.
    i1: (R, M) reference intensities; i2: (R, 1) second-arm signal.
    """
    i2 = np.broadcast_to(i2, i1.shape)
    product = i1 * i2
    return {
        "i1": i1,
        "i2": i2,
        "i1i2": product,
        "i1_sq": i1 * i1,
        "i2_sq": i2 * i2,
        "i1i2_sq": product * product,
        "i1i2_i1": product * i1,
        "i1i2_i2": product * i2,
    }


def intensity_ratio(sums: Moments, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns (g2, g2_stderr, normalization_stderr). The stderr of
    g = m12 / (m1 m2) linearizes each sample to
    z = I1 I2 / (m1 m2) - g I1 / m1 - g I2 / m2.
    """
    m1 = sums["i1"] / n
    m2 = sums["i2"] / n
    m12 = sums["i1i2"] / n
    g2 = m12 / (m1 * m2)

    e11 = sums["i1_sq"] / n
    e22 = sums["i2_sq"] / n
    e1212 = sums["i1i2_sq"] / n
    e121 = sums["i1i2_i1"] / n
    e122 = sums["i1i2_i2"] / n

    ez2 = (e1212 / (m1 * m2) ** 2
           + g2 ** 2 * e11 / m1 ** 2
           + g2 ** 2 * e22 / m2 ** 2
           - 2 * g2 * e121 / (m1 ** 2 * m2)
           - 2 * g2 * e122 / (m1 * m2 ** 2)
           + 2 * g2 ** 2 * m12 / (m1 * m2))
    var_z = np.maximum(ez2 - g2 ** 2, 0.0) * n / max(n - 1, 1)

    var_norm = e11 / m1 ** 2 + e22 / m2 ** 2 + 2 * m12 / (m1 * m2) - 4.0
    var_norm = np.maximum(var_norm, 0.0) * n / max(n - 1, 1)
    return g2, np.sqrt(var_z / n), np.sqrt(var_norm / n)


def pair_moments(fermion: np.ndarray, boson: np.ndarray, classical: np.ndarray) -> Dict[str, np.ndarray]:
    return {
        "fermion": fermion,
        "boson": boson,
        "classical": classical,
        "fermion_sq": fermion * fermion,
        "boson_sq": boson * boson,
        "classical_sq": classical * classical,
        "fermion_classical": fermion * classical,
        "boson_classical": boson * classical,
    }


def pair_ratio(sums: Moments, n: int, key: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    <X> / <C> for X = fermion or boson coincidences, normalized by the
    classical ones, with the delta-method standard error.
    """
    mx = sums[key] / n
    mc = sums["classical"] / n
    ratio = mx / mc
    var_x = sums[f"{key}_sq"] / n - mx * mx
    var_c = sums["classical_sq"] / n - mc * mc
    cov = sums[f"{key}_classical"] / n - mx * mc
    var = (var_x - 2 * ratio * cov + ratio * ratio * var_c) / (mc * mc)
    var = np.maximum(var, 0.0) * n / max(n - 1, 1)
    return ratio, np.sqrt(var / n)
