"""
Least-squares fits of correlation profiles, plus the widths and separations
read off the fitted models.

Model families (sinc(u) = sin(u) / u):

* sinc2_dip / sinc2_peak: baseline -+ amplitude * sinc^2((x - center) / w),
  params (baseline, amplitude, center, w).
* gaussian_dips(n) / gaussian_peaks(n): baseline -+ sum_k amplitude_k *
  exp(-(x - center_k)^2 / (2 sigma_k^2)), params (baseline, then
  amplitude, center, sigma per component).

Fits minimize the sum of squared residuals with the Nelder-Mead simplex
(reflection 1, expansion 2, contraction 0.5, shrink 0.5) on data normalized
to unit x span and unit max |y|. The search restarts from its best vertex
until a restart stops improving the objective.

Auto-initialization, used when no `init` is given:

* baseline: median of ys (or the fixed baseline).
* sinc2: center at argmin (dips) or argmax (peaks); amplitude |extremum -
  baseline|; w from the half-excursion crossings around the extremum,
  w = crossing distance / (2 * 1.39156).
* gaussian: the n most prominent extrema (scipy.signal.find_peaks) in
  position order, widths from their half-prominence widths, sigma = width /
  2.35482. Missing components are spread evenly over the span.

param_stderr is the usual residual-variance estimate s^2 (J^T J)^-1 with J
the Jacobian of the residuals at the optimum (central differences, step
1e-5 of the parameter scale). It is approximate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq, minimize
from scipy.signal import find_peaks, peak_widths

from core.model import CorrelationMap, GhostImage
from exceptions.exceptions import DomainException, RangeException, ValidationException

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 10_000
MAX_RESTARTS = 5
X_TOLERANCE = 1e-12
F_TOLERANCE = 1e-12
JACOBIAN_STEP = 1e-5
GAUSSIAN_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))
SINC2_HALF = brentq(lambda u: math.sin(u) ** 2 / u ** 2 - 0.5, 1.0, 2.0, xtol=1e-12)


class ModelKind(str, Enum):
    SINC2_DIP = "sinc2_dip"
    SINC2_PEAK = "sinc2_peak"
    GAUSSIAN_DIPS = "gaussian_dips"
    GAUSSIAN_PEAKS = "gaussian_peaks"

    @property
    def is_sinc(self) -> bool:
        return self in (ModelKind.SINC2_DIP, ModelKind.SINC2_PEAK)

    @property
    def sign(self) -> float:
        return -1.0 if self in (ModelKind.SINC2_DIP, ModelKind.GAUSSIAN_DIPS) else 1.0


def parameter_count(kind: ModelKind, n_components: int = 1) -> int:
    return 4 if ModelKind(kind).is_sinc else 1 + 3 * n_components


def _sinc_squared(u: np.ndarray) -> np.ndarray:
    safe = np.where(u == 0.0, 1.0, u)
    return np.where(u == 0.0, 1.0, (np.sin(safe) / safe) ** 2)


def _evaluate(kind: ModelKind, params: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Model values for a raw parameter vector; amplitudes and widths enter by magnitude."""
    baseline = params[0]
    components = params[1:].reshape(-1, 3)
    total = np.zeros_like(xs)
    for amplitude, center, width in components:
        u = (xs - center) / abs(width)
        shape = _sinc_squared(u) if kind.is_sinc else np.exp(-0.5 * u * u)
        total = total + abs(amplitude) * shape
    return baseline + kind.sign * total


@dataclass(frozen=True)
class ProfileModel:
    kind: ModelKind
    params: np.ndarray
    n_components: int = 1

    def __post_init__(self):
        kind = ModelKind(self.kind)
        n = 1 if kind.is_sinc else int(self.n_components)
        params = np.array(self.params, dtype=float, copy=True)
        if n < 1 or params.shape != (parameter_count(kind, n),):
            raise ValidationException(
                f"{kind.value} with {n} component(s) takes {parameter_count(kind, max(n, 1))} parameters, "
                f"got {params.size}",
                field="params",
            )
        if not np.all(np.isfinite(params)):
            raise ValidationException("parameters must be finite", field="params")
        components = params[1:].reshape(-1, 3)
        if np.any(components[:, 0] < 0):
            raise ValidationException("amplitudes must be non-negative", field="params")
        if np.any(components[:, 2] <= 0):
            raise ValidationException("widths must be positive", field="params")
        params.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "n_components", n)
        object.__setattr__(self, "params", params)

    @property
    def baseline(self) -> float:
        return float(self.params[0])

    @property
    def amplitudes(self) -> np.ndarray:
        return self.params[1::3]

    @property
    def centers(self) -> np.ndarray:
        return self.params[2::3]

    @property
    def widths(self) -> np.ndarray:
        """w for sinc2 models, sigma for Gaussian ones."""
        return self.params[3::3]

    def evaluate(self, xs) -> np.ndarray:
        return _evaluate(self.kind, self.params, np.asarray(xs, dtype=float))


@dataclass(frozen=True)
class FitResult:
    model: ProfileModel
    residual_rms: float
    iterations: int
    converged: bool
    param_stderr: np.ndarray
    objective_trace: Tuple[float, ...] = ()
    degenerate: bool = False
    fixed_baseline: Optional[float] = None


@dataclass
class _Normalization:
    x_offset: float
    x_scale: float
    y_scale: float

    def to_unit(self, params: np.ndarray) -> np.ndarray:
        unit = np.array(params, dtype=float)
        unit[0] /= self.y_scale
        unit[1::3] /= self.y_scale
        unit[2::3] = (unit[2::3] - self.x_offset) / self.x_scale
        unit[3::3] /= self.x_scale
        return unit

    def from_unit(self, unit: np.ndarray) -> np.ndarray:
        params = np.array(unit, dtype=float)
        params[0] *= self.y_scale
        params[1::3] = np.abs(params[1::3]) * self.y_scale
        params[2::3] = params[2::3] * self.x_scale + self.x_offset
        params[3::3] = np.abs(params[3::3]) * self.x_scale
        return params

    def stderr_from_unit(self, unit_stderr: np.ndarray) -> np.ndarray:
        stderr = np.array(unit_stderr, dtype=float)
        stderr[0] *= self.y_scale
        stderr[1::3] *= self.y_scale
        stderr[2::3] *= self.x_scale
        stderr[3::3] *= self.x_scale
        return stderr


@dataclass
class _Objective:
    kind: ModelKind
    xs: np.ndarray
    ys: np.ndarray
    fixed_baseline: Optional[float]

    def full(self, free: np.ndarray) -> np.ndarray:
        if self.fixed_baseline is None:
            return np.asarray(free, dtype=float)
        return np.concatenate([[self.fixed_baseline], free])

    def residuals(self, free: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self.ys - _evaluate(self.kind, self.full(free), self.xs)

    def __call__(self, free: np.ndarray) -> float:
        r = self.residuals(free)
        value = float(np.dot(r, r))
        return value if math.isfinite(value) else math.inf


def _validate_samples(xs, ys, n_params: int) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size != ys.size:
        raise ValidationException(f"xs and ys differ in length ({xs.size} vs {ys.size})", field="ys")
    if xs.size < n_params + 2:
        raise ValidationException(f"need at least {n_params + 2} samples, got {xs.size}", field="xs")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValidationException("samples must be finite", field="ys")
    steps = np.diff(xs)
    if np.any(steps <= 0):
        raise ValidationException("xs must be strictly increasing", field="xs", index=int(np.argmax(steps <= 0)) + 1)
    return xs, ys


def _half_crossing(xs: np.ndarray, excursion: np.ndarray, peak: int, step: int) -> float:
    """x where the excursion first drops below half its peak value, walking from `peak`."""
    half = 0.5 * excursion[peak]
    i = peak
    while 0 <= i + step < xs.size:
        nxt = i + step
        if excursion[nxt] <= half:
            t = (excursion[i] - half) / (excursion[i] - excursion[nxt])
            return float(xs[i] + t * (xs[nxt] - xs[i]))
        i = nxt
    return float(xs[i])


def _spread_components(n_components: int, xs: np.ndarray, amplitude: float = 0.0, first: int = 0) -> np.ndarray:
    """Components `first`..n-1 placed evenly over the span, each a quarter slot wide."""
    span = xs[-1] - xs[0]
    params = []
    for k in range(first, n_components):
        params += [amplitude, xs[0] + (k + 0.5) * span / n_components, span / (4.0 * n_components)]
    return np.array(params, dtype=float)


def _auto_init(kind: ModelKind, n_components: int, xs: np.ndarray, ys: np.ndarray,
               baseline: float) -> np.ndarray:
    excursion = kind.sign * (ys - baseline)
    span = xs[-1] - xs[0]
    if kind.is_sinc:
        peak = int(np.argmax(excursion))
        if excursion[peak] <= 0:
            return np.concatenate([[baseline], _spread_components(1, xs)])
        width = _half_crossing(xs, excursion, peak, 1) - _half_crossing(xs, excursion, peak, -1)
        width = width if width > 0 else 0.25 * span
        return np.array([baseline, excursion[peak], xs[peak], width / (2.0 * SINC2_HALF)])

    peaks, properties = find_peaks(excursion, prominence=0.0)
    order = np.argsort(properties["prominences"], kind="stable")[::-1][:n_components]
    chosen = np.sort(peaks[order])
    params = [baseline]
    if chosen.size:
        _, _, left, right = peak_widths(excursion, chosen, rel_height=0.5)
        index = np.arange(xs.size)
        for k, p in enumerate(chosen):
            width = np.interp(right[k], index, xs) - np.interp(left[k], index, xs)
            sigma = width / GAUSSIAN_FWHM if width > 0 else span / (4.0 * n_components)
            params += [abs(excursion[p]), xs[p], sigma]
    filler = _spread_components(n_components, xs, float(np.max(np.abs(excursion))), chosen.size)
    return np.concatenate([params, filler])


def _jacobian(objective: _Objective, free: np.ndarray) -> np.ndarray:
    columns = []
    for i in range(free.size):
        step = JACOBIAN_STEP * max(abs(free[i]), 1.0)
        up, down = free.copy(), free.copy()
        up[i] += step
        down[i] -= step
        columns.append((objective.residuals(up) - objective.residuals(down)) / (2.0 * step))
    return np.column_stack(columns)


def _unit_stderr(objective: _Objective, free: np.ndarray) -> np.ndarray:
    dof = objective.xs.size - free.size
    r = objective.residuals(free)
    jac = _jacobian(objective, free)
    covariance = (float(np.dot(r, r)) / dof) * np.linalg.pinv(jac.T @ jac)
    stderr = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    if objective.fixed_baseline is not None:
        stderr = np.concatenate([[0.0], stderr])
    return stderr


def fit_profile(xs, ys, model_kind: Union[ModelKind, str], init: Optional[Sequence[float]] = None,
                n_components: int = 1, fixed_baseline: Optional[float] = None,
                max_iter: int = MAX_ITERATIONS) -> FitResult:
    kind = ModelKind(model_kind)
    n_components = 1 if kind.is_sinc else int(n_components)
    n_params = parameter_count(kind, n_components)
    xs, ys = _validate_samples(xs, ys, n_params - (fixed_baseline is not None))

    baseline = float(np.median(ys)) if fixed_baseline is None else float(fixed_baseline)
    if np.ptp(ys) == 0.0:
        logger.warning("Profile is constant (y = %r); nothing to fit", float(ys[0]))
        level = float(ys[0]) if fixed_baseline is None else baseline
        flat = np.concatenate([[level], _spread_components(n_components, xs)])
        return FitResult(
            model=ProfileModel(kind, flat, n_components),
            residual_rms=float(np.sqrt(np.mean((ys - _evaluate(kind, flat, xs)) ** 2))),
            iterations=0,
            converged=False,
            param_stderr=np.full(n_params, np.nan),
            degenerate=True,
            fixed_baseline=fixed_baseline,
        )

    if init is None:
        start = _auto_init(kind, n_components, xs, ys, baseline)
    else:
        start = ProfileModel(kind, init, n_components).params.copy()
    if fixed_baseline is not None:
        start[0] = baseline

    norm = _Normalization(x_offset=float(np.mean(xs)), x_scale=float(xs[-1] - xs[0]),
                          y_scale=float(np.max(np.abs(ys))))
    unit_start = norm.to_unit(start)
    unit_fixed = None if fixed_baseline is None else unit_start[0]
    objective = _Objective(kind, (xs - norm.x_offset) / norm.x_scale, ys / norm.y_scale, unit_fixed)
    free = unit_start if unit_fixed is None else unit_start[1:]

    trace: List[float] = []
    iterations = 0
    converged = False
    best = objective(free)
    for restart in range(MAX_RESTARTS + 1):
        budget = max_iter - iterations
        if budget <= 0:
            break
        result = minimize(
            objective, free, method="Nelder-Mead",
            callback=lambda xk: trace.append(objective(xk) * norm.y_scale ** 2),
            options={"maxiter": budget, "xatol": X_TOLERANCE, "fatol": F_TOLERANCE * (1.0 + abs(best)),
                     "adaptive": False},
        )
        iterations += int(result.nit)
        converged = bool(result.success)
        improved = best - float(result.fun)
        if float(result.fun) <= best:
            free, best = np.asarray(result.x, dtype=float), float(result.fun)
        if not converged or improved <= F_TOLERANCE * (1.0 + abs(best)):
            break
        logger.debug("Restart %d improved the objective by %g", restart + 1, improved)

    params = norm.from_unit(objective.full(free))
    if fixed_baseline is not None:
        params[0] = baseline
    stderr = norm.stderr_from_unit(_unit_stderr(objective, free))
    rms = math.sqrt(best / xs.size) * norm.y_scale
    if not converged:
        logger.warning("%s fit did not converge within %d iterations (rms %g)", kind.value, max_iter, rms)

    return FitResult(
        model=ProfileModel(kind, params, n_components),
        residual_rms=rms,
        iterations=iterations,
        converged=converged and math.isfinite(rms) and iterations <= max_iter,
        param_stderr=stderr,
        objective_trace=tuple(trace),
        fixed_baseline=fixed_baseline,
    )


def _require_converged(fit: FitResult) -> None:
    if not fit.converged:
        reason = "degenerate data" if fit.degenerate else "no convergence"
        raise DomainException(f"the {fit.model.kind.value} fit is not usable ({reason})")


def fwhm(fit: FitResult, component: int = 0) -> float:
    """Full width at half the fitted excursion, from the fitted width parameter."""
    _require_converged(fit)
    width = float(fit.model.widths[component])
    return 2.0 * SINC2_HALF * width if fit.model.kind.is_sinc else GAUSSIAN_FWHM * width


def dip_separation(fit: FitResult) -> Tuple[float, float]:
    """|center_2 - center_1| of a two-component Gaussian fit and its standard error."""
    _require_converged(fit)
    if fit.model.kind.is_sinc or fit.model.n_components != 2:
        raise DomainException(
            f"separation needs a two-component Gaussian model, got {fit.model.kind.value} "
            f"with {fit.model.n_components} component(s)"
        )
    first, second = fit.model.centers
    errors = fit.param_stderr[2::3]
    return abs(float(second - first)), float(math.hypot(errors[0], errors[1]))


def extract_section(data: Union[CorrelationMap, GhostImage], start: Sequence[float], end: Sequence[float],
                    samples: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bilinear samples of a map along the segment start -> end. xs is the signed
    arclength measured from the segment midpoint.
    """
    if int(samples) < 2:
        raise ValidationException(f"need at least 2 samples, got {samples}", field="samples")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.hypot(*(end - start)))
    if length == 0.0:
        raise RangeException("section has zero length")

    t = np.linspace(0.0, 1.0, int(samples))
    points = start[None, :] + t[:, None] * (end - start)[None, :]
    xs = (t - 0.5) * length

    grid = data.scan
    slack = 1e-9 * grid.pitch
    x_axis, y_axis = grid.x_axis, grid.y_axis
    outside_x = (points[:, 0] < x_axis[0] - slack) | (points[:, 0] > x_axis[-1] + slack)
    outside_y = (points[:, 1] < y_axis[0] - slack) | (points[:, 1] > y_axis[-1] + slack)
    if np.any(outside_x | outside_y):
        raise RangeException(
            f"section from {tuple(start)} to {tuple(end)} leaves the grid "
            f"[{x_axis[0]!r}, {x_axis[-1]!r}] x [{y_axis[0]!r}, {y_axis[-1]!r}]"
        )
    points[:, 0] = np.clip(points[:, 0], x_axis[0], x_axis[-1])
    points[:, 1] = np.clip(points[:, 1], y_axis[0], y_axis[-1])

    if grid.is_1d:
        return xs, np.interp(points[:, 0], x_axis, data.values)
    if grid.nx == 1:
        return xs, np.interp(points[:, 1], y_axis, data.values)
    interpolator = RegularGridInterpolator((y_axis, x_axis), data.values.reshape(grid.ny, grid.nx),
                                           method="linear", bounds_error=True)
    return xs, interpolator(points[:, ::-1])
