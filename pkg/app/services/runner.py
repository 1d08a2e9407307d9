"""
The `run` dispatcher: executes one command, writes its outputs and the run
manifest into the output directory, and removes every file it wrote if any
step fails.
"""

from __future__ import annotations

import logging
import math
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from core.model import DetectorGrid, GhostImage, Statistics
from exceptions.exceptions import OutputWriteException
from schemas.config import Command, RunConfig
from services.analytic_kernels import ghost_image_analytic, ghost_image_delta_limit, point_to_spot_fwhm
from services.correlation_analyzer import CorrelationAnalyzer
from services.correlators import synthesize_fermion
from services.ensemble import EnsembleRunner
from services.fitting import FitResult, ModelKind, dip_separation, extract_section, fit_profile, fwhm
from services.ghost_imaging import snr_estimate
from services.report_generator import ReportGenerator
from services.serialization import (
    RunManifest,
    read_correlation_csv,
    write_correlation_csv,
    write_image_pgm,
    write_json,
    write_manifest,
    write_profile_csv,
)

logger = logging.getLogger(__name__)

VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.pdf"
SECTION_SAMPLES = 101

Line = Tuple[str, Tuple[float, float], Tuple[float, float]]


def _json_number(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def fit_entry(profile: str, fit: FitResult) -> Dict[str, Any]:
    entry = {
        "profile": profile,
        "model": fit.model.kind.value,
        "n_components": fit.model.n_components,
        "params": [float(v) for v in fit.model.params],
        "param_stderr": [_json_number(v) for v in fit.param_stderr],
        "residual_rms": float(fit.residual_rms),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "degenerate": fit.degenerate,
    }
    if fit.converged:
        widths = [fwhm(fit, k) for k in range(fit.model.n_components)]
        entry["fwhm_m"] = widths[0] if len(widths) == 1 else widths
        if not fit.model.kind.is_sinc and fit.model.n_components == 2:
            separation, stderr = dip_separation(fit)
            entry["separation_m"] = separation
            entry["separation_stderr_m"] = stderr
    return entry


def directional_lines(grid: DetectorGrid, center: Tuple[float, float]) -> List[Line]:
    """Lines through `center` along x, along y and along the diagonal, each clipped to the grid."""
    x_axis, y_axis = grid.x_axis, grid.y_axis
    cx, cy = float(center[0]), float(y_axis[0] if grid.is_1d else center[1])
    lines: List[Line] = [("x", (float(x_axis[0]), cy), (float(x_axis[-1]), cy))]
    if grid.is_1d:
        return lines
    lines.append(("y", (cx, float(y_axis[0])), (cx, float(y_axis[-1]))))
    reach = float(min(cx - x_axis[0], x_axis[-1] - cx, cy - y_axis[0], y_axis[-1] - cy))
    if reach > 0:
        lines.append(("diagonal", (cx - reach, cy - reach), (cx + reach, cy + reach)))
    return lines


def feature_center(data) -> Tuple[float, float]:
    """Grid position of the largest excursion from the median level."""
    index = int(np.argmax(np.abs(data.values - np.median(data.values))))
    x, y = data.scan.coordinates()[index]
    return float(x), float(y)


def _profile_model(kind: Statistics) -> ModelKind:
    return ModelKind.SINC2_PEAK if kind is Statistics.BOSON else ModelKind.SINC2_DIP


class RunContext:
    def __init__(self, config: RunConfig):
        self.config = config
        self.out = config.output_dir
        self.written: List[Path] = []
        self.summary: Dict[str, Any] = {"fits": [], "outputs": []}

    def keep(self, path: Path) -> Path:
        self.written.append(Path(path))
        self.summary["outputs"].append(Path(path).relative_to(self.out).as_posix())
        return path

    def csv(self, data, name: str) -> None:
        self.keep(write_correlation_csv(data, self.out / f"{name}.csv"))

    def image(self, image: GhostImage, name: str) -> None:
        self.csv(image, name)
        for path in write_image_pgm(image, self.out / f"{name}.pgm").values():
            self.keep(path)

    def fit(self, profile: str, xs: np.ndarray, ys: np.ndarray, model: ModelKind, n_components: int = 1,
            fixed_baseline: Optional[float] = None) -> FitResult:
        result = fit_profile(xs, ys, model, n_components=n_components, fixed_baseline=fixed_baseline)
        self.summary["fits"].append(fit_entry(profile, result))
        return result

    def remove_outputs(self) -> None:
        for path in reversed(self.written):
            path.unlink(missing_ok=True)
        self.written.clear()


def _fit_sections(ctx: RunContext, data, name: str, center: Tuple[float, float], model: ModelKind) -> None:
    for label, start, end in directional_lines(data.scan, center):
        samples = data.scan.nx if label == "x" else SECTION_SAMPLES
        xs, ys = extract_section(data, start, end, samples)
        ctx.fit(f"{name}:{label}", xs, ys, model)


def _run_hbt_scan(ctx: RunContext, analyzer: CorrelationAnalyzer) -> None:
    config = ctx.config.hbt
    maps = analyzer.hbt_scan(config)
    if Statistics.FERMION not in maps:
        maps[Statistics.FERMION] = synthesize_fermion(maps[Statistics.BOSON], maps[Statistics.CLASSICAL])

    for kind in (Statistics.BOSON, Statistics.FERMION, Statistics.CLASSICAL):
        ctx.csv(maps[kind], f"hbt_{kind.value}")

    fermion = maps[Statistics.FERMION]
    lowest = int(np.argmin(fermion.values))
    ctx.summary["fermion_minimum"] = {"g2": float(fermion.values[lowest]),
                                      "stderr": float(fermion.stderr[lowest]),
                                      "position_m": [float(v) for v in config.scan.coordinates()[lowest]]}
    for kind in (Statistics.FERMION, Statistics.BOSON):
        _fit_sections(ctx, maps[kind], f"hbt_{kind.value}", feature_center(maps[kind]), _profile_model(kind))


def _separation_profile(image: GhostImage) -> Tuple[np.ndarray, np.ndarray]:
    grid = image.scan
    if grid.is_1d:
        return grid.x_axis, image.values
    cy = grid.center[1]
    return extract_section(image, (grid.x_axis[0], cy), (grid.x_axis[-1], cy), grid.nx)


def _run_ghost_image(ctx: RunContext, analyzer: CorrelationAnalyzer) -> None:
    config = ctx.config.ghost
    images = analyzer.ghost_image(config)
    for kind in (Statistics.BOSON, Statistics.FERMION, Statistics.CLASSICAL):
        ctx.image(images[kind], f"ghost_{kind.value}")

    if config.reference_scan.size >= 10:
        snr = snr_estimate(images[Statistics.FERMION])
        ctx.summary["fermion_snr"] = {"value": _json_number(snr.value), "excursion": snr.excursion,
                                      "background_std": snr.background_std, "degenerate": snr.degenerate}

    if ctx.config.echo["ghost"]["fit_separation"]:
        for kind, model in ((Statistics.FERMION, ModelKind.GAUSSIAN_DIPS), (Statistics.BOSON, ModelKind.GAUSSIAN_PEAKS)):
            xs, ys = _separation_profile(images[kind])
            ctx.fit(f"ghost_{kind.value}", xs, ys, model, n_components=2)


def _run_analytic(ctx: RunContext, analyzer: CorrelationAnalyzer) -> None:
    job = ctx.config.analytic
    for kind in (Statistics.BOSON, Statistics.FERMION, Statistics.CLASSICAL):
        ctx.image(ghost_image_analytic(job.mask, kind, job.params, job.scan), f"analytic_{kind.value}")
    if job.delta_limit:
        ctx.image(ghost_image_delta_limit(job.mask), "delta_limit_fermion")
    ctx.summary["point_to_spot_fwhm_m"] = point_to_spot_fwhm(job.params, Statistics.FERMION)


def _fit_input(data, row_y: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    grid = data.scan
    if grid.is_1d:
        return grid.x_axis, data.values
    target = grid.center[1] if row_y is None else row_y
    row = int(np.argmin(np.abs(grid.y_axis - target)))
    return grid.x_axis, data.values.reshape(grid.ny, grid.nx)[row]


def _run_fit(ctx: RunContext, analyzer: CorrelationAnalyzer) -> None:
    job = ctx.config.fit
    data = read_correlation_csv(job.input)
    xs, ys = _fit_input(data, job.row_y)
    ctx.fit(job.input.name, xs, ys, job.model, job.n_components, job.fixed_baseline)
    ctx.keep(write_json(ctx.summary["fits"][-1], ctx.out / "fit_summary.json"))


def _run_section(ctx: RunContext, analyzer: CorrelationAnalyzer) -> None:
    job = ctx.config.section
    data = read_correlation_csv(job.input)
    if job.start is not None:
        lines: List[Line] = [("segment", job.start, job.end)]
    else:
        lines = directional_lines(data.scan, feature_center(data))

    for label, start, end in lines:
        xs, ys = extract_section(data, start, end, job.samples)
        ctx.keep(write_profile_csv(xs, ys, ctx.out / f"section_{label}.csv",
                                   {"kind": data.kind.value, "start": f"{start[0]!r},{start[1]!r}", "end": f"{end[0]!r},{end[1]!r}"}))
        if job.fit_model is not None:
            ctx.fit(f"section_{label}", xs, ys, job.fit_model)
    ctx.keep(write_json({"fits": ctx.summary["fits"]}, ctx.out / "section_summary.json"))


PIPELINES: Dict[Command, Callable[[RunContext, CorrelationAnalyzer], None]] = {
    Command.HBT_SCAN: _run_hbt_scan,
    Command.GHOST_IMAGE: _run_ghost_image,
    Command.ANALYTIC: _run_analytic,
    Command.FIT: _run_fit,
    Command.SECTION: _run_section,
}


def run(config: RunConfig, report_generator: Optional[ReportGenerator] = None) -> RunManifest:
    started = time.perf_counter()
    try:
        config.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputWriteException(str(config.output_dir), e.strerror or str(e)) from e
    ensemble = EnsembleRunner(max_workers=config.workers, show_progress=config.show_progress)
    ctx = RunContext(config)
    manifest = RunManifest(command=config.command.value, config=config.echo, version=VERSION,
                           seed=config.master_seed, workers=ensemble.max_workers)
    logger.info("Running %s into %s (seed %d, %d workers)", config.command.value, config.output_dir,
                config.master_seed, ensemble.max_workers)
    try:
        with CorrelationAnalyzer(runner=ensemble) as analyzer:
            PIPELINES[config.command](ctx, analyzer)
        if config.report:
            ctx.keep((report_generator or ReportGenerator()).generate(manifest, ctx.summary,
                                                                      config.output_dir / REPORT_NAME))
        for path in ctx.written:
            manifest.record(path, config.output_dir)
        manifest.wall_time_s = time.perf_counter() - started
        ctx.written.append(write_manifest(manifest, config.output_dir / MANIFEST_NAME))
    except Exception:
        logger.error("Run failed; removing %d partial output(s)", len(ctx.written))
        ctx.remove_outputs()
        raise
    finally:
        ensemble.shutdown()

    logger.info("Finished %s in %.2f s with %d output(s)", config.command.value, manifest.wall_time_s,
                len(manifest.checksums))
    return manifest
