"""
Run configuration: a TOML document with one flat section per module.

    [run]       command, seed, workers, output_dir, show_progress, report
    [geometry]  wavelength, dist_reference, dist_object            (meters)
    [source]    shape, diameter | width + height | bitmap, emitter_pitch,
                profile (uniform | gaussian), gaussian_waist
    [scan]      origin_x, origin_y, pitch, nx, ny                  (D1 grid)
    [hbt]       fixed_point_x, fixed_point_y, ensemble_size, estimator
    [ghost]     ensemble_size, estimator, fit_separation
    [mask]      kind, diameter, separation, origin_x, origin_y, pitch, nx, ny, bitmap
    [analytic]  dimensionality, source_extent, delta_limit
    [fit]       input, model, n_components, fixed_baseline, row_y
    [section]   input, start_x, start_y, end_x, end_y, samples, fit_model

Unknown sections and keys are rejected. Every error names `section.key`.
"""

from __future__ import annotations

import tomllib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt
from pydantic import ValidationError as PydanticValidationError

from core.model import (
    DetectorGrid,
    Geometry,
    SourceShape,
    SourceSpec,
    TransmissionMask,
    make_double_pinhole_mask,
    make_mask_from_bitmap,
)
from exceptions.exceptions import ConfigurationException, GhostSimException, ValidationException
from interfaces.interfaces import EstimatorKind
from services.analytic_kernels import Dimensionality, KernelParams
from services.correlators import HbtScanConfig
from services.fitting import ModelKind
from services.ghost_imaging import GhostConfig


class Command(str, Enum):
    HBT_SCAN = "hbt_scan"
    GHOST_IMAGE = "ghost_image"
    ANALYTIC = "analytic"
    FIT = "fit"
    SECTION = "section"


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(Section):
    command: Optional[Command] = None
    seed: int = Field(default=0, ge=0, lt=1 << 64)
    workers: int = Field(default=0, ge=0)
    output_dir: str = "out"
    show_progress: bool = False
    report: bool = False


class GeometrySection(Section):
    wavelength: PositiveFloat
    dist_reference: PositiveFloat
    dist_object: PositiveFloat


class SourceSection(Section):
    shape: SourceShape
    emitter_pitch: PositiveFloat
    diameter: Optional[PositiveFloat] = None
    width: Optional[PositiveFloat] = None
    height: Optional[PositiveFloat] = None
    bitmap: Optional[str] = None
    profile: Literal["uniform", "gaussian"] = "uniform"
    gaussian_waist: Optional[PositiveFloat] = None


class ScanSection(Section):
    origin_x: float
    origin_y: float = 0.0
    pitch: PositiveFloat
    nx: PositiveInt
    ny: PositiveInt = 1


class HbtSection(Section):
    fixed_point_x: float = 0.0
    fixed_point_y: float = 0.0
    ensemble_size: PositiveInt
    estimator: EstimatorKind = EstimatorKind.INTENSITY


class GhostSection(Section):
    ensemble_size: PositiveInt
    estimator: EstimatorKind = EstimatorKind.INTENSITY
    fit_separation: bool = True


class MaskSection(Section):
    kind: Literal["double_pinhole", "bitmap"] = "double_pinhole"
    diameter: Optional[PositiveFloat] = None
    separation: Optional[float] = Field(default=None, ge=0)
    origin_x: float
    origin_y: float = 0.0
    pitch: PositiveFloat
    nx: PositiveInt
    ny: PositiveInt = 1
    bitmap: Optional[str] = None


class AnalyticSection(Section):
    dimensionality: Dimensionality = Dimensionality.TWO_D
    source_extent: Optional[PositiveFloat] = None
    delta_limit: bool = False


class FitSection(Section):
    input: str
    model: ModelKind
    n_components: PositiveInt = 1
    fixed_baseline: Optional[float] = None
    row_y: Optional[float] = None


class SectionSection(Section):
    input: str
    start_x: Optional[float] = None
    start_y: Optional[float] = None
    end_x: Optional[float] = None
    end_y: Optional[float] = None
    samples: int = Field(default=101, ge=2)
    fit_model: Optional[ModelKind] = None


SECTIONS: Dict[str, Type[Section]] = {
    "run": RunSection,
    "geometry": GeometrySection,
    "source": SourceSection,
    "scan": ScanSection,
    "hbt": HbtSection,
    "ghost": GhostSection,
    "mask": MaskSection,
    "analytic": AnalyticSection,
    "fit": FitSection,
    "section": SectionSection,
}

REQUIRED_SECTIONS: Dict[Command, Tuple[str, ...]] = {
    Command.HBT_SCAN: ("geometry", "source", "scan", "hbt"),
    Command.GHOST_IMAGE: ("geometry", "source", "scan", "mask", "ghost"),
    Command.ANALYTIC: ("geometry", "mask"),
    Command.FIT: ("fit",),
    Command.SECTION: ("section",),
}


@dataclass(frozen=True)
class AnalyticJob:
    params: KernelParams
    mask: TransmissionMask
    scan: DetectorGrid
    delta_limit: bool = False


@dataclass(frozen=True)
class FitJob:
    input: Path
    model: ModelKind
    n_components: int = 1
    fixed_baseline: Optional[float] = None
    row_y: Optional[float] = None


@dataclass(frozen=True)
class SectionJob:
    input: Path
    samples: int
    start: Optional[Tuple[float, float]] = None
    end: Optional[Tuple[float, float]] = None
    fit_model: Optional[ModelKind] = None


@dataclass(frozen=True)
class RunConfig:
    command: Command
    output_dir: Path
    master_seed: int
    workers: int
    show_progress: bool
    report: bool
    echo: Dict[str, Dict[str, Any]]
    hbt: Optional[HbtScanConfig] = None
    ghost: Optional[GhostConfig] = None
    analytic: Optional[AnalyticJob] = None
    fit: Optional[FitJob] = None
    section: Optional[SectionJob] = None


def _validate_section(name: str, raw: Any) -> Section:
    if not isinstance(raw, dict):
        raise ConfigurationException("must be a table of key = value pairs", key=name)
    try:
        return SECTIONS[name].model_validate(raw)
    except PydanticValidationError as e:
        error = e.errors()[0]
        location = ".".join(str(part) for part in (name, *error["loc"]))
        message = "unknown key" if error["type"] == "extra_forbidden" else error["msg"]
        raise ConfigurationException(message, key=location) from e


class _Builder:
    """Turns validated sections into module configs, re-keying domain errors as section.key."""

    def __init__(self, sections: Dict[str, Section], base_dir: Path):
        self.sections = sections
        self.base_dir = base_dir

    def require(self, name: str) -> Section:
        if name not in self.sections:
            raise ConfigurationException("section is required for this command", key=name)
        return self.sections[name]

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    def load_array(self, section: str, path: str) -> np.ndarray:
        try:
            return np.loadtxt(self.resolve(path), delimiter=",", ndmin=2)
        except (OSError, ValueError) as e:
            raise ConfigurationException(f"cannot load {path}: {e}", key=f"{section}.bitmap") from e

    def build(self, section: str, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except ValidationException as e:
            key = f"{section}.{e.field}" if e.field else section
            raise ConfigurationException(str(e.args[0]).split(": ", 1)[-1], key=key) from e

    def geometry(self) -> Geometry:
        g = self.require("geometry")
        return self.build("geometry", Geometry, g.wavelength, g.dist_reference, g.dist_object)

    def source(self) -> SourceSpec:
        s = self.require("source")
        if s.profile == "gaussian":
            if s.shape is not SourceShape.DISK or s.diameter is None or s.gaussian_waist is None:
                raise ConfigurationException("gaussian profiles need shape = \"disk\", diameter and gaussian_waist",
                                             key="source.profile")
            return self.build("source", SourceSpec.gaussian, s.diameter, s.gaussian_waist, s.emitter_pitch)
        if s.shape is SourceShape.DISK:
            self._need("source", s, "diameter")
            return self.build("source", SourceSpec.disk, s.diameter, s.emitter_pitch)
        if s.shape is SourceShape.RECTANGLE:
            self._need("source", s, "width", "height")
            return self.build("source", SourceSpec.rectangle, s.width, s.height, s.emitter_pitch)
        self._need("source", s, "bitmap")
        return self.build("source", SourceSpec.from_bitmap, self.load_array("source", s.bitmap), s.emitter_pitch)

    @staticmethod
    def _need(section: str, values: Section, *keys: str) -> None:
        for key in keys:
            if getattr(values, key) is None:
                raise ConfigurationException("missing required key", key=f"{section}.{key}")

    def grid(self, section: str) -> DetectorGrid:
        s = self.require(section)
        return self.build(section, DetectorGrid, (s.origin_x, s.origin_y), s.pitch, (s.nx, s.ny))

    def mask(self) -> TransmissionMask:
        m = self.require("mask")
        grid = self.grid("mask")
        if m.kind == "bitmap":
            self._need("mask", m, "bitmap")
            return self.build("mask", make_mask_from_bitmap, grid, self.load_array("mask", m.bitmap))
        self._need("mask", m, "diameter", "separation")
        return self.build("mask", make_double_pinhole_mask, grid, m.diameter, m.separation)

    def hbt(self, seed: int) -> HbtScanConfig:
        h = self.require("hbt")
        return self.build("hbt", HbtScanConfig, self.source(), self.geometry(),
                          (h.fixed_point_x, h.fixed_point_y), self.grid("scan"), h.ensemble_size, seed, h.estimator)

    def ghost(self, seed: int) -> GhostConfig:
        g = self.require("ghost")
        return self.build("ghost", GhostConfig, self.source(), self.geometry(), self.mask(),
                          self.grid("scan"), g.ensemble_size, seed, g.estimator)

    def analytic(self) -> AnalyticJob:
        a = self.sections.get("analytic", AnalyticSection())
        geometry = self.geometry()
        if not geometry.balanced:
            raise ConfigurationException("the analytic kernels need dist_reference = dist_object",
                                         key="geometry.dist_object")
        extent = a.source_extent
        if extent is None:
            s = self.require("source")
            extent = s.diameter if s.shape is SourceShape.DISK else s.width
            if extent is None:
                raise ConfigurationException("missing required key", key="analytic.source_extent")
        params = self.build("analytic", KernelParams, extent, geometry.wavelength, geometry.dist_reference,
                            a.dimensionality)
        mask = self.mask()
        scan = self.grid("scan") if "scan" in self.sections else mask.grid
        return AnalyticJob(params=params, mask=mask, scan=scan, delta_limit=a.delta_limit)

    def fit(self) -> FitJob:
        f = self.require("fit")
        return FitJob(input=self.resolve(f.input), model=f.model, n_components=f.n_components,
                      fixed_baseline=f.fixed_baseline, row_y=f.row_y)

    def section(self) -> SectionJob:
        s = self.require("section")
        ends = (s.start_x, s.start_y, s.end_x, s.end_y)
        if any(v is None for v in ends) and not all(v is None for v in ends):
            raise ConfigurationException("give all of start_x, start_y, end_x, end_y or none of them",
                                         key="section.start_x")
        explicit = ends[0] is not None
        return SectionJob(
            input=self.resolve(s.input),
            samples=s.samples,
            start=(s.start_x, s.start_y) if explicit else None,
            end=(s.end_x, s.end_y) if explicit else None,
            fit_model=s.fit_model,
        )


def parse_config(text: str, command: Optional[Command | str] = None, overrides: Optional[Dict[str, Any]] = None,
                 base_dir: Optional[Path] = None) -> RunConfig:
    """
    Parses and validates a TOML run configuration. `command` and `overrides`
    (keys of the [run] section) come from the command line and take precedence
    over the document.
    """
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationException(f"malformed document: {e}") from e

    unknown = sorted(set(document) - set(SECTIONS))
    if unknown:
        raise ConfigurationException("unknown section", key=unknown[0])

    run_raw = dict(document.get("run", {}))
    if command is not None:
        run_raw["command"] = Command(command).value
    run_raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    sections: Dict[str, Section] = {"run": _validate_section("run", run_raw)}
    for name, raw in document.items():
        if name != "run":
            sections[name] = _validate_section(name, raw)

    run: RunSection = sections["run"]
    if run.command is None:
        raise ConfigurationException("missing required key (or pass a subcommand)", key="run.command")
    for name in REQUIRED_SECTIONS[run.command]:
        if name not in sections:
            raise ConfigurationException(f"section is required for {run.command.value}", key=name)

    builder = _Builder(sections, base_dir or Path.cwd())
    jobs: Dict[str, Any] = {}
    try:
        if run.command is Command.HBT_SCAN:
            jobs["hbt"] = builder.hbt(run.seed)
        elif run.command is Command.GHOST_IMAGE:
            jobs["ghost"] = builder.ghost(run.seed)
        elif run.command is Command.ANALYTIC:
            jobs["analytic"] = builder.analytic()
        elif run.command is Command.FIT:
            jobs["fit"] = builder.fit()
        else:
            jobs["section"] = builder.section()
    except ConfigurationException:
        raise
    except GhostSimException as e:
        raise ConfigurationException(str(e), key=run.command.value) from e

    return RunConfig(
        command=run.command,
        output_dir=builder.resolve(run.output_dir),
        master_seed=run.seed,
        workers=run.workers,
        show_progress=run.show_progress,
        report=run.report,
        echo={name: section.model_dump(mode="json") for name, section in sorted(sections.items())},
        **jobs,
    )
