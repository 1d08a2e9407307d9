"""
Plain-text and image outputs.

Correlation CSV::

    # kind=fermion
    # seed=42
    # ensemble_size=5000
    # origin=-0.003,0
    # pitch=0.000125
    # counts=49,1
    # x_m,g2,stderr
    -0.003,0.99...,0.01...

The y_m column is present only for 2D grids. Ghost images add a
`# baseline=` header. Numbers use 17 significant digits so every float64
round-trips exactly, and rows follow the row-major grid order.

PGM images are binary P5 with 16-bit big-endian samples. Rows are written in
grid order (the first row is the lowest y). Values map affinely from
[min, max] to [0, 65535]; a JSON sidecar next to the image (same name,
`.json` suffix) records that map with the grid, kind and baseline.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from core.model import CorrelationMap, DetectorGrid, GhostImage, Statistics
from exceptions.exceptions import InputReadException, OutputWriteException, ValidationException

logger = logging.getLogger(__name__)

PGM_MAX = 65535
PGM_MID_GRAY = 32768
FLOAT_FORMAT = "%.17g"

MapLike = Union[CorrelationMap, GhostImage]


def _number(value: float) -> str:
    return FLOAT_FORMAT % value


def _grid_header(grid: DetectorGrid) -> list:
    return [
        f"origin={_number(grid.origin[0])},{_number(grid.origin[1])}",
        f"pitch={_number(grid.pitch)}",
        f"counts={grid.nx},{grid.ny}",
    ]


def _grid_from_header(header: Dict[str, str]) -> DetectorGrid:
    ox, oy = (float(v) for v in header["origin"].split(","))
    nx, ny = (int(v) for v in header["counts"].split(","))
    return DetectorGrid(origin=(ox, oy), pitch=float(header["pitch"]), counts=(nx, ny))


def _discard(path: Path) -> None:
    try:
        path.unlink(missing_ok=True)
    except OSError:
        logger.warning("Could not remove partial output %s", path)


def _write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="ascii", newline="\n") as handle:
            handle.write(text)
    except OSError as e:
        _discard(path)
        raise OutputWriteException(str(path), e.strerror or str(e)) from e
    return path


def _write_bytes(path: Path, payload: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        _discard(path)
        raise OutputWriteException(str(path), e.strerror or str(e)) from e
    return path


def _table(columns: Sequence[np.ndarray]) -> str:
    rows = np.column_stack(columns)
    return "".join(",".join(_number(v) for v in row) + "\n" for row in rows)


def write_correlation_csv(data: MapLike, path: Union[str, Path]) -> Path:
    grid = data.scan
    header = [
        f"kind={data.kind.value}",
        f"seed={'none' if data.seed is None else data.seed}",
        f"ensemble_size={data.ensemble_size}",
        *_grid_header(grid),
    ]
    if isinstance(data, GhostImage):
        header.append(f"baseline={_number(data.baseline)}")

    coordinates = grid.coordinates()
    if grid.is_1d:
        header.append("x_m,g2,stderr")
        columns = [coordinates[:, 0], data.values, data.stderr]
    else:
        header.append("x_m,y_m,g2,stderr")
        columns = [coordinates[:, 0], coordinates[:, 1], data.values, data.stderr]

    text = "".join(f"# {line}\n" for line in header) + _table(columns)
    logger.debug("Writing %s map with %d rows to %s", data.kind.value, grid.size, path)
    return _write_text(Path(path), text)


def write_profile_csv(xs: np.ndarray, ys: np.ndarray, path: Union[str, Path],
                      header: Optional[Dict[str, Any]] = None) -> Path:
    """Section profile: signed arclength s_m and the sampled value."""
    lines = [f"# {key}={value}" for key, value in (header or {}).items()] + ["# s_m,g2"]
    text = "\n".join(lines) + "\n" + _table([np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)])
    return _write_text(Path(path), text)


def _read_header(lines: Sequence[str]) -> Dict[str, str]:
    header = {}
    for line in lines:
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" in body:
            key, value = body.split("=", 1)
            header[key.strip()] = value.strip()
    return header


def read_correlation_csv(path: Union[str, Path]) -> MapLike:
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except OSError as e:
        raise InputReadException(str(path), e.strerror or str(e)) from e

    header = _read_header(lines)
    missing = {"kind", "seed", "ensemble_size", "origin", "pitch", "counts"} - header.keys()
    if missing:
        raise ValidationException(f"{path} lacks header fields {sorted(missing)}", field="header")

    grid = _grid_from_header(header)
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    expected_columns = 3 if grid.is_1d else 4
    if data.shape != (grid.size, expected_columns):
        raise ValidationException(
            f"{path} holds a {data.shape[0]}x{data.shape[1]} table, expected {grid.size}x{expected_columns}",
            field="rows",
        )

    common = dict(
        scan=grid,
        values=data[:, -2],
        stderr=data[:, -1],
        kind=Statistics(header["kind"]),
        seed=None if header["seed"] == "none" else int(header["seed"]),
        ensemble_size=int(header["ensemble_size"]),
    )
    if "baseline" in header:
        return GhostImage(baseline=float(header["baseline"]), **common)
    return CorrelationMap(**common)


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def _quantize(values: np.ndarray) -> tuple:
    low, high = float(np.min(values)), float(np.max(values))
    if high == low:
        return np.full(values.shape, PGM_MID_GRAY, dtype=">u2"), low, high, True
    scaled = np.rint((values - low) / (high - low) * PGM_MAX)
    return np.clip(scaled, 0, PGM_MAX).astype(">u2"), low, high, False


def write_image_pgm(image: GhostImage, path: Union[str, Path]) -> Dict[str, Path]:
    grid = image.scan
    samples, low, high, constant = _quantize(image.values)
    if constant:
        logger.warning("%s image is constant (%r); writing mid-gray", image.kind.value, low)

    head = f"P5\n{grid.nx} {grid.ny}\n{PGM_MAX}\n".encode("ascii")
    image_path = _write_bytes(Path(path), head + samples.tobytes())

    sidecar = {
        "kind": image.kind.value,
        "baseline": image.baseline,
        "constant": constant,
        "min": low,
        "max": high,
        "scale": 0.0 if constant else (high - low) / PGM_MAX,
        "grid": {"origin": list(grid.origin), "pitch": grid.pitch, "counts": list(grid.counts)},
        "seed": image.seed,
        "ensemble_size": image.ensemble_size,
        "row_order": "y_ascending",
    }
    try:
        side_path = _write_text(sidecar_path(path), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    except OutputWriteException:
        _discard(image_path)
        raise
    return {"image": image_path, "sidecar": side_path}


def read_image_pgm(path: Union[str, Path]) -> GhostImage:
    """Values recovered from the quantized samples through the sidecar's affine map."""
    path = Path(path)
    try:
        payload = path.read_bytes()
        sidecar = json.loads(sidecar_path(path).read_text(encoding="ascii"))
    except OSError as e:
        raise InputReadException(str(path), e.strerror or str(e)) from e

    parts = payload.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ValidationException(f"{path} is not a binary PGM", field="magic")
    nx, ny = (int(v) for v in parts[1].split())
    grid = DetectorGrid(origin=tuple(sidecar["grid"]["origin"]), pitch=sidecar["grid"]["pitch"],
                        counts=tuple(sidecar["grid"]["counts"]))
    if (nx, ny) != grid.counts:
        raise ValidationException(f"{path} is {nx}x{ny}, its sidecar says {grid.counts}", field="counts")

    samples = np.frombuffer(parts[3], dtype=">u2", count=nx * ny).astype(float)
    if sidecar["constant"]:
        values = np.full(samples.shape, sidecar["min"])
    else:
        values = sidecar["min"] + samples * sidecar["scale"]
    return GhostImage(scan=grid, values=values, kind=Statistics(sidecar["kind"]),
                      baseline=sidecar["baseline"], seed=sidecar["seed"],
                      ensemble_size=sidecar["ensemble_size"])


def file_checksum(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    version: str
    seed: int
    workers: int
    wall_time_s: float = 0.0
    checksums: Dict[str, str] = field(default_factory=dict)

    def record(self, path: Path, root: Path) -> None:
        self.checksums[Path(path).relative_to(root).as_posix()] = file_checksum(path)


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    return _write_text(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_manifest(manifest: RunManifest, path: Union[str, Path]) -> Path:
    return write_json(asdict(manifest), path)
