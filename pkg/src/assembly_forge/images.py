"""Bit-exact PNG serialization for heightmaps and label rasters.

Plain heightmaps are 16-bit grayscale PNGs holding height in 0.1 mm units.
Label rasters are 16-bit RGBA PNGs: red = gradient scaled to 0..255,
green = class/combined id, blue = 0, alpha = height in 0.1 mm units. A JSON
sidecar carries the grid geometry for both forms.
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .geom import Transform
from .render import GridSpec, Heightmap

HEIGHT_UNIT = 1e-4  # meters per least-significant bit
SCHEMA_VERSION = 1


def transform_to_json(t: Transform) -> dict:
    return {"rotation": [float(v) for v in t.rotation],
            "translation": [float(v) for v in t.translation]}


def transform_from_json(d: dict) -> Transform:
    return Transform(np.array(d["rotation"], dtype=float),
                     np.array(d["translation"], dtype=float))


def grid_to_json(grid: GridSpec) -> dict:
    return {"origin": transform_to_json(grid.origin), "cell_size": grid.cell_size,
            "nx": grid.nx, "ny": grid.ny}


def grid_from_json(d: dict) -> GridSpec:
    return GridSpec(transform_from_json(d["origin"]), float(d["cell_size"]),
                    int(d["nx"]), int(d["ny"]))


def _quantize_height(height: np.ndarray) -> np.ndarray:
    return np.clip(np.round(height / HEIGHT_UNIT), 0, 65535).astype(np.uint16)


def write_heightmap_png(hm: Heightmap, path: str | Path) -> None:
    path = Path(path)
    if not cv2.imwrite(str(path), _quantize_height(hm.height)):
        raise IOError(f"failed to write {path}")
    sidecar = {"schema_version": SCHEMA_VERSION, "kind": "heightmap",
               "height_unit_m": HEIGHT_UNIT, "grid": grid_to_json(hm.grid)}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1))


def read_heightmap_png(path: str | Path) -> Heightmap:
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"cannot read {path}")
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = grid_from_json(meta["grid"])
    return Heightmap(grid, raw.astype(float) * meta["height_unit_m"])


def write_label_png(hm: Heightmap, path: str | Path) -> None:
    path = Path(path)
    h = _quantize_height(hm.height)
    r = np.clip(np.round(hm.gradient * 255.0), 0, 255).astype(np.uint16)
    g = np.clip(hm.class_id, 0, 255).astype(np.uint16)
    b = np.zeros_like(h)
    # OpenCV channel order is BGRA
    bgra = np.stack([b, g, r, h], axis=-1)
    if not cv2.imwrite(str(path), bgra):
        raise IOError(f"failed to write {path}")
    sidecar = {"schema_version": SCHEMA_VERSION, "kind": "label",
               "height_unit_m": HEIGHT_UNIT, "gradient_scale": 255,
               "grid": grid_to_json(hm.grid)}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1))


def read_label_png(path: str | Path) -> Heightmap:
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.ndim != 3 or raw.shape[2] != 4:
        raise IOError(f"{path} is not a 4-channel label raster")
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = grid_from_json(meta["grid"])
    height = raw[:, :, 3].astype(float) * meta["height_unit_m"]
    gradient = raw[:, :, 2].astype(float) / meta["gradient_scale"]
    gradient[height <= 0] = 0.0
    class_id = raw[:, :, 1].astype(np.int32)
    class_id[height <= 0] = 0
    return Heightmap(grid, height, class_id, gradient)
