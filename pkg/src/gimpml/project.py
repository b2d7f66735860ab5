"""File I/O: 8-bit PNG images, 16-bit disparity PNGs, and layered project dirs.

A project is a directory holding ``project.json`` plus one PNG per layer:

    {"width": W, "height": H,
     "layers": [{"name": s, "file": "layers/000.png", "opacity": f,
                 "visible": b, "offset_x": i, "offset_y": i}, ...]}

Layers are listed bottom-to-top.  Quantization happens only here: u8 values
map to v/255 on load and round(v*255) on save, which round-trips all 256
levels exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .core import ImageBuffer, Layer, LayerStack
from .maps import DisparityMap, LabelMap

__all__ = [
    "load_image",
    "save_image",
    "load_disparity",
    "save_disparity",
    "load_labelmap",
    "save_labelmap",
    "load_project",
    "save_project",
]

_MODE_CHANNELS = {"L": 1, "RGB": 3, "RGBA": 4}


def load_image(path) -> ImageBuffer:
    """Read an 8-bit grayscale/RGB/RGBA PNG (or a 16-bit gray one) as floats."""
    with Image.open(path) as img:
        if img.mode in ("I", "I;16"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
            return ImageBuffer(np.clip(arr, 0.0, 1.0)[:, :, None])
        if img.mode == "P":
            img = img.convert("RGBA" if "transparency" in img.info else "RGB")
        elif img.mode == "LA":
            img = img.convert("RGBA")
        elif img.mode not in _MODE_CHANNELS:
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def save_image(buffer: ImageBuffer, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.rint(buffer.data.astype(np.float64) * 255.0).clip(0, 255).astype(np.uint8)
    if buffer.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    elif buffer.channels == 3:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")
    else:
        Image.fromarray(arr, mode="RGBA").save(path, format="PNG")


def load_disparity(path) -> DisparityMap:
    """Read relative disparity from a 16-bit (or 8-bit) grayscale PNG."""
    with Image.open(path) as img:
        if img.mode in ("I", "I;16"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode == "L":
            arr = np.asarray(img, dtype=np.float64) / 255.0
        else:
            raise ValueError(f"disparity PNG must be grayscale, got mode {img.mode!r}")
    return DisparityMap(np.clip(arr, 0.0, 1.0).astype(np.float32))


def save_disparity(d: DisparityMap, path) -> None:
    """Write disparity as 16-bit grayscale; values must already lie in [0, 1]."""
    if float(d.values.max(initial=0.0)) > 1.0:
        raise ValueError("disparity values above 1 cannot be stored; normalize first")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.rint(d.values.astype(np.float64) * 65535.0).clip(0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")


def load_labelmap(path, palette: Mapping[int, tuple[str, tuple[float, float, float]]]) -> LabelMap:
    """Read class ids from an 8-bit single-channel PNG."""
    with Image.open(path) as img:
        if img.mode != "L":
            raise ValueError(f"label PNG must be 8-bit grayscale, got mode {img.mode!r}")
        ids = np.asarray(img, dtype=np.int32)
    return LabelMap(ids, palette)


def save_labelmap(labelmap: LabelMap, path) -> None:
    if int(labelmap.labels.max(initial=0)) > 255:
        raise ValueError("class ids above 255 cannot be stored in an 8-bit PNG")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(labelmap.labels.astype(np.uint8), mode="L").save(path, format="PNG")


def save_project(stack: LayerStack, directory) -> None:
    directory = Path(directory)
    (directory / "layers").mkdir(parents=True, exist_ok=True)
    manifest = {"width": stack.width, "height": stack.height, "layers": []}
    for i, layer in enumerate(stack.layers):
        rel = f"layers/{i:03d}.png"
        save_image(layer.buffer, directory / rel)
        manifest["layers"].append(
            {
                "name": layer.name,
                "file": rel,
                "opacity": layer.opacity,
                "visible": layer.visible,
                "offset_x": layer.offset_x,
                "offset_y": layer.offset_y,
            }
        )
    (directory / "project.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def load_project(directory) -> LayerStack:
    directory = Path(directory)
    manifest_path = directory / "project.json"
    if not manifest_path.is_file():
        raise ValueError(f"{directory} is not a project directory (no project.json)")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid project.json: {exc}") from exc
    try:
        width = int(manifest["width"])
        height = int(manifest["height"])
        entries = manifest["layers"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"project.json missing required field: {exc}") from exc
    layers = []
    for entry in entries:
        buffer = load_image(directory / entry["file"])
        layers.append(
            Layer(
                name=str(entry["name"]),
                buffer=buffer,
                opacity=float(entry.get("opacity", 1.0)),
                visible=bool(entry.get("visible", True)),
                offset_x=int(entry.get("offset_x", 0)),
                offset_y=int(entry.get("offset_y", 0)),
            )
        )
    return LayerStack(width, height, tuple(layers))
