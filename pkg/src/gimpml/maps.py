"""Typed auxiliary rasters: trimaps, color hints, label maps, disparity maps.

These carry the strict value domains the editing tools rely on, plus the
disparity-driven relighting construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .core import ImageBuffer
from .ops import RegionMask, colorize, invert

__all__ = [
    "TRIMAP_BACKGROUND",
    "TRIMAP_UNKNOWN",
    "TRIMAP_FOREGROUND",
    "Trimap",
    "decode_trimap",
    "encode_trimap",
    "Hint",
    "HintSet",
    "HINT_DOT_SIZE",
    "rasterize_hints",
    "parse_hint_layer",
    "LabelMap",
    "class_mask",
    "FACE_PALETTE",
    "VOC_PALETTE",
    "labelmap_to_buffer",
    "labelmap_from_buffer",
    "labelmap_to_color",
    "DisparityMap",
    "normalize_disparity",
    "relight",
]

TRIMAP_BACKGROUND = 0
TRIMAP_UNKNOWN = 1
TRIMAP_FOREGROUND = 2

_TRIMAP_BYTE_TO_CODE = {0: TRIMAP_BACKGROUND, 128: TRIMAP_UNKNOWN, 255: TRIMAP_FOREGROUND}
_TRIMAP_CODE_TO_VALUE = np.array([0.0, 128.0 / 255.0, 1.0], dtype=np.float32)


@dataclass(frozen=True, eq=False)
class Trimap:
    """Three-valued matting guide: background, unknown boundary, foreground."""

    values: np.ndarray  # (H, W) uint8 codes 0/1/2

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"trimap values must be 2-dimensional, got ndim={arr.ndim}")
        if arr.max(initial=0) > TRIMAP_FOREGROUND:
            raise ValueError("trimap codes must be 0 (background), 1 (unknown), or 2 (foreground)")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def decode_trimap(buffer: ImageBuffer) -> Trimap:
    """Decode a raster whose 8-bit pixels are exactly 0, 128, or 255.

    All color channels of a pixel must agree.  Any other value raises, naming
    the first offending pixel in row-major order.
    """
    colors = buffer.data if buffer.channels == 1 else buffer.data[:, :, :3]
    scaled = colors.astype(np.float64) * 255.0
    nearest = np.rint(scaled)
    quantized = np.abs(scaled - nearest) <= 1e-3
    allowed = np.isin(nearest, (0.0, 128.0, 255.0))
    agree = np.all(nearest == nearest[:, :, :1], axis=2)
    bad = ~(quantized.all(axis=2) & allowed.all(axis=2) & agree)
    if bad.any():
        y, x = np.unravel_index(int(np.argmax(bad)), bad.shape)
        vals = nearest[y, x].astype(np.int64)
        shown = int(vals[0]) if np.all(vals == vals[0]) else tuple(int(v) for v in vals)
        raise ValueError(f"invalid trimap value {shown} at pixel ({x}, {y}); expected 0, 128, or 255")
    codes = np.zeros(bad.shape, dtype=np.uint8)
    codes[nearest[:, :, 0] == 128.0] = TRIMAP_UNKNOWN
    codes[nearest[:, :, 0] == 255.0] = TRIMAP_FOREGROUND
    return Trimap(codes)


def encode_trimap(trimap: Trimap) -> ImageBuffer:
    """Render a trimap as a single-channel buffer with values 0, 128/255, 1."""
    return ImageBuffer(_TRIMAP_CODE_TO_VALUE[trimap.values][:, :, None])


HINT_DOT_SIZE = 6  # square stamp side length in pixels


@dataclass(frozen=True)
class Hint:
    """One color dot: center pixel plus the color wanted there."""

    x: int
    y: int
    color: tuple[float, float, float]


@dataclass(frozen=True)
class HintSet:
    """User-placed color dots guiding local colorization."""

    dots: tuple[Hint, ...] = ()


def rasterize_hints(hints: HintSet, width: int, height: int) -> ImageBuffer:
    """Stamp each dot as an opaque 6x6 square on a fully transparent RGBA canvas.

    The stamp covers [x-3, x+3) x [y-3, y+3), clipped to the canvas; later dots
    overwrite earlier ones.
    """
    half = HINT_DOT_SIZE // 2
    canvas = np.zeros((height, width, 4), dtype=np.float32)
    for dot in hints.dots:
        if not (0 <= dot.x < width and 0 <= dot.y < height):
            raise ValueError(f"hint dot ({dot.x}, {dot.y}) outside image bounds {width}x{height}")
        x0, x1 = max(dot.x - half, 0), min(dot.x + half, width)
        y0, y1 = max(dot.y - half, 0), min(dot.y + half, height)
        canvas[y0:y1, x0:x1, :3] = np.asarray(dot.color, dtype=np.float32)
        canvas[y0:y1, x0:x1, 3] = 1.0
    return ImageBuffer(canvas)


def parse_hint_layer(layer: ImageBuffer) -> HintSet:
    """Recover dots from a painted hint layer.

    Each 4-connected component of alpha > 0 pixels becomes one dot at its
    rounded centroid with the component's mean color.
    """
    if layer.channels != 4:
        raise ValueError(f"hint layer must have 4 channels, got {layer.channels}")
    mask = layer.data[:, :, 3] > 0
    labeled, count = ndimage.label(mask)
    dots = []
    for comp in range(1, count + 1):
        ys, xs = np.nonzero(labeled == comp)
        # Round half up so an even stamp's centroid (center - 0.5) maps back.
        cx = int(np.floor(xs.mean(dtype=np.float64) + 0.5))
        cy = int(np.floor(ys.mean(dtype=np.float64) + 0.5))
        rgb = layer.data[ys, xs, :3].astype(np.float64).mean(axis=0).astype(np.float32)
        dots.append(Hint(cx, cy, (float(rgb[0]), float(rgb[1]), float(rgb[2]))))
    return HintSet(tuple(dots))


def _bitfield_color(cid: int) -> tuple[float, float, float]:
    # Classic segmentation colormap: spread id bits across channel bitplanes.
    r = g = b = 0
    c = cid
    for shift in range(8):
        r |= ((c >> 0) & 1) << (7 - shift)
        g |= ((c >> 1) & 1) << (7 - shift)
        b |= ((c >> 2) & 1) << (7 - shift)
        c >>= 3
    return (r / 255.0, g / 255.0, b / 255.0)


_FACE_CLASS_NAMES = (
    "background", "skin", "l_brow", "r_brow", "l_eye", "r_eye", "eye_g",
    "l_ear", "r_ear", "ear_r", "nose", "mouth", "u_lip", "l_lip", "neck",
    "neck_l", "cloth", "hair", "hat",
)

_VOC_CLASS_NAMES = (
    "background", "person", "bird", "cat", "cow", "dog", "horse", "sheep",
    "aeroplane", "bicycle", "boat", "bus", "car", "motorbike", "train",
    "bottle", "chair", "dining_table", "potted_plant", "sofa", "tv_monitor",
)

FACE_PALETTE: dict[int, tuple[str, tuple[float, float, float]]] = {
    i: (name, _bitfield_color(i)) for i, name in enumerate(_FACE_CLASS_NAMES)
}

VOC_PALETTE: dict[int, tuple[str, tuple[float, float, float]]] = {
    i: (name, _bitfield_color(i)) for i, name in enumerate(_VOC_CLASS_NAMES)
}


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel class ids plus a palette mapping each id to a name and display color."""

    labels: np.ndarray  # (H, W) integer class ids
    palette: Mapping[int, tuple[str, tuple[float, float, float]]]

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError(f"labels must be 2-dimensional, got ndim={arr.ndim}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("labels must be integers")
        arr = np.ascontiguousarray(arr, dtype=np.int32).copy()
        if arr.min(initial=0) < 0:
            raise ValueError("class ids must be nonnegative")
        present = set(np.unique(arr).tolist())
        missing = present - set(self.palette)
        if missing:
            raise ValueError(f"labels {sorted(missing)} missing from palette")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        object.__setattr__(self, "palette", dict(self.palette))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


def class_mask(labelmap: LabelMap, class_ids) -> RegionMask:
    """Binary coverage mask: weight 1 where the label is one of ``class_ids``."""
    ids = sorted(set(int(i) for i in class_ids))
    unknown = [i for i in ids if i not in labelmap.palette]
    if unknown:
        raise ValueError(f"unknown class ids {unknown}; palette has {sorted(labelmap.palette)}")
    weights = np.isin(labelmap.labels, ids).astype(np.float32)
    return RegionMask(weights)


def labelmap_to_buffer(labelmap: LabelMap) -> ImageBuffer:
    """Store class ids in a single-channel buffer as id/255 (ids must fit in 8 bits)."""
    if labelmap.labels.max(initial=0) > 255:
        raise ValueError("class ids above 255 cannot be stored in an 8-bit buffer")
    return ImageBuffer(labelmap.labels.astype(np.float32)[:, :, None] / 255.0)


def labelmap_from_buffer(buffer: ImageBuffer, palette: Mapping[int, tuple[str, tuple[float, float, float]]]) -> LabelMap:
    """Recover class ids from a single-channel id/255 buffer."""
    if buffer.channels != 1:
        raise ValueError(f"label buffer must have 1 channel, got {buffer.channels}")
    ids = np.rint(buffer.data[:, :, 0].astype(np.float64) * 255.0).astype(np.int32)
    return LabelMap(ids, palette)


def labelmap_to_color(labelmap: LabelMap) -> ImageBuffer:
    """Render a label map with its palette's display colors."""
    top = int(labelmap.labels.max(initial=0))
    table = np.zeros((top + 1, 3), dtype=np.float32)
    for cid, (_, rgb) in labelmap.palette.items():
        if cid <= top:
            table[cid] = rgb
    return ImageBuffer(table[labelmap.labels])


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Relative inverse depth per pixel; larger means closer.  Scale is arbitrary."""

    values: np.ndarray  # (H, W) float32, finite, >= 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"disparity values must be 2-dimensional, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("disparity values must be finite")
        if float(arr.min()) < 0.0:
            raise ValueError("disparity values must be nonnegative")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def normalize_disparity(d: DisparityMap) -> ImageBuffer:
    """Rescale to [0, 1] by the map's own range; a constant map becomes 0.5."""
    values = d.values.astype(np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return ImageBuffer(np.full(values.shape + (1,), 0.5, dtype=np.float32))
    return ImageBuffer(np.clip((values - lo) / (hi - lo), 0.0, 1.0)[:, :, None])


def relight(
    image: ImageBuffer,
    d: DisparityMap,
    hue: float,
    saturation: float,
    strength: float,
) -> ImageBuffer:
    """Blend toward a screen composite with a sky-light layer built from disparity.

    The light layer is colorize(invert(normalize(d)), hue, saturation): far
    pixels (low disparity) receive bright light, near ones stay dark.  With
    screen(a, b) = 1 - (1-a)(1-b), the output is
    (1 - strength) * image + strength * screen(image, light).
    """
    if (image.width, image.height) != (d.width, d.height):
        raise ValueError(
            f"dimension mismatch: image {image.width}x{image.height}, disparity {d.width}x{d.height}"
        )
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    light = colorize(invert(normalize_disparity(d)), hue, saturation).data
    rgb = image.rgb()
    screened = 1.0 - (1.0 - rgb) * (1.0 - light)
    s = np.float32(strength)
    out = (1.0 - s) * rgb + s * screened
    if image.channels == 4:
        out = np.concatenate([out, image.data[:, :, 3:4]], axis=2)
    return ImageBuffer(np.clip(out, 0.0, 1.0))
