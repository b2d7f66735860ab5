"""Image buffers, layers, straight-alpha compositing, and layer/tensor conversion.

Pixels are normalized float32 in [0, 1] everywhere inside the engine; 8-bit
values exist only at file boundaries (see :mod:`gimpml.project`).  All types
are value-semantic: the wrapped numpy arrays are copied on construction and
marked read-only, so an operation can never mutate an existing layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImageBuffer",
    "Layer",
    "LayerStack",
    "Tensor",
    "to_tensor",
    "from_tensor",
    "composite",
    "add_layer",
]


def _own_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr).copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Owned raster of normalized pixels, stored as float32 (height, width, channels).

    Channels are interleaved and row-major; 1, 3, and 4 channels are supported.
    A 4th channel is straight (non-premultiplied) alpha.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2- or 3-dimensional, got ndim={arr.ndim}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"image dimensions must be at least 1x1, got {w}x{h}")
        if c not in (1, 3, 4):
            raise ValueError(f"unsupported channel count {c}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pixel values must be finite")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "data", _own_readonly(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def rgb(self) -> np.ndarray:
        """Color channels as (H, W, 3); gray is replicated, alpha is dropped."""
        if self.channels == 1:
            return np.repeat(self.data, 3, axis=2)
        return self.data[:, :, :3]

    def alpha(self) -> np.ndarray:
        """Alpha plane as (H, W); fully opaque when there is no alpha channel."""
        if self.channels == 4:
            return self.data[:, :, 3]
        return np.ones(self.data.shape[:2], dtype=np.float32)

    @staticmethod
    def full(width: int, height: int, color) -> "ImageBuffer":
        """Constant-color buffer; channel count follows len(color)."""
        color = np.asarray(color, dtype=np.float32).reshape(-1)
        return ImageBuffer(np.broadcast_to(color, (height, width, color.size)))


@dataclass(frozen=True, eq=False)
class Layer:
    """A named raster with opacity and offset, the unit of non-destructive editing."""

    name: str
    buffer: ImageBuffer
    opacity: float = 1.0
    visible: bool = True
    offset_x: int = 0
    offset_y: int = 0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("layer name must be nonempty")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"layer opacity must lie in [0, 1], got {self.opacity}")


@dataclass(frozen=True, eq=False)
class LayerStack:
    """Ordered layers over a canvas; index 0 is the bottom layer."""

    width: int
    height: int
    layers: tuple[Layer, ...] = ()

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"canvas dimensions must be at least 1x1, got {self.width}x{self.height}")
        object.__setattr__(self, "layers", tuple(self.layers))
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise ValueError(f"duplicate layer name {dup!r}")

    def names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"no layer named {name!r}")

    def __contains__(self, name: str) -> bool:
        return any(layer.name == name for layer in self.layers)


@dataclass(frozen=True, eq=False)
class Tensor:
    """Planar channel-major float32 array of shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"tensor data must be 3-dimensional (C, H, W), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        object.__setattr__(self, "data", _own_readonly(arr))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def to_tensor(layer: Layer, drop_alpha: bool = False) -> Tensor:
    """Convert a layer's buffer to a planar (C, H, W) tensor without resampling.

    With ``drop_alpha`` a 4-channel buffer loses its alpha plane and the color
    values pass through unchanged.
    """
    arr = layer.buffer.data
    if drop_alpha and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return Tensor(np.transpose(arr, (2, 0, 1)))


def from_tensor(t: Tensor, name: str) -> Layer:
    """Wrap a planar tensor into a fresh layer at the origin, clamping to [0, 1]."""
    c = t.shape[0]
    if c not in (1, 3, 4):
        raise ValueError(f"unsupported channel count {c}")
    buf = ImageBuffer(np.clip(np.transpose(t.data, (1, 2, 0)), 0.0, 1.0))
    return Layer(name=name, buffer=buf)


def add_layer(stack: LayerStack, layer: Layer) -> LayerStack:
    """Return a new stack with ``layer`` appended on top; existing layers are shared."""
    if layer.name in stack:
        raise ValueError(f"duplicate layer name {layer.name!r}")
    return LayerStack(stack.width, stack.height, stack.layers + (layer,))


def composite(stack: LayerStack) -> ImageBuffer:
    """Flatten a stack bottom-to-top with the straight-alpha over operator.

    Effective source alpha is pixel alpha times layer opacity.  Layers sit at
    their offsets; anywhere a layer does not cover is treated as transparent,
    and the result is cropped to the canvas.  Returns an RGBA buffer.
    """
    if not stack.layers:
        raise ValueError("cannot composite an empty stack")
    h, w = stack.height, stack.width
    acc_rgb = np.zeros((h, w, 3), dtype=np.float32)
    acc_a = np.zeros((h, w), dtype=np.float32)

    for layer in stack.layers:
        if not layer.visible or layer.opacity == 0.0:
            continue
        buf = layer.buffer
        x0 = max(layer.offset_x, 0)
        y0 = max(layer.offset_y, 0)
        x1 = min(layer.offset_x + buf.width, w)
        y1 = min(layer.offset_y + buf.height, h)
        if x0 >= x1 or y0 >= y1:
            continue
        src = buf.data[y0 - layer.offset_y : y1 - layer.offset_y, x0 - layer.offset_x : x1 - layer.offset_x]
        if buf.channels == 1:
            cs = np.repeat(src, 3, axis=2)
            a_px = np.ones(src.shape[:2], dtype=np.float32)
        elif buf.channels == 3:
            cs = src
            a_px = np.ones(src.shape[:2], dtype=np.float32)
        else:
            cs = src[:, :, :3]
            a_px = src[:, :, 3]

        a_s = a_px * np.float32(layer.opacity)
        a_b = acc_a[y0:y1, x0:x1]
        c_b = acc_rgb[y0:y1, x0:x1]
        a_o = a_s + a_b * (1.0 - a_s)
        num = a_s[:, :, None] * cs + ((1.0 - a_s) * a_b)[:, :, None] * c_b
        c_o = np.divide(num, a_o[:, :, None], out=np.zeros_like(num), where=a_o[:, :, None] > 0)
        acc_rgb[y0:y1, x0:x1] = c_o
        acc_a[y0:y1, x0:x1] = a_o

    out = np.concatenate([acc_rgb, acc_a[:, :, None]], axis=2)
    return ImageBuffer(np.clip(out, 0.0, 1.0))
