"""Classical image operations: clustering, color transforms, filtering, resampling.

Everything here is a pure function of its inputs.  Color math follows legacy
editor conventions: Rec. 601 luma, HSL for hue/saturation edits, values kept
as nonlinear sRGB (no linearization before blending).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .core import ImageBuffer

__all__ = [
    "KMeansConfig",
    "KMeansResult",
    "RegionMask",
    "kmeans_cluster",
    "run_lloyd",
    "grayscale",
    "desaturate",
    "invert",
    "colorize",
    "gaussian_blur",
    "hue_saturation",
    "edge_detect",
    "selective_apply",
    "resize_bicubic",
]

# Rec. 601 luma weights, the legacy desaturate default.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class KMeansConfig:
    """Parameters for color clustering.

    ``use_position`` appends (x/width, y/height) to each pixel's features so
    color and position are commensurate.
    """

    k: int
    use_position: bool = False
    max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.tol < 0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")


@dataclass(frozen=True, eq=False)
class KMeansResult:
    """Raw Lloyd's-algorithm output: centers (k, d), labels (n,), SSE per iteration."""

    centers: np.ndarray
    labels: np.ndarray
    sse_history: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Per-pixel coverage weights in [0, 1] used for selective edits."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.weights, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"mask weights must be 2-dimensional, got ndim={arr.ndim}")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("mask weights must lie in [0, 1]")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def height(self) -> int:
        return self.weights.shape[0]


def _kmeans_pp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]), dtype=np.float64)
    centers[0] = features[rng.integers(n)]
    d2 = cdist(features, centers[:1], "sqeuclidean")[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[j] = features[idx]
        d2 = np.minimum(d2, cdist(features, centers[j : j + 1], "sqeuclidean")[:, 0])
    return centers


def run_lloyd(
    features: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> KMeansResult:
    """Lloyd's algorithm with kmeans++ seeding over squared Euclidean distance.

    Ties in the nearest-centroid step break toward the lowest index.  A cluster
    that empties is re-seeded to the point farthest from its assigned centroid.
    Stops after ``max_iter`` rounds or when the relative SSE decrease falls
    below ``tol``.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")

    centers = _kmeans_pp_init(features, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    prev_sse = math.inf
    for _ in range(max_iter):
        dists = cdist(features, centers, "sqeuclidean")
        labels = np.argmin(dists, axis=1)
        point_d2 = dists[np.arange(n), labels]
        sse = float(point_d2.sum())
        if sse > prev_sse * (1.0 + 1e-12):
            raise AssertionError("kmeans SSE increased between iterations")
        history.append(sse)

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, features)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # Re-seed each empty cluster to the currently worst-fit point.
            order = np.argsort(-point_d2, kind="stable")
            take = iter(order)
            for ci in np.flatnonzero(~nonempty):
                centers[ci] = features[next(take)]

        if sse == 0.0 or (prev_sse < math.inf and prev_sse > 0 and (prev_sse - sse) / prev_sse < tol):
            break
        prev_sse = sse

    return KMeansResult(centers=centers, labels=labels, sse_history=tuple(history))


def kmeans_cluster(image: ImageBuffer, cfg: KMeansConfig):
    """Quantize an image to ``cfg.k`` centroid colors.

    Returns the quantized image and a label map of cluster assignments.  The
    feature vector per pixel is its channel values, optionally extended with
    normalized (x, y) position; position components never reach the output
    colors.
    """
    from .maps import LabelMap  # local import, maps depends on ops

    if image.channels not in (1, 3):
        raise ValueError(f"kmeans expects 1- or 3-channel images, got {image.channels}")
    h, w, c = image.data.shape
    n = h * w
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds pixel count {n}")

    feats = image.data.reshape(n, c).astype(np.float64)
    if cfg.use_position:
        ys, xs = np.mgrid[0:h, 0:w]
        pos = np.stack([xs.reshape(n) / w, ys.reshape(n) / h], axis=1)
        feats = np.concatenate([feats, pos], axis=1)

    rng = np.random.default_rng(cfg.seed)
    result = run_lloyd(feats, cfg.k, rng, max_iter=cfg.max_iter, tol=cfg.tol)

    colors = np.clip(result.centers[:, :c], 0.0, 1.0).astype(np.float32)
    out = ImageBuffer(colors[result.labels].reshape(h, w, c))
    palette = {}
    for i in range(cfg.k):
        rgb = colors[i] if c == 3 else np.repeat(colors[i], 3)
        palette[i] = (f"cluster_{i}", (float(rgb[0]), float(rgb[1]), float(rgb[2])))
    labels = LabelMap(result.labels.reshape(h, w), palette)
    return out, labels


def _luma(rgb: np.ndarray) -> np.ndarray:
    r, g, b = LUMA_WEIGHTS
    return (r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]).astype(np.float32)


def grayscale(image: ImageBuffer) -> ImageBuffer:
    """Single-channel Rec. 601 luma; a gray input passes through."""
    if image.channels == 1:
        return ImageBuffer(image.data)
    return ImageBuffer(_luma(image.data)[:, :, None])


def desaturate(image: ImageBuffer) -> ImageBuffer:
    """Replace color with luma on all color channels, keeping alpha if present."""
    if image.channels == 1:
        y = image.data[:, :, 0]
    else:
        y = _luma(image.data)
    gray3 = np.repeat(y[:, :, None], 3, axis=2)
    if image.channels == 4:
        return ImageBuffer(np.concatenate([gray3, image.data[:, :, 3:4]], axis=2))
    return ImageBuffer(gray3)


def invert(image: ImageBuffer) -> ImageBuffer:
    """Per color channel v -> 1 - v; alpha untouched."""
    if image.channels == 4:
        return ImageBuffer(np.concatenate([1.0 - image.data[:, :, :3], image.data[:, :, 3:4]], axis=2))
    return ImageBuffer(1.0 - image.data)


def _hsl_to_rgb(h: np.ndarray, s: np.ndarray, l: np.ndarray) -> np.ndarray:
    hp = (np.asarray(h, dtype=np.float64) % 360.0) / 60.0
    s = np.asarray(s, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    c = (1.0 - np.abs(2.0 * l - 1.0)) * s
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    m = l - c / 2.0
    zeros = np.zeros_like(c)
    sector = np.floor(hp).astype(np.int64) % 6
    r = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4, sector == 5],
                  [c, x, zeros, zeros, x, c])
    g = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4, sector == 5],
                  [x, c, c, x, zeros, zeros])
    b = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4, sector == 5],
                  [zeros, zeros, x, c, c, x])
    return np.stack([r + m, g + m, b + m], axis=-1)


def _rgb_to_hsl(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = np.asarray(rgb, dtype=np.float64)
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    l = (maxc + minc) / 2.0
    c = maxc - minc
    denom = 1.0 - np.abs(2.0 * l - 1.0)
    s = np.divide(c, denom, out=np.zeros_like(c), where=denom > 0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe_c = np.where(c > 0, c, 1.0)
    h_r = ((g - b) / safe_c) % 6.0
    h_g = (b - r) / safe_c + 2.0
    h_b = (r - g) / safe_c + 4.0
    h = np.select([c == 0, maxc == r, maxc == g], [np.zeros_like(l), h_r, h_g], default=h_b) * 60.0
    return h, np.clip(s, 0.0, 1.0), l


def colorize(gray: ImageBuffer, hue: float, saturation: float) -> ImageBuffer:
    """Tint a single-channel image: HSL -> RGB with H=hue, S=saturation, L=gray value."""
    if gray.channels != 1:
        raise ValueError(f"colorize expects a 1-channel image, got {gray.channels}")
    l = gray.data[:, :, 0]
    h = np.full_like(l, hue, dtype=np.float64)
    s = np.full_like(l, saturation, dtype=np.float64)
    return ImageBuffer(np.clip(_hsl_to_rgb(h, s, l), 0.0, 1.0))


def hue_saturation(
    image: ImageBuffer,
    hue_shift: float = 0.0,
    sat_scale: float = 1.0,
    lightness_shift: float = 0.0,
) -> ImageBuffer:
    """Shift hue (degrees, modular), scale saturation, and shift lightness in HSL."""
    if image.channels not in (3, 4):
        raise ValueError(f"hue_saturation expects 3 or 4 channels, got {image.channels}")
    if sat_scale < 0:
        raise ValueError(f"sat_scale must be nonnegative, got {sat_scale}")
    h, s, l = _rgb_to_hsl(image.data[:, :, :3])
    h = (h + hue_shift) % 360.0
    s = np.clip(s * sat_scale, 0.0, 1.0)
    l = np.clip(l + lightness_shift, 0.0, 1.0)
    rgb = np.clip(_hsl_to_rgb(h, s, l), 0.0, 1.0)
    if image.channels == 4:
        return ImageBuffer(np.concatenate([rgb.astype(np.float32), image.data[:, :, 3:4]], axis=2))
    return ImageBuffer(rgb)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return kern / kern.sum()


def gaussian_blur(image: ImageBuffer, sigma: float) -> ImageBuffer:
    """Separable Gaussian with radius ceil(3*sigma) and clamp-to-edge padding.

    sigma = 0 returns the input unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return image
    kern = _gaussian_kernel(sigma)
    arr = image.data.astype(np.float64)
    arr = ndimage.convolve1d(arr, kern, axis=0, mode="nearest")
    arr = ndimage.convolve1d(arr, kern, axis=1, mode="nearest")
    return ImageBuffer(np.clip(arr, 0.0, 1.0))


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def edge_detect(image: ImageBuffer) -> ImageBuffer:
    """Sobel gradient magnitude on luma, normalized so the strongest edge is 1."""
    y = grayscale(image).data[:, :, 0].astype(np.float64)
    gx = ndimage.convolve(y, _SOBEL_X, mode="nearest")
    gy = ndimage.convolve(y, _SOBEL_X.T, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag /= peak
    return ImageBuffer(np.clip(mag, 0.0, 1.0)[:, :, None])


def selective_apply(base: ImageBuffer, processed: ImageBuffer, mask: RegionMask) -> ImageBuffer:
    """Blend ``processed`` over ``base`` with per-pixel weights from ``mask``."""
    if (base.width, base.height) != (processed.width, processed.height) or (
        base.width,
        base.height,
    ) != (mask.width, mask.height):
        raise ValueError(
            f"dimension mismatch: base {base.width}x{base.height}, "
            f"processed {processed.width}x{processed.height}, mask {mask.width}x{mask.height}"
        )
    if base.channels != processed.channels:
        raise ValueError(f"channel mismatch: base {base.channels}, processed {processed.channels}")
    w = mask.weights[:, :, None]
    return ImageBuffer(w * processed.data + (1.0 - w) * base.data)


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    w0 = (-t3 + 2.0 * t2 - t) / 2.0
    w1 = (3.0 * t3 - 5.0 * t2 + 2.0) / 2.0
    w2 = (-3.0 * t3 + 4.0 * t2 + t) / 2.0
    w3 = (t3 - t2) / 2.0
    return np.stack([w0, w1, w2, w3], axis=-1)


def _pad_linear(arr: np.ndarray, axis: int, amount: int) -> np.ndarray:
    # Linear extrapolation keeps Catmull-Rom exact on linear ramps at the borders.
    if arr.shape[axis] == 1:
        reps = [1] * arr.ndim
        edge_lo = np.take(arr, [0], axis=axis)
        reps[axis] = amount
        pad = np.tile(edge_lo, reps)
        return np.concatenate([pad, arr, pad], axis=axis)
    first = np.take(arr, [0], axis=axis)
    second = np.take(arr, [1], axis=axis)
    last = np.take(arr, [arr.shape[axis] - 1], axis=axis)
    penult = np.take(arr, [arr.shape[axis] - 2], axis=axis)
    lo = [first - (k + 1) * (second - first) for k in range(amount)]
    hi = [last + (k + 1) * (last - penult) for k in range(amount)]
    return np.concatenate(list(reversed(lo)) + [arr] + hi, axis=axis)


def _upsample_axis(arr: np.ndarray, axis: int, scale: int) -> np.ndarray:
    n = arr.shape[axis]
    coords = (np.arange(n * scale, dtype=np.float64) + 0.5) / scale - 0.5
    base = np.floor(coords).astype(np.int64)
    t = coords - base
    weights = _catmull_rom_weights(t)  # (m, 4)
    padded = _pad_linear(arr, axis, 2)
    moved = np.moveaxis(padded, axis, 0)
    taps = [moved[base + 1 + k] for k in range(4)]  # +2 pad offset, -1 left tap
    wshape = (-1,) + (1,) * (moved.ndim - 1)
    out = sum(w.reshape(wshape) * tap for w, tap in zip(weights.T, taps))
    return np.moveaxis(out, 0, axis)


def resize_bicubic(image: ImageBuffer, scale: int) -> ImageBuffer:
    """Catmull-Rom bicubic upscaling by an integer factor of 2, 3, or 4."""
    if scale not in (2, 3, 4):
        raise ValueError(f"unsupported scale {scale}; expected 2, 3, or 4")
    arr = image.data.astype(np.float64)
    arr = _upsample_axis(arr, 0, scale)
    arr = _upsample_axis(arr, 1, scale)
    return ImageBuffer(np.clip(arr, 0.0, 1.0))
