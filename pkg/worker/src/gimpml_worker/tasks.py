"""Deterministic mirror implementations of the stub task suite.

These follow the published stub definitions exactly (same formulas, seeds,
and tie-breaks) so responses agree with the in-process engine stub within
1e-5 per pixel; Echo and the integer label maps agree exactly.  The code is
written against the task documentation, not shared with the engine.

Task ids (wire ordinals):

    0 face-parse   rgb -> 19-class label map (kmeans over color+position,
                   clusters re-ranked by centroid luma)
    1 deblur       rgb -> rgb (unsharp mask: x + 0.5 * (x - blur(x, 2)))
    2 face-gen     rgb, labels, labels -> rgb (copy where masks agree, class
                   color where they differ)
    3 deep-color   gray-or-rgb, hint rgba -> rgb (keep luma, IDW-2 chroma)
    4 mono-depth   rgb -> disparity (min-max normalized luma, constant -> 0.5)
    5 super-res    rgb (+ scale param 2/3/4) -> rgb (Catmull-Rom bicubic)
    6 sem-seg      rgb -> 21-class label map (as face-parse)
    7 dehaze       rgb -> rgb (per-channel min-max stretch)
    8 matting      rgb, trimap -> alpha (fg 1, bg 0, unknown = blur(sigma 3)
                   of the 0.5-filled hard mask)
    9 denoise      rgb -> rgb (gaussian blur, sigma 1)
   10 enlighten    rgb -> rgb (gamma 0.5)
   11 echo         any -> same
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist

from .wire import TaskRejected

FACE_CLASSES = 19
VOC_CLASSES = 21

_LUMA = (0.299, 0.587, 0.114)


def _luma_of(planes: np.ndarray) -> np.ndarray:
    if planes.shape[0] == 1:
        return planes[0].astype(np.float64)
    r, g, b = _LUMA
    return r * planes[0].astype(np.float64) + g * planes[1] + b * planes[2]


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


# --- separable gaussian with clamp-to-edge padding ----------------------------


def _gaussian_taps(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _blur_axis(plane: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    radius = len(taps) // 2
    pad = [(0, 0)] * plane.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(plane, pad, mode="edge")
    out = np.zeros_like(plane, dtype=np.float64)
    for i, tap in enumerate(taps):
        out += tap * np.take(padded, np.arange(i, i + plane.shape[axis]), axis=axis)
    return out


def _blur(plane: np.ndarray, sigma: float) -> np.ndarray:
    taps = _gaussian_taps(sigma)
    return _blur_axis(_blur_axis(plane.astype(np.float64), taps, 0), taps, 1)


def _blur_planes(planes: np.ndarray, sigma: float) -> np.ndarray:
    return np.stack([_blur(p, sigma) for p in planes])


# --- Catmull-Rom bicubic with linear-extrapolation borders --------------------


def _cubic_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    t2, t3 = t * t, t * t * t
    return (
        (-t3 + 2 * t2 - t) / 2,
        (3 * t3 - 5 * t2 + 2) / 2,
        (-3 * t3 + 4 * t2 + t) / 2,
        (t3 - t2) / 2,
    )


def _extend_linear(arr: np.ndarray, axis: int) -> np.ndarray:
    first = np.take(arr, [0], axis=axis)
    if arr.shape[axis] == 1:
        return np.concatenate([first, first, arr, first, first], axis=axis)
    second = np.take(arr, [1], axis=axis)
    last = np.take(arr, [arr.shape[axis] - 1], axis=axis)
    penult = np.take(arr, [arr.shape[axis] - 2], axis=axis)
    lo1 = 2 * first - second
    lo2 = 3 * first - 2 * second
    hi1 = 2 * last - penult
    hi2 = 3 * last - 2 * penult
    return np.concatenate([lo2, lo1, arr, hi1, hi2], axis=axis)


def _upscale_axis(arr: np.ndarray, scale: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    x = (np.arange(n * scale, dtype=np.float64) + 0.5) / scale - 0.5
    left = np.floor(x).astype(np.int64)
    frac = x - left
    weights = _cubic_weights(frac)
    padded = _extend_linear(arr, axis)
    shape = [1] * arr.ndim
    shape[axis] = -1
    total = np.zeros(arr.shape[:axis] + (n * scale,) + arr.shape[axis + 1 :], dtype=np.float64)
    for tap in range(4):
        gathered = np.take(padded, left + 1 + tap, axis=axis)
        total += weights[tap].reshape(shape) * gathered
    return total


def _bicubic(planes: np.ndarray, scale: int) -> np.ndarray:
    out = planes.astype(np.float64)
    out = _upscale_axis(out, scale, 1)
    out = _upscale_axis(out, scale, 2)
    return np.clip(out, 0.0, 1.0)


# --- kmeans (kmeans++ seeding, squared Euclidean, documented tie-breaks) ------


def _kmeans_labels(features: np.ndarray, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    n = features.shape[0]
    rng = np.random.default_rng(seed)
    centers = np.empty((k, features.shape[1]), dtype=np.float64)
    centers[0] = features[rng.integers(n)]
    d2 = cdist(features, centers[:1], "sqeuclidean")[:, 0]
    for j in range(1, k):
        total = d2.sum()
        pick = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[j] = features[pick]
        d2 = np.minimum(d2, cdist(features, centers[j : j + 1], "sqeuclidean")[:, 0])

    labels = np.zeros(n, dtype=np.int64)
    previous = math.inf
    for _ in range(100):
        dist = cdist(features, centers, "sqeuclidean")
        labels = dist.argmin(axis=1)  # argmin takes the lowest index on ties
        point_d2 = dist[np.arange(n), labels]
        sse = float(point_d2.sum())
        counts = np.bincount(labels, minlength=k)
        for dim in range(features.shape[1]):
            sums = np.bincount(labels, weights=features[:, dim], minlength=k)
            centers[counts > 0, dim] = sums[counts > 0] / counts[counts > 0]
        if (counts == 0).any():
            worst_first = np.argsort(-point_d2, kind="stable")
            refill = iter(worst_first)
            for empty in np.flatnonzero(counts == 0):
                centers[empty] = features[next(refill)]
        if sse == 0.0 or (previous < math.inf and previous > 0 and (previous - sse) / previous < 1e-6):
            break
        previous = sse
    return labels, centers


def _segmentation(planes: np.ndarray, class_count: int, params: dict) -> list[np.ndarray]:
    _, h, w = planes.shape
    n = h * w
    k = min(class_count, n)
    seed = int(params.get("seed", 0))
    colors = planes.reshape(3, n).T.astype(np.float64)
    ys, xs = np.mgrid[0:h, 0:w]
    features = np.concatenate(
        [colors, (xs.reshape(n, 1) / w).astype(np.float64), (ys.reshape(n, 1) / h).astype(np.float64)],
        axis=1,
    )
    labels, centers = _kmeans_labels(features, k, seed)
    r, g, b = _LUMA
    center_luma = r * centers[:, 0] + g * centers[:, 1] + b * centers[:, 2]
    rank = np.empty(k, dtype=np.int64)
    rank[np.argsort(center_luma, kind="stable")] = np.arange(k)
    return [rank[labels].reshape(1, h, w).astype(np.float32)]


# --- hint parsing (flood fill over alpha > 0, 4-connectivity) ------------------


def _hint_dots(rgba: np.ndarray) -> list[tuple[int, int, np.ndarray]]:
    _, h, w = rgba.shape
    alpha = rgba[3] > 0
    seen = np.zeros((h, w), dtype=bool)
    dots = []
    for sy in range(h):
        for sx in range(w):
            if not alpha[sy, sx] or seen[sy, sx]:
                continue
            queue = [(sy, sx)]
            seen[sy, sx] = True
            member_y, member_x = [], []
            while queue:
                y, x = queue.pop()
                member_y.append(y)
                member_x.append(x)
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and alpha[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            ys = np.asarray(member_y, dtype=np.float64)
            xs = np.asarray(member_x, dtype=np.float64)
            cx = int(math.floor(xs.mean() + 0.5))  # round half up
            cy = int(math.floor(ys.mean() + 0.5))
            color = rgba[:3, member_y, member_x].astype(np.float64).mean(axis=1)
            dots.append((cx, cy, color))
    return dots


# --- class palette (bit-interleave colormap over the face class ids) ----------


def _class_color(cid: int) -> np.ndarray:
    r = g = b = 0
    value = cid
    for shift in range(8):
        r |= ((value >> 0) & 1) << (7 - shift)
        g |= ((value >> 1) & 1) << (7 - shift)
        b |= ((value >> 2) & 1) << (7 - shift)
        value >>= 3
    return np.array([r, g, b], dtype=np.float64) / 255.0


# --- per-task handlers ---------------------------------------------------------


def _need(tensors, count, task):
    if len(tensors) != count:
        raise TaskRejected(f"{task} expects {count} tensor(s), got {len(tensors)}")


def _need_rgb(tensor, task):
    if tensor.shape[0] != 3:
        raise TaskRejected(f"{task} expects a 3-channel tensor, got {tensor.shape[0]}")


def run_face_parse(tensors, params):
    _need(tensors, 1, "face-parse")
    _need_rgb(tensors[0], "face-parse")
    return _segmentation(tensors[0], FACE_CLASSES, params)


def run_sem_seg(tensors, params):
    _need(tensors, 1, "sem-seg")
    _need_rgb(tensors[0], "sem-seg")
    return _segmentation(tensors[0], VOC_CLASSES, params)


def run_deblur(tensors, params):
    _need(tensors, 1, "deblur")
    _need_rgb(tensors[0], "deblur")
    x = tensors[0].astype(np.float64)
    sharp = x + 0.5 * (x - _blur_planes(x, 2.0))
    return [np.clip(sharp, 0.0, 1.0).astype(np.float32)]


def run_denoise(tensors, params):
    _need(tensors, 1, "denoise")
    _need_rgb(tensors[0], "denoise")
    return [np.clip(_blur_planes(tensors[0], 1.0), 0.0, 1.0).astype(np.float32)]


def run_dehaze(tensors, params):
    _need(tensors, 1, "dehaze")
    _need_rgb(tensors[0], "dehaze")
    planes = tensors[0].astype(np.float64)
    out = np.stack([p if p.max() == p.min() else (p - p.min()) / (p.max() - p.min()) for p in planes])
    return [np.clip(out, 0.0, 1.0).astype(np.float32)]


def run_enlighten(tensors, params):
    _need(tensors, 1, "enlighten")
    _need_rgb(tensors[0], "enlighten")
    return [np.sqrt(tensors[0]).astype(np.float32)]


def run_mono_depth(tensors, params):
    _need(tensors, 1, "mono-depth")
    _need_rgb(tensors[0], "mono-depth")
    return [_minmax(_luma_of(tensors[0]))[None].astype(np.float32)]


def run_super_res(tensors, params):
    _need(tensors, 1, "super-res")
    _need_rgb(tensors[0], "super-res")
    if "scale" not in params:
        raise TaskRejected("super-res requires param 'scale'")
    scale = params["scale"]
    if scale not in (2.0, 3.0, 4.0):
        raise TaskRejected(f"super-res scale must be 2, 3, or 4, got {scale}")
    return [_bicubic(tensors[0], int(scale)).astype(np.float32)]


def run_deep_color(tensors, params):
    _need(tensors, 2, "deep-color")
    if tensors[0].shape[0] not in (1, 3):
        raise TaskRejected("deep-color expects a 1- or 3-channel image")
    if tensors[1].shape[0] != 4:
        raise TaskRejected("deep-color expects an RGBA hint tensor")
    if tensors[0].shape[1:] != tensors[1].shape[1:]:
        raise TaskRejected("deep-color image and hint sizes differ")
    luma = _luma_of(tensors[0])
    h, w = luma.shape
    gray = np.repeat(luma[None], 3, axis=0)
    dots = _hint_dots(tensors[1])
    if not dots:
        return [np.clip(gray, 0.0, 1.0).astype(np.float32)]

    r, g, b = _LUMA
    chromas = []
    for _, _, color in dots:
        chromas.append(color - (r * color[0] + g * color[1] + b * color[2]))
    chromas = np.asarray(chromas)
    ys, xs = np.mgrid[0:h, 0:w]
    interp = np.zeros((3, h, w), dtype=np.float64)
    weight_sum = np.zeros((h, w), dtype=np.float64)
    exact = {}
    for i, (cx, cy, _) in enumerate(dots):
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        hit = d2 == 0
        if hit.any():
            exact[(cy, cx)] = i
        with np.errstate(divide="ignore"):
            weight = 1.0 / d2
        weight[hit] = 0.0
        weight_sum += weight
        interp += weight[None] * chromas[i][:, None, None]
    interp /= np.maximum(weight_sum, 1e-300)[None]
    for (cy, cx), i in exact.items():
        interp[:, cy, cx] = chromas[i]
    return [np.clip(gray + interp, 0.0, 1.0).astype(np.float32)]


def run_face_gen(tensors, params):
    _need(tensors, 3, "face-gen")
    _need_rgb(tensors[0], "face-gen")
    for t in tensors[1:]:
        if t.shape[0] != 1:
            raise TaskRejected("face-gen masks must be 1-channel label maps")
        if t.shape[1:] != tensors[0].shape[1:]:
            raise TaskRejected("face-gen mask size differs from the image")
    original = np.rint(tensors[1][0].astype(np.float64)).astype(np.int64)
    modified = np.rint(tensors[2][0].astype(np.float64)).astype(np.int64)
    for name, ids in (("original", original), ("modified", modified)):
        if ids.min(initial=0) < 0 or ids.max(initial=0) >= FACE_CLASSES:
            raise TaskRejected(f"{name} mask has class id outside [0, {FACE_CLASSES - 1}]")
    palette = np.stack([_class_color(i) for i in range(FACE_CLASSES)])
    painted = palette[modified].transpose(2, 0, 1)
    changed = (original != modified)[None]
    return [np.where(changed, painted, tensors[0].astype(np.float64)).astype(np.float32)]


def run_matting(tensors, params):
    _need(tensors, 2, "matting")
    _need_rgb(tensors[0], "matting")
    trimap = tensors[1]
    if trimap.shape[0] not in (1, 3):
        raise TaskRejected("matting trimap must have 1 or 3 channels")
    if trimap.shape[1:] != tensors[0].shape[1:]:
        raise TaskRejected("matting trimap size differs from the image")
    scaled = trimap.astype(np.float64) * 255.0
    level = np.rint(scaled)
    bad = (np.abs(scaled - level) > 1e-3) | ~np.isin(level, (0.0, 128.0, 255.0))
    bad = bad.any(axis=0) | (level != level[:1]).any(axis=0)
    if bad.any():
        y, x = np.unravel_index(int(bad.argmax()), bad.shape)
        raise TaskRejected(
            f"invalid trimap value {int(level[0, y, x])} at pixel ({x}, {y}); expected 0, 128, or 255"
        )
    fg = level[0] == 255.0
    bg = level[0] == 0.0
    hard = np.where(fg, 1.0, np.where(bg, 0.0, 0.5))
    feathered = np.clip(_blur(hard, 3.0), 0.0, 1.0)
    alpha = np.where(fg, 1.0, np.where(bg, 0.0, feathered))
    return [alpha[None].astype(np.float32)]


def run_echo(tensors, params):
    return list(tensors)


HANDLERS = {
    0: run_face_parse,
    1: run_deblur,
    2: run_face_gen,
    3: run_deep_color,
    4: run_mono_depth,
    5: run_super_res,
    6: run_sem_seg,
    7: run_dehaze,
    8: run_matting,
    9: run_denoise,
    10: run_enlighten,
    11: run_echo,
}

TASK_NAMES = {
    0: "face-parse", 1: "deblur", 2: "face-gen", 3: "deep-color", 4: "mono-depth",
    5: "super-res", 6: "sem-seg", 7: "dehaze", 8: "matting", 9: "denoise",
    10: "enlighten", 11: "echo",
}


def dispatch(task_id: int, tensors, params) -> list[np.ndarray]:
    if task_id not in HANDLERS:
        raise TaskRejected(f"unknown task id {task_id}")
    return HANDLERS[task_id](tensors, params)
