"""Task registry for the ML-backed tools, device policy, and the stub backend.

Each task is a typed contract (input tensor roles, output tensor roles, scalar
params).  The stub backend satisfies every contract with a documented,
deterministic classical approximation so that pipelines, tests, and golden
files run without any network weights.  Real models live behind the same
interface in an external worker (see :mod:`gimpml.protocol`).

Error categories are deliberately split: :class:`TaskError` means the request
itself was bad (wrong shapes, bad params), :class:`TransportError` means the
backend could not be reached.  Pipelines may retry the latter, never the
former.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .core import ImageBuffer, Tensor
from .maps import (
    FACE_PALETTE,
    TRIMAP_BACKGROUND,
    TRIMAP_FOREGROUND,
    VOC_PALETTE,
    decode_trimap,
    parse_hint_layer,
)
from .ops import KMeansConfig, gaussian_blur, kmeans_cluster, resize_bicubic

__all__ = [
    "TaskKind",
    "Role",
    "TaskSignature",
    "SIGNATURES",
    "DevicePolicy",
    "resolve_device",
    "TaskRequest",
    "TaskResponse",
    "TaskError",
    "TransportError",
    "Backend",
    "StubBackend",
    "validate_request",
]


class TaskKind(enum.IntEnum):
    """The supported inference tasks; the integer value is the wire id."""

    FACE_PARSE = 0
    DEBLUR = 1
    FACE_GEN = 2
    DEEP_COLOR = 3
    MONO_DEPTH = 4
    SUPER_RES = 5
    SEM_SEG = 6
    DEHAZE = 7
    MATTING = 8
    DENOISE = 9
    ENLIGHTEN = 10
    ECHO = 11


class Role(enum.Enum):
    RGB = "rgb"
    GRAY_OR_RGB = "gray-or-rgb"
    HINT_RGBA = "hint-rgba"
    LABEL_MAP = "labelmap"
    TRIMAP = "trimap"
    DISPARITY = "disparity"
    ALPHA = "alpha"
    ANY = "any"


@dataclass(frozen=True)
class TaskSignature:
    inputs: tuple[Role, ...]
    outputs: tuple[Role, ...]
    required_params: tuple[str, ...] = ()


SIGNATURES: dict[TaskKind, TaskSignature] = {
    TaskKind.FACE_PARSE: TaskSignature((Role.RGB,), (Role.LABEL_MAP,)),
    TaskKind.DEBLUR: TaskSignature((Role.RGB,), (Role.RGB,)),
    TaskKind.FACE_GEN: TaskSignature((Role.RGB, Role.LABEL_MAP, Role.LABEL_MAP), (Role.RGB,)),
    TaskKind.DEEP_COLOR: TaskSignature((Role.GRAY_OR_RGB, Role.HINT_RGBA), (Role.RGB,)),
    TaskKind.MONO_DEPTH: TaskSignature((Role.RGB,), (Role.DISPARITY,)),
    TaskKind.SUPER_RES: TaskSignature((Role.RGB,), (Role.RGB,), required_params=("scale",)),
    TaskKind.SEM_SEG: TaskSignature((Role.RGB,), (Role.LABEL_MAP,)),
    TaskKind.DEHAZE: TaskSignature((Role.RGB,), (Role.RGB,)),
    TaskKind.MATTING: TaskSignature((Role.RGB, Role.TRIMAP), (Role.ALPHA,)),
    TaskKind.DENOISE: TaskSignature((Role.RGB,), (Role.RGB,)),
    TaskKind.ENLIGHTEN: TaskSignature((Role.RGB,), (Role.RGB,)),
    TaskKind.ECHO: TaskSignature((Role.ANY,), (Role.ANY,)),
}

FACE_CLASS_COUNT = len(FACE_PALETTE)  # 19
VOC_CLASS_COUNT = len(VOC_PALETTE)  # 21, background included


class DevicePolicy(enum.IntEnum):
    """CPU by default, accelerator when available, with a force-CPU override."""

    AUTO = 0
    FORCE_CPU = 1


def resolve_device(policy: DevicePolicy, accelerator_available: bool) -> str:
    """Pick the execution device: 'gpu' only for AUTO with an accelerator present."""
    if policy == DevicePolicy.FORCE_CPU:
        return "cpu"
    return "gpu" if accelerator_available else "cpu"


@dataclass(frozen=True, eq=False)
class TaskRequest:
    task: TaskKind
    device: DevicePolicy = DevicePolicy.AUTO
    params: Mapping[str, float] = field(default_factory=dict)
    tensors: tuple[Tensor, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "tensors", tuple(self.tensors))


@dataclass(frozen=True, eq=False)
class TaskResponse:
    """Successful task result; failures travel as exceptions / error frames."""

    tensors: tuple[Tensor, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tensors", tuple(self.tensors))


class TaskError(Exception):
    """The request was malformed or semantically invalid for its task."""


class TransportError(Exception):
    """The backend could not be reached or the wire format broke down."""


class Backend(Protocol):
    def run_task(self, request: TaskRequest) -> TaskResponse: ...

    def accelerator_available(self) -> bool: ...


_CHANNELS_BY_ROLE = {
    Role.RGB: (3,),
    Role.GRAY_OR_RGB: (1, 3),
    Role.HINT_RGBA: (4,),
    Role.LABEL_MAP: (1,),
    Role.TRIMAP: (1, 3),
    Role.DISPARITY: (1,),
    Role.ALPHA: (1,),
}


def validate_request(request: TaskRequest) -> None:
    """Check tensor count, channel counts, spatial agreement, and required params."""
    sig = SIGNATURES[request.task]
    if sig.inputs == (Role.ANY,):
        return
    if len(request.tensors) != len(sig.inputs):
        raise TaskError(
            f"{request.task.name} expects {len(sig.inputs)} tensor(s), got {len(request.tensors)}"
        )
    for i, (role, tensor) in enumerate(zip(sig.inputs, request.tensors)):
        allowed = _CHANNELS_BY_ROLE[role]
        if tensor.shape[0] not in allowed:
            raise TaskError(
                f"{request.task.name} input {i} ({role.value}) expects channels in {allowed}, "
                f"got {tensor.shape[0]}"
            )
        if tensor.shape[1:] != request.tensors[0].shape[1:]:
            raise TaskError(
                f"{request.task.name} input {i} has size {tensor.shape[1:]}, "
                f"expected {request.tensors[0].shape[1:]}"
            )
    for name in sig.required_params:
        if name not in request.params:
            raise TaskError(f"{request.task.name} requires param {name!r}")


def _tensor_to_buffer(t: Tensor) -> ImageBuffer:
    return ImageBuffer(np.clip(np.transpose(t.data, (1, 2, 0)), 0.0, 1.0))


def _buffer_to_tensor(buf: ImageBuffer) -> Tensor:
    return Tensor(np.transpose(buf.data, (2, 0, 1)))


def _luma_plane(t: Tensor) -> np.ndarray:
    if t.shape[0] == 1:
        return t.data[0]
    r, g, b = 0.299, 0.587, 0.114
    return (r * t.data[0] + g * t.data[1] + b * t.data[2]).astype(np.float32)


class StubBackend:
    """Deterministic classical fallback for every task contract.

    The behaviors are fixed and documented (see each ``_task_*`` method); they
    satisfy the shape and range contracts of the real models without imitating
    their quality.  Runs entirely on the CPU.
    """

    def accelerator_available(self) -> bool:
        return False

    def run_task(self, request: TaskRequest) -> TaskResponse:
        validate_request(request)
        handler = getattr(self, f"_task_{request.task.name.lower()}")
        return TaskResponse(tuple(handler(request)))

    # --- per-task deterministic fallbacks ---

    def _task_echo(self, request: TaskRequest) -> Sequence[Tensor]:
        return request.tensors

    def _segment(self, request: TaskRequest, class_count: int) -> Sequence[Tensor]:
        # kmeans on (color, x/W, y/H) features; cluster ids are re-ranked by
        # centroid luma so label 0 is always the darkest cluster.
        buf = _tensor_to_buffer(request.tensors[0])
        k = min(class_count, buf.width * buf.height)
        seed = int(request.params.get("seed", 0))
        _, labels = kmeans_cluster(buf, KMeansConfig(k=k, use_position=True, seed=seed))
        lumas = []
        for i in range(k):
            _, rgb = labels.palette[i]
            lumas.append(0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2])
        rank = np.empty(k, dtype=np.int64)
        rank[np.argsort(np.asarray(lumas), kind="stable")] = np.arange(k)
        out = rank[labels.labels].astype(np.float32)
        return [Tensor(out[None, :, :])]

    def _task_face_parse(self, request: TaskRequest) -> Sequence[Tensor]:
        return self._segment(request, FACE_CLASS_COUNT)

    def _task_sem_seg(self, request: TaskRequest) -> Sequence[Tensor]:
        return self._segment(request, VOC_CLASS_COUNT)

    def _task_mono_depth(self, request: TaskRequest) -> Sequence[Tensor]:
        # Normalized luma stands in for disparity; constant images map to 0.5.
        y = _luma_plane(request.tensors[0]).astype(np.float64)
        lo, hi = y.min(), y.max()
        if hi == lo:
            out = np.full_like(y, 0.5)
        else:
            out = (y - lo) / (hi - lo)
        return [Tensor(out.astype(np.float32)[None, :, :])]

    def _task_super_res(self, request: TaskRequest) -> Sequence[Tensor]:
        scale_raw = request.params["scale"]
        scale = int(round(scale_raw))
        if scale != scale_raw or scale not in (2, 3, 4):
            raise TaskError(f"super_res scale must be 2, 3, or 4, got {scale_raw}")
        out = resize_bicubic(_tensor_to_buffer(request.tensors[0]), scale)
        return [_buffer_to_tensor(out)]

    def _task_deblur(self, request: TaskRequest) -> Sequence[Tensor]:
        # Unsharp mask: image + 0.5 * (image - gaussian_blur(image, sigma=2)).
        buf = _tensor_to_buffer(request.tensors[0])
        blurred = gaussian_blur(buf, 2.0)
        out = np.clip(buf.data + 0.5 * (buf.data - blurred.data), 0.0, 1.0)
        return [_buffer_to_tensor(ImageBuffer(out))]

    def _task_denoise(self, request: TaskRequest) -> Sequence[Tensor]:
        out = gaussian_blur(_tensor_to_buffer(request.tensors[0]), 1.0)
        return [_buffer_to_tensor(out)]

    def _task_dehaze(self, request: TaskRequest) -> Sequence[Tensor]:
        # Per-channel min-max contrast stretch; a constant channel is left alone.
        arr = request.tensors[0].data.astype(np.float64)
        out = np.empty_like(arr)
        for c in range(arr.shape[0]):
            lo, hi = arr[c].min(), arr[c].max()
            out[c] = (arr[c] - lo) / (hi - lo) if hi > lo else arr[c]
        return [Tensor(np.clip(out, 0.0, 1.0).astype(np.float32))]

    def _task_enlighten(self, request: TaskRequest) -> Sequence[Tensor]:
        # Gamma 0.5 brightening.
        return [Tensor(np.sqrt(request.tensors[0].data))]

    def _task_deep_color(self, request: TaskRequest) -> Sequence[Tensor]:
        # Keep the input's luma; take chroma (rgb minus its own luma) from the
        # hint dots via inverse-distance-squared interpolation.  The chroma is
        # exactly the hint's at each dot center; with no hints the result is gray.
        y = _luma_plane(request.tensors[0]).astype(np.float64)
        hint_buf = _tensor_to_buffer(request.tensors[1])
        hints = parse_hint_layer(hint_buf)
        h, w = y.shape
        gray = np.repeat(y[:, :, None], 3, axis=2)
        if not hints.dots:
            return [Tensor(np.clip(gray, 0.0, 1.0).astype(np.float32).transpose(2, 0, 1))]

        chroma = np.zeros((len(hints.dots), 3), dtype=np.float64)
        centers = np.zeros((len(hints.dots), 2), dtype=np.float64)
        for i, dot in enumerate(hints.dots):
            rgb = np.asarray(dot.color, dtype=np.float64)
            chroma[i] = rgb - (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2])
            centers[i] = (dot.x, dot.y)

        ys, xs = np.mgrid[0:h, 0:w]
        d2 = (xs[None] - centers[:, 0, None, None]) ** 2 + (ys[None] - centers[:, 1, None, None]) ** 2
        at_center = d2 == 0
        with np.errstate(divide="ignore"):
            wts = 1.0 / d2
        wts[at_center] = 0.0
        interp = np.einsum("nhw,nc->hwc", wts, chroma) / np.maximum(wts.sum(axis=0), 1e-300)[:, :, None]
        # Dot centers take their hint's chroma exactly; later dots win overlaps.
        for i in range(len(hints.dots)):
            interp[at_center[i]] = chroma[i]
        out = np.clip(gray + interp, 0.0, 1.0).astype(np.float32)
        return [Tensor(out.transpose(2, 0, 1))]

    def _task_face_gen(self, request: TaskRequest) -> Sequence[Tensor]:
        # Copy the photo where the masks agree; paint the modified mask's class
        # color (face palette) where they differ.
        rgb = request.tensors[0].data
        orig = np.rint(request.tensors[1].data[0].astype(np.float64)).astype(np.int64)
        mod = np.rint(request.tensors[2].data[0].astype(np.float64)).astype(np.int64)
        for name, ids in (("original", orig), ("modified", mod)):
            top = int(ids.max(initial=0))
            if ids.min(initial=0) < 0 or top >= FACE_CLASS_COUNT:
                raise TaskError(f"{name} mask has class id outside [0, {FACE_CLASS_COUNT - 1}]")
        table = np.array([FACE_PALETTE[i][1] for i in range(FACE_CLASS_COUNT)], dtype=np.float32)
        painted = table[mod].transpose(2, 0, 1)
        differ = (orig != mod)[None, :, :]
        return [Tensor(np.where(differ, painted, rgb))]

    def _task_matting(self, request: TaskRequest) -> Sequence[Tensor]:
        # Hard mask (fg 1, bg 0, unknown 0.5) blurred at sigma 3 fills the
        # unknown band; known pixels stay exactly 0 or 1.
        try:
            trimap = decode_trimap(_tensor_to_buffer(request.tensors[1]))
        except ValueError as exc:
            raise TaskError(str(exc)) from exc
        fg = trimap.values == TRIMAP_FOREGROUND
        bg = trimap.values == TRIMAP_BACKGROUND
        hard = np.full(trimap.values.shape, 0.5, dtype=np.float32)
        hard[fg] = 1.0
        hard[bg] = 0.0
        blurred = gaussian_blur(ImageBuffer(hard[:, :, None]), 3.0).data[:, :, 0]
        alpha = np.where(fg, np.float32(1.0), np.where(bg, np.float32(0.0), blurred))
        return [Tensor(alpha.astype(np.float32)[None, :, :])]
