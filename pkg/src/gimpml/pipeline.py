"""Declarative multi-step workflows over a layer stack.

A pipeline is an ordered list of steps; each step reads existing layers,
runs one registered tool, and appends exactly one new layer.  Source layers
are never touched, so any workflow is non-destructive by construction.
Built-in generators reproduce the five standard workflows (background blur,
re-coloring, face editing, generative portrait modification, depth-based
relighting) as plain pipeline specs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .backend import Backend, DevicePolicy, SIGNATURES, Role, TaskError, TaskKind, TaskRequest, TransportError
from .core import ImageBuffer, Layer, LayerStack, Tensor, add_layer, composite, to_tensor
from .maps import (
    FACE_PALETTE,
    VOC_PALETTE,
    DisparityMap,
    Hint,
    HintSet,
    LabelMap,
    class_mask,
    labelmap_from_buffer,
    labelmap_to_buffer,
    normalize_disparity,
    rasterize_hints,
    relight,
)
from . import ops
from .ops import KMeansConfig, RegionMask

__all__ = [
    "Step",
    "PipelineSpec",
    "PipelineValidationError",
    "PipelineStepError",
    "validate_pipeline",
    "run_pipeline",
    "registered_tools",
    "BUILTINS",
    "builtin",
    "spec_to_json",
    "spec_from_json",
    "layers_to_task_tensors",
    "task_output_buffer",
    "TASK_TOOLS",
]


@dataclass(frozen=True)
class Step:
    tool: str
    params: Mapping[str, Any] = field(default_factory=dict)
    inputs: tuple[str, ...] = ()
    output: str = "out"

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True)
class PipelineSpec:
    steps: tuple[Step, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))


class PipelineValidationError(Exception):
    """The spec is inconsistent with the stack; raised before any execution."""

    def __init__(self, step_index: int, message: str) -> None:
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


class PipelineStepError(Exception):
    """A step failed during execution; ``partial`` holds all completed work."""

    def __init__(self, step_index: int, tool: str, message: str, partial: LayerStack) -> None:
        super().__init__(f"step {step_index} ({tool}): {message}")
        self.step_index = step_index
        self.tool = tool
        self.partial = partial


# --- helpers shared by tool bindings ---


def _param(step: Step, name: str, default=None, required: bool = False):
    if name in step.params:
        return step.params[name]
    if required:
        raise ValueError(f"missing required param {name!r}")
    return default


_PALETTES = {"face": FACE_PALETTE, "voc": VOC_PALETTE}


def _palette(step: Step):
    name = str(_param(step, "palette", "voc")).lower()
    if name not in _PALETTES:
        raise ValueError(f"unknown palette {name!r}; expected one of {sorted(_PALETTES)}")
    return _PALETTES[name]


def _promote(buf: ImageBuffer, channels: int) -> ImageBuffer:
    """Widen a buffer to ``channels`` (gray -> rgb replicate, rgb -> rgba opaque)."""
    if buf.channels == channels:
        return buf
    data = buf.data
    if buf.channels == 1 and channels >= 3:
        data = np.repeat(data, 3, axis=2)
    if data.shape[2] == 3 and channels == 4:
        data = np.concatenate([data, np.ones(data.shape[:2] + (1,), dtype=np.float32)], axis=2)
    if data.shape[2] != channels:
        raise ValueError(f"cannot promote {buf.channels}-channel buffer to {channels} channels")
    return ImageBuffer(data)


def _weights_from_layer(buf: ImageBuffer) -> RegionMask:
    # 1 channel: the values; 4 channels: the alpha plane (erase masks store
    # keep-weight as alpha); 3 channels: luma.
    if buf.channels == 1:
        return RegionMask(buf.data[:, :, 0])
    if buf.channels == 4:
        return RegionMask(buf.data[:, :, 3])
    return RegionMask(ops.grayscale(buf).data[:, :, 0])


def _mask_for_apply(step: Step, mask_buf: ImageBuffer) -> RegionMask:
    class_ids = _param(step, "class_ids")
    if class_ids is None:
        return _weights_from_layer(mask_buf)
    labels = labelmap_from_buffer(mask_buf, _palette(step))
    return class_mask(labels, class_ids)


def _rgb_tensor(layer: Layer) -> Tensor:
    buf = _promote(layer.buffer, 3) if layer.buffer.channels == 1 else layer.buffer
    return to_tensor(Layer("t", buf), drop_alpha=True)


def _labelmap_tensor(layer: Layer) -> Tensor:
    buf = layer.buffer
    if buf.channels != 1:
        raise ValueError(f"label layer {layer.name!r} must have 1 channel, got {buf.channels}")
    ids = np.rint(buf.data[:, :, 0].astype(np.float64) * 255.0).astype(np.float32)
    return Tensor(ids[None, :, :])


def _buffer_from_tensor(t: Tensor) -> ImageBuffer:
    c = t.shape[0]
    if c not in (1, 3, 4):
        raise ValueError(f"unsupported channel count {c}")
    return ImageBuffer(np.clip(np.transpose(t.data, (1, 2, 0)), 0.0, 1.0))


TASK_TOOLS = {
    "faceparse": TaskKind.FACE_PARSE,
    "deblur": TaskKind.DEBLUR,
    "facegen": TaskKind.FACE_GEN,
    "deepcolor": TaskKind.DEEP_COLOR,
    "monodepth": TaskKind.MONO_DEPTH,
    "superres": TaskKind.SUPER_RES,
    "semseg": TaskKind.SEM_SEG,
    "dehaze": TaskKind.DEHAZE,
    "matting": TaskKind.MATTING,
    "denoise": TaskKind.DENOISE,
    "enlighten": TaskKind.ENLIGHTEN,
    "echo": TaskKind.ECHO,
}

_TASK_PALETTES = {TaskKind.FACE_PARSE: FACE_PALETTE, TaskKind.SEM_SEG: VOC_PALETTE}


def layers_to_task_tensors(kind: TaskKind, layers: Sequence[Layer]) -> tuple[Tensor, ...]:
    sig = SIGNATURES[kind]
    if sig.inputs == (Role.ANY,):
        return tuple(to_tensor(layer) for layer in layers)
    if len(layers) != len(sig.inputs):
        raise ValueError(f"{kind.name} expects {len(sig.inputs)} input layer(s), got {len(layers)}")
    tensors = []
    for role, layer in zip(sig.inputs, layers):
        if role == Role.RGB:
            tensors.append(_rgb_tensor(layer))
        elif role == Role.GRAY_OR_RGB:
            tensors.append(to_tensor(layer, drop_alpha=True))
        elif role == Role.HINT_RGBA:
            if layer.buffer.channels != 4:
                raise ValueError(f"hint layer {layer.name!r} must be RGBA")
            tensors.append(to_tensor(layer))
        elif role == Role.LABEL_MAP:
            tensors.append(_labelmap_tensor(layer))
        elif role == Role.TRIMAP:
            from .maps import decode_trimap, encode_trimap

            trimap = decode_trimap(layer.buffer)  # validates the value domain
            tensors.append(to_tensor(Layer("t", encode_trimap(trimap))))
        else:
            tensors.append(to_tensor(layer, drop_alpha=True))
    return tuple(tensors)


def task_output_buffer(kind: TaskKind, t: Tensor) -> ImageBuffer:
    role = SIGNATURES[kind].outputs[0]
    if role == Role.LABEL_MAP:
        ids = np.rint(t.data[0].astype(np.float64)).astype(np.int32)
        return labelmap_to_buffer(LabelMap(ids, _TASK_PALETTES[kind]))
    return _buffer_from_tensor(t)


def _run_task_tool(kind: TaskKind, stack: LayerStack, step: Step, backend: Backend, device: DevicePolicy) -> ImageBuffer:
    layers = [stack.layer(name) for name in step.inputs]
    tensors = layers_to_task_tensors(kind, layers)
    params = {k: float(v) for k, v in step.params.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
    response = backend.run_task(TaskRequest(task=kind, device=device, params=params, tensors=tensors))
    if not response.tensors:
        raise ValueError(f"{kind.name} returned no tensors")
    return task_output_buffer(kind, response.tensors[0])


# --- tool registry ---

ToolFn = Callable[[LayerStack, Step, Backend, DevicePolicy], ImageBuffer]


def _tool_kmeans(stack, step, backend, device):
    layer = stack.layer(step.inputs[0])
    cfg = KMeansConfig(
        k=int(_param(step, "k", required=True)),
        use_position=bool(_param(step, "use_position", False)),
        max_iter=int(_param(step, "max_iter", 100)),
        tol=float(_param(step, "tol", 1e-6)),
        seed=int(_param(step, "seed", 0)),
    )
    quantized, _ = ops.kmeans_cluster(layer.buffer, cfg)
    return quantized


def _tool_selective_apply(stack, step, backend, device):
    base = stack.layer(step.inputs[0]).buffer
    processed = stack.layer(step.inputs[1]).buffer
    mask = _mask_for_apply(step, stack.layer(step.inputs[2]).buffer)
    width = max(base.channels, processed.channels)
    return ops.selective_apply(_promote(base, width), _promote(processed, width), mask)


def _tool_relight(stack, step, backend, device):
    image = stack.layer(step.inputs[0]).buffer
    disp_buf = stack.layer(step.inputs[1]).buffer
    if disp_buf.channels != 1:
        raise ValueError("relight disparity layer must have 1 channel")
    return relight(
        image,
        DisparityMap(disp_buf.data[:, :, 0]),
        hue=float(_param(step, "hue", 40.0)),
        saturation=float(_param(step, "saturation", 0.6)),
        strength=float(_param(step, "strength", 0.5)),
    )


def _tool_rasterize_hints(stack, step, backend, device):
    dots = []
    for entry in _param(step, "dots", required=True):
        x, y, r, g, b = entry
        dots.append(Hint(int(x), int(y), (float(r), float(g), float(b))))
    return rasterize_hints(HintSet(tuple(dots)), stack.width, stack.height)


def _tool_composite(stack, step, backend, device):
    names = step.inputs if step.inputs else stack.names()
    sub = LayerStack(stack.width, stack.height, tuple(stack.layer(n) for n in names))
    return composite(sub)


def _make_registry() -> dict[str, ToolFn]:
    registry: dict[str, ToolFn] = {
        "kmeans": _tool_kmeans,
        "grayscale": lambda s, st, b, d: ops.grayscale(s.layer(st.inputs[0]).buffer),
        "desaturate": lambda s, st, b, d: ops.desaturate(s.layer(st.inputs[0]).buffer),
        "invert": lambda s, st, b, d: ops.invert(s.layer(st.inputs[0]).buffer),
        "colorize": lambda s, st, b, d: ops.colorize(
            s.layer(st.inputs[0]).buffer,
            float(_param(st, "hue", 0.0)),
            float(_param(st, "saturation", 1.0)),
        ),
        "gaussian_blur": lambda s, st, b, d: ops.gaussian_blur(
            s.layer(st.inputs[0]).buffer, float(_param(st, "sigma", 2.0))
        ),
        "hue_saturation": lambda s, st, b, d: ops.hue_saturation(
            s.layer(st.inputs[0]).buffer,
            hue_shift=float(_param(st, "hue_shift", 0.0)),
            sat_scale=float(_param(st, "sat_scale", 1.0)),
            lightness_shift=float(_param(st, "lightness_shift", 0.0)),
        ),
        "edge_detect": lambda s, st, b, d: ops.edge_detect(s.layer(st.inputs[0]).buffer),
        "resize_bicubic": lambda s, st, b, d: ops.resize_bicubic(
            s.layer(st.inputs[0]).buffer, int(_param(st, "scale", required=True))
        ),
        "selective_apply": _tool_selective_apply,
        "class_mask": lambda s, st, b, d: ImageBuffer(
            class_mask(
                labelmap_from_buffer(s.layer(st.inputs[0]).buffer, _palette(st)),
                _param(st, "class_ids", required=True),
            ).weights[:, :, None]
        ),
        "normalize_disparity": lambda s, st, b, d: normalize_disparity(
            DisparityMap(s.layer(st.inputs[0]).buffer.data[:, :, 0])
        ),
        "relight": _tool_relight,
        "rasterize_hints": _tool_rasterize_hints,
        "composite": _tool_composite,
    }
    for name, kind in TASK_TOOLS.items():
        registry[name] = (lambda k: lambda s, st, b, d: _run_task_tool(k, s, st, b, d))(kind)
    return registry


_TOOLS = _make_registry()


def registered_tools() -> tuple[str, ...]:
    return tuple(sorted(_TOOLS))


_TOOL_ARITY = {
    "kmeans": 1, "grayscale": 1, "desaturate": 1, "invert": 1, "colorize": 1,
    "gaussian_blur": 1, "hue_saturation": 1, "edge_detect": 1, "resize_bicubic": 1,
    "selective_apply": 3, "class_mask": 1, "normalize_disparity": 1, "relight": 2,
    "rasterize_hints": 0, "composite": None,
    "faceparse": 1, "deblur": 1, "facegen": 3, "deepcolor": 2, "monodepth": 1,
    "superres": 1, "semseg": 1, "dehaze": 1, "matting": 2, "denoise": 1,
    "enlighten": 1, "echo": 1,
}


def validate_pipeline(stack: LayerStack, spec: PipelineSpec) -> None:
    """Check tools, layer references, and output-name uniqueness before running."""
    known = set(stack.names())
    for i, step in enumerate(spec.steps):
        if step.tool not in _TOOLS:
            raise PipelineValidationError(i, f"unknown tool {step.tool!r}")
        arity = _TOOL_ARITY.get(step.tool)
        if arity is not None and len(step.inputs) != arity:
            raise PipelineValidationError(
                i, f"tool {step.tool!r} takes {arity} input layer(s), got {len(step.inputs)}"
            )
        for name in step.inputs:
            if name not in known:
                raise PipelineValidationError(i, f"input layer {name!r} does not exist")
        if not step.output:
            raise PipelineValidationError(i, "output layer name must be nonempty")
        if step.output in known:
            raise PipelineValidationError(i, f"output layer {step.output!r} already exists")
        known.add(step.output)


def run_pipeline(
    stack: LayerStack,
    spec: PipelineSpec,
    backend: Backend,
    device: DevicePolicy = DevicePolicy.AUTO,
) -> LayerStack:
    """Execute a validated pipeline, appending one layer per step.

    If step ``i`` fails, the raised :class:`PipelineStepError` names it and
    carries the stack with all layers produced by steps before ``i``; those
    results are never discarded.
    """
    validate_pipeline(stack, spec)
    current = stack
    for i, step in enumerate(spec.steps):
        try:
            out = _TOOLS[step.tool](current, step, backend, device)
            current = add_layer(current, Layer(step.output, out))
        except (TaskError, TransportError, ValueError, KeyError) as exc:
            raise PipelineStepError(i, step.tool, str(exc), partial=current) from exc
    return current


# --- JSON form ---


def spec_to_json(spec: PipelineSpec) -> str:
    payload = {
        "steps": [
            {"tool": s.tool, "params": dict(s.params), "inputs": list(s.inputs), "output": s.output}
            for s in spec.steps
        ]
    }
    return json.dumps(payload, indent=2)


def spec_from_json(text: str) -> PipelineSpec:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid pipeline JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("steps"), list):
        raise ValueError("pipeline JSON must be an object with a 'steps' list")
    steps = []
    for i, raw in enumerate(payload["steps"]):
        if not isinstance(raw, dict) or "tool" not in raw or "output" not in raw:
            raise ValueError(f"step {i} must be an object with 'tool' and 'output'")
        steps.append(
            Step(
                tool=str(raw["tool"]),
                params=dict(raw.get("params", {})),
                inputs=tuple(str(n) for n in raw.get("inputs", [])),
                output=str(raw["output"]),
            )
        )
    return PipelineSpec(tuple(steps))


# --- built-in workflows ---


def builtin_background_blur(
    image: str = "image",
    keep_classes: Sequence[int] = (1,),
    sigma: float = 4.0,
    seed: int = 0,
) -> PipelineSpec:
    """Blur everything except the given semantic classes (VOC ids).

    Appends: labels, blurred, result.
    """
    keep = {int(c) for c in keep_classes}
    blur_ids = [i for i in sorted(VOC_PALETTE) if i not in keep]
    return PipelineSpec(
        (
            Step("semseg", {"seed": seed}, (image,), "labels"),
            Step("gaussian_blur", {"sigma": sigma}, (image,), "blurred"),
            Step(
                "selective_apply",
                {"class_ids": blur_ids, "palette": "voc"},
                (image, "blurred", "labels"),
                "result",
            ),
        )
    )


def builtin_recolor(
    image: str = "image",
    hints: Sequence[str] = ("hints_0",),
    masks: Sequence[str] = (),
) -> PipelineSpec:
    """Gray the image, colorize once per hint layer, then merge variants.

    ``masks`` are erase-mask layers (alpha = keep-weight) for each variant
    after the first; later variants sit on top.  Appends 1 + len(hints) layers,
    plus len(masks) merge layers.
    """
    hints = tuple(hints)
    masks = tuple(masks)
    if not hints:
        raise ValueError("recolor needs at least one hint layer")
    if masks and len(masks) != len(hints) - 1:
        raise ValueError(f"recolor with {len(hints)} hint layers takes {len(hints) - 1} masks, got {len(masks)}")
    steps = [Step("grayscale", {}, (image,), "gray")]
    for i, hint in enumerate(hints):
        steps.append(Step("deepcolor", {}, ("gray", hint), f"color_{i}"))
    previous = "color_0"
    for i, mask in enumerate(masks, start=1):
        steps.append(Step("selective_apply", {}, (previous, f"color_{i}", mask), f"merged_{i}"))
        previous = f"merged_{i}"
    return PipelineSpec(tuple(steps))


def builtin_face_edit(
    image: str = "image",
    class_ids: Sequence[int] = (17,),  # hair
    hue_shift: float = 60.0,
    sat_scale: float = 1.0,
    lightness_shift: float = 0.0,
    seed: int = 0,
) -> PipelineSpec:
    """Adjust hue/saturation only inside the selected face-parsing classes.

    Appends: face_labels, adjusted, result.
    """
    return PipelineSpec(
        (
            Step("faceparse", {"seed": seed}, (image,), "face_labels"),
            Step(
                "hue_saturation",
                {"hue_shift": hue_shift, "sat_scale": sat_scale, "lightness_shift": lightness_shift},
                (image,),
                "adjusted",
            ),
            Step(
                "selective_apply",
                {"class_ids": [int(c) for c in class_ids], "palette": "face"},
                (image, "adjusted", "face_labels"),
                "result",
            ),
        )
    )


def builtin_portrait_modify(
    image: str = "image",
    modified_mask: str = "modified_mask",
    erase_mask: str | None = None,
    seed: int = 0,
) -> PipelineSpec:
    """Regenerate a portrait from an edited parsing mask.

    Appends: face_labels, generated, and (when an erase mask is given) result,
    where the erase mask's alpha keeps the generated pixels and exposes the
    original elsewhere.
    """
    steps = [
        Step("faceparse", {"seed": seed}, (image,), "face_labels"),
        Step("facegen", {}, (image, "face_labels", modified_mask), "generated"),
    ]
    if erase_mask is not None:
        steps.append(Step("selective_apply", {}, (image, "generated", erase_mask), "result"))
    return PipelineSpec(tuple(steps))


def builtin_relight(
    image: str = "image",
    hue: float = 40.0,
    saturation: float = 0.6,
    strength: float = 0.5,
) -> PipelineSpec:
    """Estimate depth, derive a sky-light layer, screen it over the image.

    Appends: disparity, relit.
    """
    return PipelineSpec(
        (
            Step("monodepth", {}, (image,), "disparity"),
            Step("relight", {"hue": hue, "saturation": saturation, "strength": strength}, (image, "disparity"), "relit"),
        )
    )


BUILTINS: dict[str, Callable[..., PipelineSpec]] = {
    "background_blur": builtin_background_blur,
    "recolor": builtin_recolor,
    "face_edit": builtin_face_edit,
    "portrait_modify": builtin_portrait_modify,
    "relight": builtin_relight,
}


def builtin(name: str, **params) -> PipelineSpec:
    if name not in BUILTINS:
        raise ValueError(f"unknown built-in {name!r}; expected one of {sorted(BUILTINS)}")
    return BUILTINS[name](**params)
