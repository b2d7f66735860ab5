"""Command-line entry point: single tools, pipelines, projects, and the stub server.

Exit codes partition outcomes: 0 success, 1 user/validation error, 2
backend or transport error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .backend import DevicePolicy, StubBackend, TaskError, TransportError, resolve_device
from .core import Layer
from .maps import DisparityMap
from .ops import KMeansConfig, kmeans_cluster
from .pipeline import (
    BUILTINS,
    PipelineStepError,
    PipelineValidationError,
    TASK_TOOLS,
    builtin,
    layers_to_task_tensors,
    run_pipeline,
    spec_from_json,
    spec_to_json,
    task_output_buffer,
)
from .project import load_image, load_project, save_disparity, save_image, save_project
from .protocol import RemoteBackend, serve

log = logging.getLogger("gimpml.cli")

BACKEND_ENV = "GIMPML_BACKEND"

# input PNG count per tool (the last positional is always the output)
_TOOL_INPUTS = {
    "kmeans": 1,
    "faceparse": 1,
    "deblur": 1,
    "facegen": 3,
    "deepcolor": 2,
    "monodepth": 1,
    "superres": 1,
    "semseg": 1,
    "dehaze": 1,
    "matting": 2,
    "denoise": 1,
    "enlighten": 1,
}


class UserError(Exception):
    """Bad arguments or unusable input files; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        raise UserError(message)


def _make_backend(text: str):
    if text == "stub":
        return StubBackend()
    if text.startswith("tcp:"):
        host, sep, port = text[4:].rpartition(":")
        if not sep or not host or not port.isdigit():
            raise UserError(f"invalid backend address {text!r}; expected tcp:HOST:PORT")
        return RemoteBackend(host, int(port))
    raise UserError(f"invalid backend {text!r}; expected 'stub' or 'tcp:HOST:PORT'")


def _backend_from_args(args):
    text = args.backend or os.environ.get(BACKEND_ENV) or "stub"
    return _make_backend(text)


def _device_from_args(args) -> DevicePolicy:
    return DevicePolicy.FORCE_CPU if args.force_cpu else DevicePolicy.AUTO


def _split_csv(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _cmd_tool(args) -> int:
    name = args.name
    expected = _TOOL_INPUTS[name]
    files = args.files
    if len(files) != expected + 1:
        raise UserError(f"tool {name} takes {expected} input file(s) plus one output, got {len(files)}")
    inputs, output = files[:-1], files[-1]
    buffers = [load_image(path) for path in inputs]

    backend = _backend_from_args(args)
    device = _device_from_args(args)
    log.info("device: %s", resolve_device(device, backend.accelerator_available()))

    if name == "kmeans":
        if args.k is None:
            raise UserError("tool kmeans requires --k")
        image = buffers[0]
        if image.channels == 4:
            from .core import ImageBuffer

            image = ImageBuffer(image.data[:, :, :3])  # alpha is not a clustering feature
        quantized, _ = kmeans_cluster(
            image,
            KMeansConfig(k=args.k, use_position=args.use_position, seed=args.seed or 0),
        )
        save_image(quantized, output)
        return 0

    kind = TASK_TOOLS[name]
    layers = [Layer(f"input_{i}", buf) for i, buf in enumerate(buffers)]
    if name == "deepcolor" and buffers[1].channels != 4:
        raise UserError("deepcolor hint layer must be an RGBA PNG")
    tensors = layers_to_task_tensors(kind, layers)
    params: dict[str, float] = {}
    if args.seed is not None:
        params["seed"] = float(args.seed)
    if name == "superres":
        if args.scale is None:
            raise UserError("tool superres requires --scale")
        params["scale"] = float(args.scale)

    from .backend import TaskRequest

    response = backend.run_task(TaskRequest(task=kind, device=device, params=params, tensors=tensors))
    out_tensor = response.tensors[0]
    if name == "monodepth":
        save_disparity(DisparityMap(out_tensor.data[0]), output)
    else:
        save_image(task_output_buffer(kind, out_tensor), output)
    return 0


def _cmd_pipeline_run(args) -> int:
    stack = load_project(args.project)
    try:
        spec_text = open(args.spec, "r", encoding="utf-8").read()
    except OSError as exc:
        raise UserError(f"cannot read pipeline spec: {exc}") from exc
    spec = spec_from_json(spec_text)
    if args.seed is not None:
        # default seed for the seedable steps that do not pin one themselves
        from .pipeline import PipelineSpec, Step

        steps = []
        for step in spec.steps:
            if step.tool in ("kmeans", "faceparse", "semseg") and "seed" not in step.params:
                params = dict(step.params)
                params["seed"] = args.seed
                step = Step(step.tool, params, step.inputs, step.output)
            steps.append(step)
        spec = PipelineSpec(tuple(steps))

    backend = _backend_from_args(args)
    device = _device_from_args(args)
    log.info("device: %s", resolve_device(device, backend.accelerator_available()))
    result = run_pipeline(stack, spec, backend, device=device)
    save_project(result, args.out)
    log.info("wrote %d layers to %s", len(result.layers), args.out)
    return 0


def _cmd_pipeline_emit(args) -> int:
    name = args.builtin
    if name not in BUILTINS:
        raise UserError(f"unknown built-in {name!r}; expected one of {sorted(BUILTINS)}")
    params: dict = {}
    if args.image is not None:
        params["image"] = args.image
    if name == "background_blur":
        if args.classes is not None:
            params["keep_classes"] = [int(c) for c in _split_csv(args.classes)]
        if args.sigma is not None:
            params["sigma"] = args.sigma
        if args.seed is not None:
            params["seed"] = args.seed
    elif name == "recolor":
        if args.hints is not None:
            params["hints"] = _split_csv(args.hints)
        if args.masks is not None:
            params["masks"] = _split_csv(args.masks)
    elif name == "face_edit":
        if args.classes is not None:
            params["class_ids"] = [int(c) for c in _split_csv(args.classes)]
        if args.hue_shift is not None:
            params["hue_shift"] = args.hue_shift
        if args.sat_scale is not None:
            params["sat_scale"] = args.sat_scale
        if args.lightness_shift is not None:
            params["lightness_shift"] = args.lightness_shift
        if args.seed is not None:
            params["seed"] = args.seed
    elif name == "portrait_modify":
        if args.modified_mask is not None:
            params["modified_mask"] = args.modified_mask
        if args.erase_mask is not None:
            params["erase_mask"] = args.erase_mask
        if args.seed is not None:
            params["seed"] = args.seed
    elif name == "relight":
        if args.hue is not None:
            params["hue"] = args.hue
        if args.saturation is not None:
            params["saturation"] = args.saturation
        if args.strength is not None:
            params["strength"] = args.strength
    try:
        spec = builtin(name, **params)
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    print(spec_to_json(spec))
    return 0


def _cmd_serve_stub(args) -> int:
    try:
        serve(StubBackend(), host=args.host, port=args.port)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gimpml", description="Layered image editing engine with pluggable ML task backends.")
    sub = parser.add_subparsers(dest="command", required=True)

    tool = sub.add_parser("tool", help="run one tool on image files", parents=[], description="Run a single tool. Inputs and the final output are PNG files.")
    tool.add_argument("name", choices=sorted(_TOOL_INPUTS), help="tool to run")
    tool.add_argument("files", nargs="+", help="input PNG file(s) followed by the output PNG")
    tool.add_argument("--backend", help="'stub' or 'tcp:HOST:PORT' (default: $GIMPML_BACKEND or stub)")
    tool.add_argument("--force-cpu", action="store_true", help="force CPU even if an accelerator is available")
    tool.add_argument("--seed", type=int, help="RNG seed for the seedable tools (u64)")
    tool.add_argument("--k", type=int, help="kmeans: number of clusters/colors")
    tool.add_argument("--use-position", action="store_true", help="kmeans: add (x, y) position features")
    tool.add_argument("--scale", type=int, choices=(2, 3, 4), help="superres: upscale factor")
    tool.set_defaults(func=_cmd_tool)

    pipe = sub.add_parser("pipeline", help="run or generate pipeline specs")
    pipe_sub = pipe.add_subparsers(dest="pipeline_command", required=True)

    run = pipe_sub.add_parser("run", help="execute a pipeline JSON against a project directory")
    run.add_argument("project", help="input project directory (project.json + layer PNGs)")
    run.add_argument("spec", help="pipeline spec JSON file")
    run.add_argument("out", help="output project directory")
    run.add_argument("--backend", help="'stub' or 'tcp:HOST:PORT' (default: $GIMPML_BACKEND or stub)")
    run.add_argument("--force-cpu", action="store_true", help="force CPU for backend tasks")
    run.add_argument("--seed", type=int, help="default seed for seedable steps")
    run.set_defaults(func=_cmd_pipeline_run)

    emit = pipe_sub.add_parser("emit-builtin", help="print a built-in workflow as pipeline JSON")
    emit.add_argument("builtin", help=f"one of: {', '.join(sorted(BUILTINS))}")
    emit.add_argument("--image", help="name of the source image layer (default 'image')")
    emit.add_argument("--classes", help="comma-separated class ids (background_blur keep-set / face_edit targets)")
    emit.add_argument("--sigma", type=float, help="background_blur: blur strength")
    emit.add_argument("--hints", help="recolor: comma-separated hint layer names")
    emit.add_argument("--masks", help="recolor: comma-separated erase-mask layer names")
    emit.add_argument("--hue-shift", type=float, help="face_edit: hue shift in degrees")
    emit.add_argument("--sat-scale", type=float, help="face_edit: saturation scale")
    emit.add_argument("--lightness-shift", type=float, help="face_edit: lightness shift")
    emit.add_argument("--modified-mask", help="portrait_modify: modified mask layer name")
    emit.add_argument("--erase-mask", help="portrait_modify: erase mask layer name")
    emit.add_argument("--hue", type=float, help="relight: light hue in degrees")
    emit.add_argument("--saturation", type=float, help="relight: light saturation")
    emit.add_argument("--strength", type=float, help="relight: blend strength")
    emit.add_argument("--seed", type=int, help="seed embedded into seedable steps")
    emit.set_defaults(func=_cmd_pipeline_emit)

    srv = sub.add_parser("serve-stub", help="serve the stub backend over the wire protocol")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=9100, help="TCP port (0 picks a free one)")
    srv.set_defaults(func=_cmd_serve_stub)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PipelineValidationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PipelineStepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TaskError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
