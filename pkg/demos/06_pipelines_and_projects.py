"""
Declarative pipelines and project directories
=============================================

Pipelines are JSON-serializable step lists; each step appends one layer and
never mutates existing ones.  The five built-in workflows generate ordinary
specs you can inspect, edit, and rerun.
"""

from gimpml import Layer, LayerStack, StubBackend, add_layer, builtin, run_pipeline
from gimpml.maps import Hint, HintSet, rasterize_hints
from gimpml.pipeline import spec_to_json
from gimpml.project import load_project, save_project

from _demo_util import fixture_image, out_path

stub = StubBackend()
image = fixture_image(seed=6)
stack = LayerStack(image.width, image.height, (Layer("image", image),))

# Background blur: segment, blur, then apply the blur only off the kept classes.
spec = builtin("background_blur", keep_classes=[1, 2, 3, 4, 5], sigma=3.0)
print("background_blur spec:")
print(spec_to_json(spec))
result = run_pipeline(stack, spec, stub)
print("layers after run:", ", ".join(result.names()))

# Non-destructive by construction: the source layer is bit-identical.
assert result.layer("image").buffer.data.tobytes() == image.data.tobytes()

# Re-coloring drives the guided-colorization task once per hint layer.
hints = rasterize_hints(HintSet((Hint(20, 20, (0.8, 0.3, 0.2)), Hint(70, 70, (0.2, 0.4, 0.8)))), image.width, image.height)
recolor_stack = add_layer(stack, Layer("hints_0", hints))
recolored = run_pipeline(recolor_stack, builtin("recolor", hints=["hints_0"]), stub)
print("recolor produced:", ", ".join(n for n in recolored.names() if n not in recolor_stack.names()))

# Stacks persist as a directory of PNGs plus a JSON manifest.
save_project(result, out_path("06_project"))
reloaded = load_project(out_path("06_project"))
assert reloaded.names() == result.names()
print("project round-trip:", len(reloaded.layers), "layers")
