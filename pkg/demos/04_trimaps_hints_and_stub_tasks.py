"""
Typed maps and the deterministic stub backend
=============================================

Trimaps (0/128/255 mattes), color hint dots, and how the stub backend
satisfies the matting and guided-colorization task contracts without any
neural network.
"""

import numpy as np

from gimpml import (
    Hint,
    HintSet,
    ImageBuffer,
    Layer,
    StubBackend,
    TaskKind,
    TaskRequest,
    decode_trimap,
    encode_trimap,
    grayscale,
    parse_hint_layer,
    rasterize_hints,
    to_tensor,
)
from gimpml.project import save_image

from _demo_util import fixture_image, out_path

image = fixture_image(seed=4, size=64)
stub = StubBackend()

# --- trimaps: exactly three 8-bit levels are legal ---------------------------
tri = np.zeros((64, 64), dtype=np.float64)          # background = 0
tri[12:52, 12:52] = 128 / 255.0                     # unknown boundary = 128
tri[20:44, 20:44] = 1.0                             # foreground = 255
trimap = decode_trimap(ImageBuffer(tri[:, :, None]))
print("trimap regions:", {int(v): int((trimap.values == v).sum()) for v in (0, 1, 2)})

# Any other level is rejected, naming the offending pixel.
try:
    bad = tri.copy()
    bad[0, 5] = 100 / 255.0
    decode_trimap(ImageBuffer(bad[:, :, None]))
except ValueError as err:
    print("rejected:", err)

# The matting stub honors the trimap exactly on known pixels and feathers the
# unknown band with a blurred transition.
matte = stub.run_task(
    TaskRequest(
        task=TaskKind.MATTING,
        tensors=(to_tensor(Layer("i", image)), to_tensor(Layer("t", encode_trimap(trimap)))),
    )
).tensors[0]
save_image(ImageBuffer(matte.data[0][:, :, None]), out_path("04_matte.png"))

# --- hint dots: 6x6 opaque stamps on a transparent layer ---------------------
hints = HintSet(
    (
        Hint(16, 16, (0.85, 0.25, 0.2)),
        Hint(48, 20, (0.2, 0.45, 0.85)),
        Hint(32, 50, (0.3, 0.7, 0.3)),
    )
)
hint_layer = rasterize_hints(hints, 64, 64)
save_image(hint_layer, out_path("04_hint_layer.png"))

# Painted hint layers parse back to dots (connected components of alpha).
recovered = parse_hint_layer(hint_layer)
print("recovered dots:", [(d.x, d.y) for d in recovered.dots])

# Guided colorization: luma stays, chroma is interpolated from the dots.
gray = grayscale(image)
colored = stub.run_task(
    TaskRequest(
        task=TaskKind.DEEP_COLOR,
        tensors=(to_tensor(Layer("g", gray)), to_tensor(Layer("h", hint_layer))),
    )
).tensors[0]
save_image(ImageBuffer(np.transpose(colored.data, (1, 2, 0))), out_path("04_guided_color.png"))
