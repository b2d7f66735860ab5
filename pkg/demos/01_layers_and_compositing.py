"""
Layers and alpha compositing
============================

Build a small layer stack, composite it, and round-trip a layer through
the planar tensor form.
"""

import numpy as np

from gimpml import ImageBuffer, Layer, LayerStack, add_layer, composite, from_tensor, to_tensor
from gimpml.project import save_image

from _demo_util import out_path

# A stack starts as an empty canvas; every edit appends a layer.
stack = LayerStack(width=128, height=128)

# Bottom layer: a vertical blue-to-dark gradient.
ys = np.linspace(0.0, 1.0, 128)[:, None]
gradient = np.dstack([0.1 * np.ones((128, 128)), 0.2 + 0.3 * ys * np.ones((1, 128)), 0.5 + 0.5 * ys * np.ones((1, 128))])
stack = add_layer(stack, Layer("sky", ImageBuffer(gradient)))

# A half-transparent red square, offset into the canvas. The alpha channel is
# straight (non-premultiplied); effective coverage is alpha times opacity.
square = np.zeros((48, 48, 4))
square[:, :, 0] = 1.0
square[:, :, 3] = 0.6
stack = add_layer(stack, Layer("red square", ImageBuffer(square), opacity=0.8, offset_x=20, offset_y=30))

# A gray circle drawn into a 1-channel buffer; gray layers composite as RGB.
yy, xx = np.mgrid[0:64, 0:64]
circle = ((xx - 32) ** 2 + (yy - 32) ** 2 <= 24**2).astype(np.float64)
stack = add_layer(stack, Layer("moon", ImageBuffer(circle[:, :, None] * 0.9), opacity=0.9, offset_x=56, offset_y=8))

# Flatten bottom-to-top with the straight-alpha over operator.
flat = composite(stack)
save_image(flat, out_path("01_composite.png"))
print("layers:", ", ".join(stack.names()))
print("composite size:", flat.width, "x", flat.height)

# Layers convert losslessly to planar (C, H, W) tensors and back.
tensor = to_tensor(stack.layer("red square"))
back = from_tensor(tensor, "copy of red square")
assert np.array_equal(back.buffer.data, stack.layer("red square").buffer.data)
print("tensor round-trip: exact, shape", tensor.shape)
