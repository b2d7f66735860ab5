"""
Depth-based relighting
======================

Turn a disparity map into a colored light layer (desaturate, invert,
colorize) and screen it over the image: far pixels catch sky light,
near pixels stay lit as before.
"""

import numpy as np

from gimpml import (
    DisparityMap,
    Layer,
    StubBackend,
    TaskKind,
    TaskRequest,
    normalize_disparity,
    relight,
    to_tensor,
)
from gimpml.project import save_disparity, save_image

from _demo_util import fixture_image, out_path

image = fixture_image(seed=5)
stub = StubBackend()

# The stub's depth estimate is normalized luma; real backends would plug in a
# monocular depth network behind the same task contract.
disparity_tensor = stub.run_task(
    TaskRequest(task=TaskKind.MONO_DEPTH, tensors=(to_tensor(Layer("i", image)),))
).tensors[0]
disparity = DisparityMap(disparity_tensor.data[0])
save_disparity(disparity, out_path("05_disparity.png"))
print("disparity range:", float(disparity.values.min()), "to", float(disparity.values.max()))

# normalize_disparity maps any nonneg scale to [0, 1]; a constant map becomes 0.5.
flat = normalize_disparity(DisparityMap(np.full((4, 4), 3.25, dtype=np.float32)))
assert float(flat.data[0, 0, 0]) == 0.5

# Warm low-angle light at increasing strengths. Strength 0 is the identity.
for strength in (0.0, 0.4, 0.8):
    lit = relight(image, disparity, hue=35.0, saturation=0.55, strength=strength)
    save_image(lit, out_path(f"05_relit_{int(strength * 100):02d}.png"))

# A cold blue "night" grade of the same scene.
save_image(relight(image, disparity, hue=220.0, saturation=0.8, strength=0.7), out_path("05_night.png"))
