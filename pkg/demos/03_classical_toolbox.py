"""
The classical toolbox
=====================

Grayscale, invert, colorize, hue/saturation, Gaussian blur, edge detection,
bicubic upscaling, and masked application.
"""

import numpy as np

from gimpml import (
    RegionMask,
    colorize,
    edge_detect,
    gaussian_blur,
    grayscale,
    hue_saturation,
    invert,
    resize_bicubic,
    selective_apply,
)
from gimpml.project import save_image

from _demo_util import fixture_image, out_path

image = fixture_image(seed=3)

# Rec. 601 luma, then a sepia tint via HSL colorization.
gray = grayscale(image)
save_image(colorize(gray, hue=35.0, saturation=0.45), out_path("03_sepia.png"))

# Invert touches only color channels; applying it twice is the identity.
assert np.allclose(invert(invert(image)).data, image.data, atol=1e-7)

# Hue rotation plus a mild saturation boost.
save_image(hue_saturation(image, hue_shift=150.0, sat_scale=1.3), out_path("03_hue_rotated.png"))

# Separable Gaussian blur with clamp-to-edge handling; sigma 0 is a no-op.
save_image(gaussian_blur(image, sigma=3.0), out_path("03_blurred.png"))

# Sobel magnitude normalized to a unit peak.
edges = edge_detect(image)
save_image(edges, out_path("03_edges.png"))
print("edge response peak:", float(edges.data.max()))

# Catmull-Rom bicubic upscaling (2x, 3x, or 4x).
big = resize_bicubic(image, 2)
print("upscaled:", image.width, "->", big.width)

# Edge-gated blur: blur only where the edge detector is quiet.
quiet = RegionMask(1.0 - edges.data[:, :, 0])
save_image(selective_apply(image, gaussian_blur(image, 2.5), quiet), out_path("03_edge_gated_blur.png"))
