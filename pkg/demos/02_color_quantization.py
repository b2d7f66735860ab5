"""
K-means color quantization
==========================

Cluster pixel colors into a small palette, optionally mixing in pixel
position so clusters become spatially coherent.
"""

import numpy as np

from gimpml import KMeansConfig, kmeans_cluster
from gimpml.project import save_image

from _demo_util import fixture_image, out_path

image = fixture_image(seed=2)

# Pure color clustering: at most k distinct output colors.
quantized, labels = kmeans_cluster(image, KMeansConfig(k=4, seed=7))
save_image(quantized, out_path("02_quantized_k4.png"))
print("distinct colors:", len({tuple(px) for px in quantized.data.reshape(-1, 3)}))

# The same seed reproduces the same clustering bit-for-bit.
again, _ = kmeans_cluster(image, KMeansConfig(k=4, seed=7))
assert again.data.tobytes() == quantized.data.tobytes()

# With (x, y) features appended (scaled to [0, 1]), clusters also localize.
spatial, labels = kmeans_cluster(image, KMeansConfig(k=6, seed=7, use_position=True))
save_image(spatial, out_path("02_quantized_spatial.png"))
print("cluster sizes:", np.bincount(labels.labels.reshape(-1)).tolist())
