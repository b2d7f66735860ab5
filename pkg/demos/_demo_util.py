"""Shared output-directory helper for the demo scripts."""

from pathlib import Path


def out_path(name: str) -> Path:
    out_dir = Path(__file__).resolve().parent / "output"
    out_dir.mkdir(exist_ok=True)
    return out_dir / name


def fixture_image(seed: int = 0, size: int = 96):
    """A deterministic two-region test card with a little texture."""
    import numpy as np

    from gimpml import ImageBuffer

    rng = np.random.default_rng(seed)
    arr = np.zeros((size, size, 3), dtype=np.float64)
    arr[:, : size // 2] = (0.55, 0.30, 0.20)
    arr[:, size // 2 :] = (0.15, 0.35, 0.70)
    yy, xx = np.mgrid[0:size, 0:size]
    disk = (xx - size * 0.35) ** 2 + (yy - size * 0.4) ** 2 <= (size * 0.18) ** 2
    arr[disk] = (0.85, 0.75, 0.35)
    arr += rng.normal(0.0, 0.02, arr.shape)
    return ImageBuffer(arr.clip(0.0, 1.0))
