"""Deterministic test images for benchmarks and tests."""

import numpy as np
import scipy.ndimage as ndimage

from inpaint.schwarz.core import ImageBuffer, InvalidInput


def sample_image(width: int, height: int, channels: int = 3,
                 seed: int = 0) -> ImageBuffer:
    """
    A piecewise smooth image with sharp edges and some texture: smooth
    gradients and waves, a disc and a rectangle with constant colours, and
    smoothed noise. Shapes are laid out in normalised coordinates, so
    different resolutions show the same scene.

    Raises
    ------
    InvalidInput
        If the size is empty or :code:`channels` isn't 1 or 3
    """
    if width < 1 or height < 1:
        raise InvalidInput(f"Can't draw a {width}x{height} image")
    if channels not in (1, 3):
        raise InvalidInput(f"Images have 1 or 3 channels, got {channels}")

    rng = np.random.default_rng(seed)
    y, x = np.meshgrid((np.arange(height) + 0.5) / height,
                       (np.arange(width) + 0.5) / width, indexing='ij')

    planes = []
    for c in range(channels):
        phase = rng.uniform(0, 2 * np.pi)
        plane = (0.35 + 0.25 * x * (c + 1) / channels + 0.15 * y +
                 0.1 * np.sin(2 * np.pi * (1.5 * x + y) + phase))

        cx, cy, radius = rng.uniform(0.3, 0.7, 2).tolist() + \
            [rng.uniform(0.1, 0.2)]
        disc = (x - cx) ** 2 + (y - cy) ** 2 < radius ** 2
        plane = np.where(disc, rng.uniform(0.6, 0.95), plane)

        left, top = rng.uniform(0.05, 0.4, 2)
        box = (x > left) & (x < left + 0.3) & (y > top) & (y < top + 0.2)
        plane = np.where(box, rng.uniform(0.05, 0.3), plane)

        noise = ndimage.gaussian_filter(rng.standard_normal((height, width)),
                                        sigma=max(1.0, min(width, height) / 64))
        planes.append(plane + 0.05 * noise / max(noise.std(), 1e-12))

    return ImageBuffer(np.clip(np.stack(planes), 0.0, 1.0), source=True)
