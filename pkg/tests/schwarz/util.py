# pylint: disable=missing-docstring

import os
import pathlib
import tempfile
import time
import unittest

from typing import Callable, Tuple

import numpy as np

from inpaint.schwarz.core import (ImageBuffer, InpaintingMask,
                                  assemble_operator, build_rhs)
from inpaint.schwarz.masks import random_mask
from inpaint.schwarz.metrics import psnr

SLOW_ENV = 'SCHWARZ_INPAINT_SLOW'

slow = unittest.skipUnless(os.environ.get(SLOW_ENV) == '1',
                           f"timing experiment; set {SLOW_ENV}=1 to run")


def random_image(width: int, height: int, channels: int = 1,
                 seed: int = 0) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.uniform(size=(channels, height, width)),
                       source=True)


def random_problem(width: int, height: int, density: float,
                   channels: int = 1,
                   seed: int = 0) -> Tuple[ImageBuffer, InpaintingMask]:
    return (random_image(width, height, channels, seed),
            random_mask(width, height, density, seed))


def dense_solution(image: ImageBuffer, mask: InpaintingMask) -> np.ndarray:
    """Direct solve of the full inpainting system, shape (channels, N)."""
    matrix = assemble_operator(mask).toarray()
    b = build_rhs(image.vectors(), mask)
    return np.linalg.solve(matrix, b.T).T


def sleeping_psnr(delay: float) -> Callable[[ImageBuffer, ImageBuffer], float]:
    """psnr, slowed down by :code:`delay` seconds a call."""
    def measure(u: ImageBuffer, f: ImageBuffer) -> float:
        time.sleep(delay)
        return psnr(u, f)
    return measure


class TestWithTempDirectory(unittest.TestCase):
    test_dir: tempfile.TemporaryDirectory

    def setUp(self):
        self.test_dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.test_dir.cleanup()

    def output_path(self, name: str) -> pathlib.Path:
        return pathlib.Path(self.test_dir.name).joinpath(name)
