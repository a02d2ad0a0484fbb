"""
Inpainting mask generation.

:func:`random_mask` is the uniform baseline. :func:`voronoi_densify` grows a
sparse random mask greedily: every sweep inpaints with the current mask,
splits the image into the Voronoi cells of the mask pixels and adds a pixel
to the cells with the largest reconstruction error.
"""

import dataclasses
import logging

from dataclasses import dataclass
from typing import Optional

import numpy as np

from scipy.spatial import cKDTree

from inpaint.schwarz.core import ImageBuffer, InpaintingMask, InvalidInput
from inpaint.schwarz.decomposition import SchwarzConfig
from inpaint.schwarz.multilevel import MultilevelConfig, Solver, \
    multilevel_solve

log = logging.getLogger(__name__)

# nearest mask points considered when breaking distance ties
TIE_NEIGHBOURS = 16


def _known_count(pixels: int, density: float) -> int:
    if not 0 < density <= 1:
        raise InvalidInput(f"Density must lie in (0, 1], got {density}")
    count = int(round(density * pixels))
    if count == 0:
        raise InvalidInput(f"Density {density} gives no known pixel in an "
                           f"image of {pixels} pixels")
    return count


def random_mask(width: int, height: int, density: float,
                seed: Optional[int] = None) -> InpaintingMask:
    """
    A mask with exactly :code:`round(density * width * height)` known pixels
    drawn without replacement. Deterministic for a given seed.

    Raises
    ------
    InvalidInput
        If the density is outside (0, 1] or rounds to no pixel
    """
    pixels = width * height
    count = _known_count(pixels, density)
    rng = np.random.default_rng(seed)
    known = np.zeros(pixels, dtype=bool)
    known[rng.choice(pixels, size=count, replace=False)] = True
    return InpaintingMask(known.reshape(height, width))


def voronoi_cells(mask: InpaintingMask) -> np.ndarray:
    """
    Assigns every pixel to its nearest known pixel (Euclidean distance, ties
    to the lower pixel index). Returns, per pixel, the rank of that known
    pixel in row-major order; known pixels are their own cell.
    """
    points = np.flatnonzero(mask.flat())
    coordinates = np.column_stack(np.divmod(points, mask.width))
    grid = np.indices(mask.shape).reshape(2, -1).T

    neighbours = min(TIE_NEIGHBOURS, len(points))
    distance, cell = cKDTree(coordinates).query(grid, k=neighbours)
    if neighbours == 1:
        return cell.astype(np.int64)
    tied = distance == distance[:, :1]
    return np.where(tied, cell, len(points)).min(axis=1)


@dataclass
class DensificationResult:
    """
    Attributes
    ----------
    mask
        The densified mask, or the best so far when the target wasn't reached
    reached_target
        Whether the target density was reached within the sweep cap
    sweeps
        Number of densification sweeps done
    """

    mask: InpaintingMask
    reached_target: bool
    sweeps: int


def densify_once(image: ImageBuffer, mask: InpaintingMask,
                 reconstruction: ImageBuffer, budget: int,
                 fraction: float = 0.2) -> InpaintingMask:
    """
    One densification step: adds up to :code:`budget` pixels, one in each of
    the :code:`fraction` of Voronoi cells with the largest summed squared
    error (ties to larger cells, then to lower cell index). Within a cell the
    pixel with the largest error is chosen, ties to the one farthest from the
    cell's mask pixel.
    """
    cells = voronoi_cells(mask)
    known = mask.flat()
    points = np.flatnonzero(known)
    error = np.sum((reconstruction.vectors() - image.vectors()) ** 2, axis=0)

    cell_error = np.bincount(cells, weights=error, minlength=len(points))
    area = np.bincount(cells, minlength=len(points))
    order = np.lexsort((np.arange(len(points)), -area, -cell_error))
    # cells made of their mask pixel alone have nothing to offer
    order = order[area[order] > 1]
    chosen = order[:min(budget, max(1, int(np.ceil(fraction * len(points)))))]

    candidates = np.flatnonzero(~known)
    candidate_cells = cells[candidates]
    generator = points[candidate_cells]
    dy = candidates // mask.width - generator // mask.width
    dx = candidates % mask.width - generator % mask.width
    ranked = np.lexsort((candidates, -(dy ** 2 + dx ** 2),
                         -error[candidates], candidate_cells))
    first = np.unique(candidate_cells[ranked], return_index=True)
    best = dict(zip(first[0], candidates[ranked][first[1]]))

    grown = known.copy()
    grown[np.array([best[c] for c in chosen], dtype=np.int64)] = True
    return InpaintingMask(grown.reshape(mask.shape))


def voronoi_densify(image: ImageBuffer, target: float, initial: float = 0.01,
                    steps: int = 100, seed: Optional[int] = None,
                    fraction: float = 0.2, tolerance: float = 1e-3,
                    levels: int = 3,
                    schwarz_config: Optional[SchwarzConfig] = None
                    ) -> DensificationResult:
    """
    Grows a random mask of density :code:`initial` to density
    :code:`target` by Voronoi densification.

    Every sweep inpaints with multilevel ORAS to :code:`tolerance` and adds
    a pixel to each of the worst :code:`fraction` of Voronoi cells, never
    overshooting the target pixel count. Cells with equal error are picked
    by area.

    Parameters
    ----------
    image
        Ground truth the mask values come from
    target
        Target density
    initial
        Density of the starting random mask; it starts from a single pixel
        when the density rounds to none
    steps
        Sweep cap
    seed
        Seed of the starting mask
    fraction
        Share of cells that receive a pixel per sweep
    tolerance
        Relative residual of the inpainting in every sweep
    levels
        Pyramid levels of the inpainting
    schwarz_config
        Base Schwarz parameters of the inpainting

    Returns
    -------
    result
        The mask, and whether :code:`target` was reached within
        :code:`steps` sweeps

    Raises
    ------
    InvalidInput
        Unless :code:`0 < initial < target` and :code:`0 < fraction <= 1`
    """
    if not 0 < initial < target:
        raise InvalidInput(f"The initial density {initial} must be positive "
                           f"and below the target {target}")
    if not 0 < fraction <= 1:
        raise InvalidInput(f"fraction must lie in (0, 1], got {fraction}")
    goal = _known_count(image.pixels, target)
    start = max(1, int(round(initial * image.pixels)))
    mask = random_mask(image.width, image.height, start / image.pixels, seed)

    base = SchwarzConfig() if schwarz_config is None else schwarz_config
    config = dataclasses.replace(base, tolerance=tolerance)
    ml_config = MultilevelConfig(levels=levels)

    sweeps = 0
    while mask.count < goal and sweeps < steps:
        reconstruction, _ = multilevel_solve(image, mask, Solver.ORAS,
                                             ml_config, config)
        grown = densify_once(image, mask, reconstruction,
                             goal - mask.count, fraction)
        sweeps += 1
        if grown.count == mask.count:
            break
        mask = grown
        log.debug('Densification sweep %d: %d of %d mask pixels', sweeps,
                  mask.count, goal)

    reached = mask.count >= goal
    if not reached:
        log.warning('Voronoi densification stopped at density %.4f after %d '
                    'sweep(s), short of %.4f', mask.density, sweeps, target)
    else:
        log.info('Voronoi densification reached %d mask pixels in %d '
                 'sweep(s)', mask.count, sweeps)
    return DensificationResult(mask, reached, sweeps)
