"""
Coarse-to-fine acceleration.

The mask and its known values are subsampled dyadically: a coarse pixel is
known if any of the (up to) four fine pixels below it is, and takes the mean
of their known values. The coarsest problem is solved from a zero initial
guess, and each solution, bilinearly interpolated, initialises the next finer
level. Since coarse masks are denser, coarse solves are cheap and their
solutions already carry the large-scale structure the fine solver would
otherwise have to diffuse over long distances.
"""

import dataclasses
import enum
import logging
import time

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from inpaint.schwarz.core import (ImageBuffer, InpaintingMask, InvalidInput,
                                  build_rhs)
from inpaint.schwarz.decomposition import (Flavour, SchwarzConfig,
                                           SubdomainPartition,
                                           partition_domain, solve_schwarz)
from inpaint.schwarz.metrics import ConvergenceTrace
from inpaint.schwarz.solvers import SolverConfig, solve_cg

log = logging.getLogger(__name__)


class Averaging(enum.Enum):
    """Which fine pixels a coarse value averages over."""
    KNOWN = 'known'
    ALL = 'all'


class Solver(enum.Enum):
    CG = 'cg'
    RAS = 'ras'
    ORAS = 'oras'


@dataclass
class LevelProblem:
    """
    The inpainting problem on one level of a :class:`Pyramid`.

    Attributes
    ----------
    level
        0 for the finest level
    mask
        The level's mask
    values
        Pixel values at the level's resolution; only those at known pixels
        enter the solve
    partition
        Block layout for Schwarz solves on this level
    """

    level: int
    mask: InpaintingMask
    values: ImageBuffer
    partition: SubdomainPartition


@dataclass
class Pyramid:
    levels: List[LevelProblem]

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> LevelProblem:
        return self.levels[0]

    @property
    def coarsest(self) -> LevelProblem:
        return self.levels[-1]


@dataclass
class MultilevelConfig:
    """
    Attributes
    ----------
    levels
        Number of pyramid levels, including the finest
    coarse_tolerance
        Relative residual coarse levels are solved to
    averaging
        Known-only or all-pixel averaging of coarse values
    """

    levels: int = 3
    coarse_tolerance: float = 1e-2
    averaging: Averaging = Averaging.KNOWN

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidInput(f"Need at least one level, got {self.levels}")
        if not self.coarse_tolerance > 0:
            raise InvalidInput(f"Tolerance must be positive, got "
                               f"{self.coarse_tolerance}")


def _pair_reduce(ufunc: np.ufunc, array: np.ndarray) -> np.ndarray:
    height, width = array.shape[-2:]
    rows = ufunc.reduceat(array, np.arange(0, height, 2), axis=-2)
    return ufunc.reduceat(rows, np.arange(0, width, 2), axis=-1)


def restrict_mask(mask: InpaintingMask, values: ImageBuffer,
                  averaging: Averaging = Averaging.KNOWN
                  ) -> Tuple[InpaintingMask, ImageBuffer]:
    """
    Halves the resolution of a mask and its values. Coarse pixel
    :code:`(i, j)` covers the fine pixels :code:`2i..2i+1, 2j..2j+1`,
    clipped at odd edges.

    The coarse pixel is known if any of its fine pixels is. Its value is the
    mean of the known fine values (or of all fine values with
    :attr:`Averaging.ALL`); if those are all equal the value is passed
    through exactly.

    Raises
    ------
    InvalidInput
        If the mask is smaller than 2x2 or doesn't match the values
    """
    mask.check_matches(values)
    if mask.height < 2 or mask.width < 2:
        raise InvalidInput(f"Can't subsample a {mask.width}x{mask.height} "
                           'mask')

    known = mask.known
    coarse_known = _pair_reduce(np.add, known.astype(np.int64)) > 0
    weight = known if averaging is Averaging.KNOWN else np.ones_like(known)

    data = values.data
    count = _pair_reduce(np.add, weight.astype(np.float64))
    total = _pair_reduce(np.add, np.where(weight, data, 0.0))
    highest = _pair_reduce(np.maximum, np.where(weight, data, -np.inf))
    lowest = _pair_reduce(np.minimum, np.where(weight, data, np.inf))

    mean = total / np.where(count > 0, count, 1.0)
    coarse = np.where(highest == lowest, highest, mean)
    return InpaintingMask(coarse_known), ImageBuffer(coarse)


def _axis_weights(fine: int,
                  coarse: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    position = np.clip((np.arange(fine) + 0.5) / 2.0 - 0.5, 0, coarse - 1)
    lower = np.floor(position).astype(np.int64)
    upper = np.minimum(lower + 1, coarse - 1)
    return lower, upper, position - lower


def prolongate(coarse: np.ndarray, fine_shape: Tuple[int, int]) -> np.ndarray:
    """
    Bilinear interpolation of :code:`coarse`, shape (..., h, w), to
    :code:`fine_shape` with half-pixel alignment: fine pixel :code:`x` sits
    at coarse position :code:`(x + 0.5) / 2 - 0.5`, clamped at the edges.

    Raises
    ------
    InvalidInput
        Unless the coarse size is :code:`ceil(fine / 2)` on both axes
    """
    coarse = np.asarray(coarse, dtype=np.float64)
    height, width = fine_shape
    expected = (-(-height // 2), -(-width // 2))
    if coarse.shape[-2:] != expected:
        raise InvalidInput(f"Can't prolongate {coarse.shape[-2:]} to "
                           f"{fine_shape}; expected a coarse size of "
                           f"{expected}")

    y0, y1, ty = _axis_weights(height, expected[0])
    x0, x1, tx = _axis_weights(width, expected[1])
    top = coarse[..., y0, :]
    rows = top + ty[:, np.newaxis] * (coarse[..., y1, :] - top)
    left = rows[..., x0]
    return left + tx * (rows[..., x1] - left)


def build_pyramid(f: ImageBuffer, mask: InpaintingMask, levels: int = 3,
                  averaging: Averaging = Averaging.KNOWN,
                  block_size: int = 32, overlap: int = 6) -> Pyramid:
    """
    Subsamples the problem :code:`levels - 1` times. Stops early, with a
    warning, once a level is narrower than 2 pixels.
    """
    if levels < 1:
        raise InvalidInput(f"Need at least one level, got {levels}")
    mask.check_matches(f)

    problems = [LevelProblem(0, mask, f,
                             partition_domain(f.width, f.height, block_size,
                                              overlap))]
    while len(problems) < levels:
        last = problems[-1]
        if min(last.mask.shape) < 2:
            log.warning('Stopping the pyramid at %d level(s): level %d is '
                        'only %dx%d', len(problems), last.level,
                        last.mask.width, last.mask.height)
            break
        coarse_mask, coarse_values = restrict_mask(last.mask, last.values,
                                                   averaging)
        problems.append(
            LevelProblem(last.level + 1, coarse_mask, coarse_values,
                         partition_domain(coarse_mask.width,
                                          coarse_mask.height, block_size,
                                          overlap)))
    return Pyramid(problems)


def multilevel_solve(f: ImageBuffer, mask: InpaintingMask,
                     solver: Solver = Solver.ORAS,
                     ml_config: Optional[MultilevelConfig] = None,
                     schwarz_config: Optional[SchwarzConfig] = None,
                     cg_config: Optional[SolverConfig] = None,
                     tolerances: Optional[Sequence[float]] = None,
                     reference: Optional[ImageBuffer] = None
                     ) -> Tuple[ImageBuffer, ConvergenceTrace]:
    """
    Solves the inpainting problem coarse to fine.

    Every level uses the same solver. The returned trace only covers the
    finest level; its relative residuals are measured against the residual
    of the zero iterate on the finest level, and its times include the
    pyramid construction and all coarse work. Its :code:`converged` flag is
    only set when every level reached its tolerance. With a single level
    this is exactly the single-level solver.

    Parameters
    ----------
    f
        Image carrying the known values
    mask
        Inpainting mask
    solver
        CG, RAS or ORAS
    ml_config
        Level count, coarse tolerance and averaging
    schwarz_config
        Parameters of RAS/ORAS solves; its tolerance is the finest level's
        target. The flavour is taken from :code:`solver`.
    cg_config
        Parameters of CG solves; its tolerance is the finest level's target
    tolerances
        Per level tolerances, finest first, overriding the defaults
    reference
        Ground truth for PSNR rows of the finest level trace

    Returns
    -------
    (image, trace)
        The finest level reconstruction and its trace

    Raises
    ------
    InvalidInput
        If :code:`tolerances` doesn't have one entry per level
    """
    start = time.perf_counter()
    ml_config = MultilevelConfig() if ml_config is None else ml_config
    schwarz_config = SchwarzConfig() if schwarz_config is None \
        else schwarz_config
    cg_config = SolverConfig(tolerance=schwarz_config.tolerance) \
        if cg_config is None else cg_config

    pyramid = build_pyramid(f, mask, ml_config.levels, ml_config.averaging,
                            schwarz_config.block_size, schwarz_config.overlap)
    finest_tolerance = cg_config.tolerance if solver is Solver.CG \
        else schwarz_config.tolerance
    if tolerances is None:
        tolerances = [finest_tolerance] + \
            [ml_config.coarse_tolerance] * (len(pyramid) - 1)
    elif len(tolerances) != len(pyramid):
        raise InvalidInput(f"Got {len(tolerances)} tolerance(s) for "
                           f"{len(pyramid)} level(s)")

    u0 = None
    unconverged = []
    for problem in reversed(pyramid.levels):
        known_values = problem.values.vectors()
        b = build_rhs(known_values, problem.mask)
        r0_norm = float(np.linalg.norm(b))
        if u0 is not None:
            u0 = np.where(problem.mask.flat(), known_values, u0)

        finest = problem.level == 0
        level_reference = reference if finest else None
        tolerance = tolerances[problem.level]
        if solver is Solver.CG:
            image, trace = solve_cg(
                problem.values, problem.mask,
                dataclasses.replace(cg_config, tolerance=tolerance),
                u0=u0, r0_norm=r0_norm, reference=level_reference,
                clock_start=start)
        else:
            config = dataclasses.replace(schwarz_config,
                                         flavour=Flavour(solver.value),
                                         tolerance=tolerance)
            image, trace = solve_schwarz(problem.values, problem.mask,
                                         problem.partition, config, u0=u0,
                                         r0_norm=r0_norm,
                                         reference=level_reference,
                                         clock_start=start)

        log.info('Level %d (%dx%d): %d %s iteration(s), relative residual '
                 '%.3e', problem.level, problem.mask.width,
                 problem.mask.height, trace.iterations, solver.name,
                 trace.final_relative_residual)
        if not trace.converged:
            unconverged.append(problem.level)
        if not finest:
            finer = pyramid.levels[problem.level - 1]
            u0 = prolongate(image.data, finer.mask.shape).reshape(
                image.channels, -1)

    if unconverged:
        log.warning('Level(s) %s missed their tolerance',
                    ', '.join(str(level) for level in sorted(unconverged)))
        trace.converged = False
    return image, trace
