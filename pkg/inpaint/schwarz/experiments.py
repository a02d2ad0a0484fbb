"""
The experiments behind the command line: single solver runs, the method
comparison with its convergence traces, the runtime scaling benchmark and
the sweep that calibrates the ORAS Robin parameter.
"""

import csv
import dataclasses
import enum
import logging
import math
import pathlib
import time

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from inpaint.schwarz.core import (ImageBuffer, InpaintingError, InpaintingMask,
                                  InvalidInput)
from inpaint.schwarz.decomposition import Flavour, SchwarzConfig, \
    solve_schwarz
from inpaint.schwarz.masks import random_mask
from inpaint.schwarz.metrics import ConvergenceTrace, format_psnr, \
    sufficient_residual
from inpaint.schwarz.multilevel import MultilevelConfig, Solver, \
    multilevel_solve
from inpaint.schwarz.solvers import SolverConfig

log = logging.getLogger(__name__)

SUMMARY_HEADER = ['method', 'iterations', 'time_ms', 'psnr',
                  'sufficient_residual']
BENCH_HEADER = ['pixels', 'method', 'time_ms']
CALIBRATION_ALPHAS = (0.1, 0.25, 0.5, 1.0, 2.0, 4.0)
# 30 frames per second
REAL_TIME_MS = 1000.0 / 30.0


class Method(enum.Enum):
    """The solvers the command line offers, single and multilevel."""
    CG = 'cg'
    MLCG = 'mlcg'
    RAS = 'ras'
    MLRAS = 'mlras'
    ORAS = 'oras'
    MLORAS = 'mloras'

    @property
    def multilevel(self) -> bool:
        return self.value.startswith('ml')

    @property
    def solver(self) -> Solver:
        name = self.value[2:] if self.multilevel else self.value
        return Solver(name)

    @classmethod
    def parse_list(cls, text: str) -> List['Method']:
        """
        Parses a comma separated method list.

        Raises
        ------
        InvalidInput
            On an unknown method name
        """
        methods = []
        for name in text.split(','):
            try:
                methods.append(cls(name.strip().lower()))
            except ValueError as e:
                choices = ', '.join(m.value for m in cls)
                raise InvalidInput(f"Unknown method '{name}', expected one "
                                   f"of {choices}") from e
        return methods


@dataclass
class SolverSettings:
    """
    Everything a run needs besides the problem.

    Attributes
    ----------
    schwarz
        RAS/ORAS parameters, including the target tolerance
    multilevel
        Pyramid parameters used by the multilevel methods
    cg
        CG parameters; its tolerance is overridden by the Schwarz one
    """

    schwarz: SchwarzConfig = dataclasses.field(default_factory=SchwarzConfig)
    multilevel: MultilevelConfig = dataclasses.field(
        default_factory=MultilevelConfig)
    cg: SolverConfig = dataclasses.field(
        default_factory=lambda: SolverConfig(max_iterations=20000))

    @property
    def tolerance(self) -> float:
        return self.schwarz.tolerance

    def with_tolerance(self, tolerance: float) -> 'SolverSettings':
        return SolverSettings(
            dataclasses.replace(self.schwarz, tolerance=tolerance),
            self.multilevel, self.cg)


@dataclass
class RunResult:
    method: Method
    image: ImageBuffer
    trace: ConvergenceTrace
    time_ms: float

    @property
    def converged(self) -> bool:
        return self.trace.converged

    @property
    def psnr(self) -> Optional[float]:
        return self.trace.final_psnr


def run_method(method: Method, image: ImageBuffer, mask: InpaintingMask,
               settings: Optional[SolverSettings] = None,
               reference: Optional[ImageBuffer] = None) -> RunResult:
    """
    Inpaints with one method. The wall-clock time covers the pyramid
    construction and all levels but no file I/O. Trace times leave out the
    PSNR measurements against :code:`reference`.
    """
    settings = SolverSettings() if settings is None else settings
    levels = settings.multilevel.levels if method.multilevel else 1
    ml_config = dataclasses.replace(settings.multilevel, levels=levels)
    cg_config = dataclasses.replace(settings.cg, tolerance=settings.tolerance)

    start = time.perf_counter()
    result, trace = multilevel_solve(image, mask, method.solver, ml_config,
                                     settings.schwarz, cg_config,
                                     reference=reference)
    elapsed = 1000.0 * (time.perf_counter() - start)
    log.info('%s: %d iteration(s) in %.1f ms, relative residual %.3e',
             method.value, trace.iterations, elapsed,
             trace.final_relative_residual)
    return RunResult(method, result, trace, elapsed)


def compare(image: ImageBuffer, mask: InpaintingMask,
            methods: Sequence[Method], out_dir,
            settings: Optional[SolverSettings] = None) -> List[RunResult]:
    """
    Runs every method against the same problem with :code:`image` as ground
    truth. Writes :code:`<method>.csv` convergence traces and a
    :code:`summary.csv` with iterations, time and PSNR at the tolerance plus
    the residual that already gave the final PSNR.

    Raises
    ------
    InpaintingError
        If the output directory can't be written
    """
    settings = SolverSettings() if settings is None else settings
    out_dir = pathlib.Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InpaintingError(f"Unable to create {out_dir}: {e}") from e

    results = [run_method(method, image, mask, settings, reference=image)
               for method in methods]
    for result in results:
        result.trace.to_csv(out_dir.joinpath(f"{result.method.value}.csv"))
    write_summary(results, settings.tolerance, out_dir.joinpath('summary.csv'))
    return results


def summary_rows(results: Sequence[RunResult],
                 tolerance: float) -> List[List[str]]:
    rows = []
    for result in results:
        trace = result.trace
        iterations = trace.iterations_to(tolerance)
        time_ms = trace.time_to(tolerance)
        sufficient = sufficient_residual(trace)
        rows.append([result.method.value,
                     '' if iterations is None else str(iterations),
                     '' if time_ms is None else f"{time_ms:.3f}",
                     format_psnr(trace.psnr_at(tolerance)),
                     '' if sufficient is None else f"{sufficient:.3e}"])
    return rows


def write_summary(results: Sequence[RunResult], tolerance: float, path):
    try:
        with open(path, 'w', encoding='utf8') as output_file:
            csv_writer = csv.writer(output_file, lineterminator='\n')
            csv_writer.writerow(SUMMARY_HEADER)
            csv_writer.writerows(summary_rows(results, tolerance))
    except OSError as e:
        raise InpaintingError(f"Unable to write summary {path}: {e}") from e


def _area_weights(source: int, target: int) -> sp.csr_matrix:
    """Averaging weights of a 1-D box filter from source to target pixels."""
    scale = source / target
    lower = np.arange(target) * scale
    upper = lower + scale
    span = int(math.ceil(scale)) + 1
    column = np.floor(lower).astype(np.int64)[:, np.newaxis] + np.arange(span)
    overlap = (np.minimum(upper[:, np.newaxis], column + 1) -
               np.maximum(lower[:, np.newaxis], column))
    valid = (overlap > 0) & (column < source)
    row = np.broadcast_to(np.arange(target)[:, np.newaxis], column.shape)
    return sp.csr_matrix((overlap[valid] / scale, (row[valid], column[valid])),
                         shape=(target, source))


def box_resample(image: ImageBuffer, width: int, height: int) -> ImageBuffer:
    """
    Resamples to :code:`width` x :code:`height` by area averaging: every
    target pixel is the mean of the source area it covers.
    """
    if width < 1 or height < 1:
        raise InvalidInput(f"Can't resample to {width}x{height}")
    rows = _area_weights(image.height, height)
    cols = _area_weights(image.width, width)
    planes = [np.asarray((rows @ (cols @ plane.T).T))
              for plane in image.data]
    return ImageBuffer(np.clip(np.stack(planes), 0.0, 1.0), source=True)


@dataclass
class BenchRow:
    width: int
    height: int
    method: Method
    time_ms: float
    converged: bool

    @property
    def pixels(self) -> int:
        return self.width * self.height


def bench(image: ImageBuffer, resolutions: Sequence[Tuple[int, int]],
          methods: Sequence[Method], density: float = 0.05, seed: int = 0,
          settings: Optional[SolverSettings] = None) -> List[BenchRow]:
    """
    Times every method at every resolution. The source is box filtered to
    each resolution and gets a fresh random mask of the given density.
    """
    settings = SolverSettings() if settings is None else settings
    rows = []
    for width, height in resolutions:
        scaled = box_resample(image, width, height)
        mask = random_mask(width, height, density, seed)
        for method in methods:
            result = run_method(method, scaled, mask, settings)
            rows.append(BenchRow(width, height, method, result.time_ms,
                                 result.converged))
            log.info('%dx%d %s: %.1f ms', width, height, method.value,
                     result.time_ms)
    return rows


def write_bench(rows: Sequence[BenchRow], path):
    try:
        with open(path, 'w', encoding='utf8') as output_file:
            csv_writer = csv.writer(output_file, lineterminator='\n')
            csv_writer.writerow(BENCH_HEADER)
            for row in rows:
                csv_writer.writerow([row.pixels, row.method.value,
                                     f"{row.time_ms:.3f}"])
    except OSError as e:
        raise InpaintingError(f"Unable to write benchmark {path}: {e}") from e


def loglog_slope(pixels: Sequence[float], times: Sequence[float]) -> float:
    """
    Least squares slope of :code:`log(time)` against :code:`log(pixels)`;
    1 means the runtime grows linearly with the image size.

    Raises
    ------
    InvalidInput
        With fewer than two distinct sizes or non-positive values
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if len(np.unique(pixels)) < 2:
        raise InvalidInput('Fitting a slope needs at least two sizes')
    if np.any(pixels <= 0) or np.any(times <= 0):
        raise InvalidInput('Sizes and times must be positive')
    return float(np.polyfit(np.log(pixels), np.log(times), 1)[0])


def calibrate_alpha(image: ImageBuffer, mask: InpaintingMask,
                    alphas: Sequence[float] = CALIBRATION_ALPHAS,
                    tolerance: float = 1e-6,
                    schwarz_config: Optional[SchwarzConfig] = None
                    ) -> Dict[float, Optional[int]]:
    """
    Outer ORAS iterations to :code:`tolerance` for every Robin parameter in
    :code:`alphas`, single level; :code:`None` where the iteration cap was
    hit first.
    """
    base = SchwarzConfig() if schwarz_config is None else schwarz_config
    counts = {}
    for alpha in alphas:
        config = dataclasses.replace(base, flavour=Flavour.ORAS, alpha=alpha,
                                     tolerance=tolerance)
        _, trace = solve_schwarz(image, mask, config=config)
        counts[alpha] = trace.iterations if trace.converged else None
        log.info('alpha %g: %s outer iteration(s)', alpha, counts[alpha])
    return counts


def best_alpha(counts: Dict[float, Optional[int]]) -> Optional[float]:
    """The parameter with the fewest iterations, ties to the smaller one."""
    converged = [(count, alpha) for alpha, count in counts.items()
                 if count is not None]
    return min(converged)[1] if converged else None
