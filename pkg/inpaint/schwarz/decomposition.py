"""
Overlapping block decomposition and the restricted additive Schwarz
iteration.

The image is covered by overlapping square blocks :math:`\\Omega_i`. One outer
iteration restricts the global residual to every block, solves the local
problem

.. math::

    R_i A R_i^T v_i = R_i r^n

and adds the corrections back through a partition of unity,
:math:`u^{n+1} = u^n + \\sum_i R_i^T D_i v_i`. Here :math:`D_i` is the 0/1
indicator of the pixels block :math:`i` *owns* (those nearest to its centre),
so every pixel takes its correction from exactly one block.

Local problems drop the couplings to pixels outside their block, an implicit
zero Dirichlet condition at the artificial boundary (RAS). The optimised
flavour (ORAS) instead replaces each cut coupling by a Robin condition with
parameter :math:`\\alpha`, which changes the centre weight of the stencil at
artificial boundary pixels to :math:`d - 1 + \\alpha` per cut edge.

Local problems all have the same size (the last block of a row or column is
shifted back inside the image instead of being shrunk), so they are solved in
chunks of blocks with the batched CG of :mod:`solvers`, one chunk per task of
the worker pool.
"""

import enum
import logging
import math
import time

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from inpaint.schwarz.core import (ImageBuffer, InpaintingMask,
                                  InpaintingOperator, InvalidInput, build_rhs)
from inpaint.schwarz.metrics import ConvergenceTrace, psnr
from inpaint.schwarz.parallel import map_blocks, resolve_threads, worker_pool
from inpaint.schwarz.solvers import (BatchSolveReport, ResidualNorm,
                                     SolverConfig, cg_solve_many)

log = logging.getLogger(__name__)

# Robin parameter of the ORAS transmission condition: the setting needing the
# fewest outer iterations in the `schwarzinpaint calibrate` sweep (256x256
# image, 5% known pixels, relative residual 1e-6).
DEFAULT_ALPHA = 0.25

# upper bound on the blocks of one batched local solve
DEFAULT_BATCH_BLOCKS = 64
# lower bound on a chunk unless batch_blocks is smaller
MIN_CHUNK_BLOCKS = 8
CHUNKS_PER_THREAD = 4
# local solves at least this loose run in single precision
SINGLE_PRECISION_TOLERANCE = 1e-4


class Flavour(enum.Enum):
    RAS = 'ras'
    ORAS = 'oras'


@dataclass(frozen=True)
class Subdomain:
    """
    One block of a :class:`SubdomainPartition`.

    Attributes
    ----------
    index
        Block index, row-major over the block grid
    x0, y0
        Top left pixel of the block
    w, h
        Block extent
    owned
        The owned rectangle :code:`(x0, y0, w, h)` in image coordinates
    """

    index: int
    x0: int
    y0: int
    w: int
    h: int
    owned: Tuple[int, int, int, int]

    @property
    def rows(self) -> slice:
        return slice(self.y0, self.y0 + self.h)

    @property
    def cols(self) -> slice:
        return slice(self.x0, self.x0 + self.w)

    @property
    def owned_rows(self) -> slice:
        return slice(self.owned[1], self.owned[1] + self.owned[3])

    @property
    def owned_cols(self) -> slice:
        return slice(self.owned[0], self.owned[0] + self.owned[2])

    @property
    def size(self) -> int:
        return self.w * self.h


def _axis_anchors(extent: int, block_size: int, overlap: int) -> np.ndarray:
    if extent <= block_size:
        return np.zeros(1, dtype=np.int64)
    stride = block_size - overlap
    count = -(-(extent - block_size) // stride) + 1
    anchors = np.arange(count, dtype=np.int64) * stride
    anchors[-1] = extent - block_size
    return anchors


def _axis_owners(extent: int, anchors: np.ndarray, size: int) -> np.ndarray:
    centres = anchors + (size - 1) / 2.0
    distance = np.abs(np.arange(extent)[:, np.newaxis] - centres[np.newaxis])
    # argmin picks the first minimum, so ties go to the lower block
    return np.argmin(distance, axis=1)


def _owned_range(owners: np.ndarray, block: int) -> Tuple[int, int]:
    owned = np.flatnonzero(owners == block)
    return int(owned[0]), int(owned[-1] - owned[0] + 1)


class SubdomainPartition:
    """
    Overlapping block layout of a :code:`width` x :code:`height` image.

    Blocks are anchored every :code:`block_size - overlap` pixels; the last
    block of each axis is shifted to end at the image edge. Along an axis no
    longer than :code:`block_size` there is a single block spanning it.

    Attributes
    ----------
    width, height
        Image size
    block_size, overlap
        Requested geometry
    block_width, block_height
        Actual block extent, :code:`block_size` clipped to the image
    anchors_x, anchors_y
        Block anchors per axis
    owner_x, owner_y
        Owning block column (row) of every pixel column (row)
    subdomains
        All blocks, row-major over the block grid
    """

    def __init__(self, width: int, height: int, block_size: int,
                 overlap: int):
        """
        Raises
        ------
        InvalidInput
            Unless :code:`0 < overlap < block_size` and the image is
            non-empty
        """
        check_geometry(block_size, overlap)
        if width < 1 or height < 1:
            raise InvalidInput(f"Can't partition a {width}x{height} image")

        self.width = width
        self.height = height
        self.block_size = block_size
        self.overlap = overlap
        self.block_width = min(block_size, width)
        self.block_height = min(block_size, height)
        self.anchors_x = _axis_anchors(width, block_size, overlap)
        self.anchors_y = _axis_anchors(height, block_size, overlap)
        self.owner_x = _axis_owners(width, self.anchors_x, self.block_width)
        self.owner_y = _axis_owners(height, self.anchors_y, self.block_height)

        self.subdomains: List[Subdomain] = []
        for by, y0 in enumerate(self.anchors_y):
            oy, oh = _owned_range(self.owner_y, by)
            for bx, x0 in enumerate(self.anchors_x):
                ox, ow = _owned_range(self.owner_x, bx)
                self.subdomains.append(
                    Subdomain(len(self.subdomains), int(x0), int(y0),
                              self.block_width, self.block_height,
                              (ox, oy, ow, oh)))

    def __len__(self) -> int:
        return len(self.subdomains)

    def __getitem__(self, index: int) -> Subdomain:
        return self.subdomains[index]

    @property
    def grid_shape(self) -> Tuple[int, int]:
        """Blocks per column and per row."""
        return len(self.anchors_y), len(self.anchors_x)

    @property
    def block_pixels(self) -> int:
        return self.block_width * self.block_height

    def _split(self, blocks: Optional[Sequence[int]]
               ) -> Tuple[np.ndarray, np.ndarray]:
        if blocks is None:
            blocks = np.arange(len(self))
        blocks = np.asarray(blocks, dtype=np.int64)
        nx = len(self.anchors_x)
        return blocks // nx, blocks % nx

    def block_rows(self, blocks: Optional[Sequence[int]] = None) -> np.ndarray:
        """Image rows covered by each block, shape (k, block_height)."""
        by, _ = self._split(blocks)
        return self.anchors_y[by][:, np.newaxis] + np.arange(self.block_height)

    def block_cols(self, blocks: Optional[Sequence[int]] = None) -> np.ndarray:
        """Image columns covered by each block, shape (k, block_width)."""
        _, bx = self._split(blocks)
        return self.anchors_x[bx][:, np.newaxis] + np.arange(self.block_width)

    def gather(self, grid: np.ndarray,
               blocks: Optional[Sequence[int]] = None) -> np.ndarray:
        """
        Cuts the blocks out of :code:`grid`, shape (..., height, width), into
        an array of shape (..., k, block_height, block_width).
        """
        rows = self.block_rows(blocks)
        cols = self.block_cols(blocks)
        return grid[..., rows[:, :, np.newaxis], cols[:, np.newaxis, :]]

    def owned_mask(self, blocks: Optional[Sequence[int]] = None) -> np.ndarray:
        """Per-block :math:`D_i`, shape (k, block_height, block_width)."""
        by, bx = self._split(blocks)
        rows = self.owner_y[self.block_rows(blocks)] == by[:, np.newaxis]
        cols = self.owner_x[self.block_cols(blocks)] == bx[:, np.newaxis]
        return rows[:, :, np.newaxis] & cols[:, np.newaxis, :]

    def global_index(self,
                     blocks: Optional[Sequence[int]] = None) -> np.ndarray:
        """Flat image index of every block pixel."""
        rows = self.block_rows(blocks)
        cols = self.block_cols(blocks)
        return (rows[:, :, np.newaxis] * self.width +
                cols[:, np.newaxis, :])

    def check_index(self, i: int):
        if not 0 <= i < len(self):
            raise InvalidInput(f"No subdomain {i} in a partition of "
                               f"{len(self)}")


def check_geometry(block_size: int, overlap: int):
    if not 0 < overlap < block_size:
        raise InvalidInput(f"Need 0 < overlap < block size, got overlap "
                           f"{overlap} and block size {block_size}")


def partition_domain(width: int, height: int, block_size: int = 32,
                     overlap: int = 6) -> SubdomainPartition:
    """
    Covers the image with overlapping blocks. A 3840x2160 image with the
    default geometry gives 148 x 83 = 12284 blocks.

    Raises
    ------
    InvalidInput
        If :code:`overlap >= block_size` or either isn't positive
    """
    partition = SubdomainPartition(width, height, block_size, overlap)
    ny, nx = partition.grid_shape
    log.debug('Partitioned %dx%d into %dx%d blocks of %dx%d', width, height,
              nx, ny, partition.block_width, partition.block_height)
    return partition


def restrict(partition: SubdomainPartition, i: int,
             v: np.ndarray) -> np.ndarray:
    """
    Applies :math:`R_i`: the entries of :code:`v` (shape (..., N)) inside
    block :code:`i`, in row-major local order.
    """
    partition.check_index(i)
    v = np.asarray(v)
    sub = partition[i]
    grid = v.reshape(v.shape[:-1] + (partition.height, partition.width))
    return grid[..., sub.rows, sub.cols].reshape(v.shape[:-1] + (sub.size,))


def extend_weighted(partition: SubdomainPartition, i: int,
                    v_local: np.ndarray) -> np.ndarray:
    """
    Applies :math:`R_i^T D_i`: a global vector that is zero everywhere except
    on the pixels block :code:`i` owns, where it takes the local values.
    """
    partition.check_index(i)
    v_local = np.asarray(v_local, dtype=np.float64)
    sub = partition[i]
    if v_local.shape[-1] != sub.size:
        raise InvalidInput(f"Local vector has length {v_local.shape[-1]}, "
                           f"block {i} has {sub.size} pixels")

    lead = v_local.shape[:-1]
    local = v_local.reshape(lead + (sub.h, sub.w))
    grid = np.zeros(lead + (partition.height, partition.width))
    oy, ox = sub.owned_rows, sub.owned_cols
    grid[..., oy, ox] = local[..., oy.start - sub.y0:oy.stop - sub.y0,
                              ox.start - sub.x0:ox.stop - sub.x0]
    return grid.reshape(lead + (partition.width * partition.height,))


@dataclass
class LocalStencil:
    """
    The local operators of a batch of blocks as 5-point stencils, arrays of
    shape (k, block_height, block_width).

    Every unknown pixel couples with weight :math:`-1` to each of its
    neighbours inside the block; known pixels are identity rows.

    Attributes
    ----------
    centre
        Diagonal weight; 1 at known pixels
    unknown
        1.0 at unknown pixels, 0.0 at known ones
    known
        Known pixel indicator
    """

    centre: np.ndarray
    unknown: np.ndarray
    known: np.ndarray

    def apply(self, v: np.ndarray, scratch: Optional[np.ndarray] = None
              ) -> np.ndarray:
        """
        Applies the local operators to :code:`v`, shape (..., k, bh, bw).
        :code:`scratch`, shaped like :code:`v`, is overwritten if given.
        """
        s = np.empty_like(v) if scratch is None else scratch
        # sum of the in-block neighbours
        s[..., :, 0] = 0.0
        s[..., :, 1:] = v[..., :, :-1]
        s[..., :, :-1] += v[..., :, 1:]
        s[..., 1:, :] += v[..., :-1, :]
        s[..., :-1, :] += v[..., 1:, :]
        s *= self.unknown
        out = self.centre * v
        out -= s
        return out

    def to_sparse(self, j: int) -> sp.csr_matrix:
        """Block :code:`j` of the batch as an explicit matrix."""
        bh, bw = self.centre.shape[1:]
        n = bh * bw
        index = np.arange(n).reshape(bh, bw)
        y, x = np.nonzero(self.unknown[j])
        rows, cols = [], []
        for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            inside = (y + dy >= 0) & (y + dy < bh) & (x + dx >= 0) & \
                (x + dx < bw)
            rows.append(index[y[inside], x[inside]])
            cols.append(index[y[inside] + dy, x[inside] + dx])
        row = np.concatenate(rows)
        col = np.concatenate(cols)
        coupling = sp.coo_matrix((-np.ones(len(row)), (row, col)),
                                 shape=(n, n))
        return (sp.diags(self.centre[j].ravel()) + coupling).tocsr()

    def astype(self, dtype) -> 'LocalStencil':
        return LocalStencil(self.centre.astype(dtype, copy=False),
                            self.unknown.astype(dtype, copy=False),
                            self.known)


def local_stencils(op: InpaintingOperator, partition: SubdomainPartition,
                   blocks: Sequence[int], flavour: Flavour,
                   alpha: float = DEFAULT_ALPHA) -> LocalStencil:
    """
    Builds the local operators :math:`R_i A R_i^T` of :code:`blocks`, with
    Robin rows at artificial boundaries for :attr:`Flavour.ORAS`.
    """
    if alpha < 0:
        raise InvalidInput(f"The Robin parameter must be non-negative, got "
                           f"{alpha}")
    rows = partition.block_rows(blocks)
    cols = partition.block_cols(blocks)
    y = rows[:, :, np.newaxis]
    x = cols[:, np.newaxis, :]
    known = op.mask.known[y, x]
    degree = op.degree[y, x].astype(np.float64)
    unknown = (~known).astype(np.float64)

    # in-image neighbours outside the block, i.e. cut edges
    cuts = np.zeros(known.shape)
    cuts[:, :, 0] += (cols[:, 0] > 0)[:, np.newaxis]
    cuts[:, :, -1] += (cols[:, -1] < partition.width - 1)[:, np.newaxis]
    cuts[:, 0, :] += (rows[:, 0] > 0)[:, np.newaxis]
    cuts[:, -1, :] += (rows[:, -1] < partition.height - 1)[:, np.newaxis]

    robin = 1.0 if flavour is Flavour.RAS else alpha
    centre = np.where(known, 1.0, degree + (robin - 1.0) * cuts)
    return LocalStencil(centre, unknown, known)


def build_local_operator(op: InpaintingOperator,
                         partition: SubdomainPartition, i: int,
                         flavour: Flavour,
                         alpha: float = DEFAULT_ALPHA) -> sp.csr_matrix:
    """
    The local operator of block :code:`i` as a sparse matrix over the block
    pixels in row-major order.

    For :attr:`Flavour.RAS` this is :math:`R_i A R_i^T`: global stencil rows
    clipped to the block, true image borders keep their reflecting
    treatment. For :attr:`Flavour.ORAS` the centre weight of an unknown
    pixel on the artificial boundary becomes
    :math:`d - 1 + \\alpha` per cut edge, where :math:`d` is its global
    centre weight. :math:`\\alpha = 1` gives back RAS and :math:`\\alpha = 0`
    a Neumann cut.
    """
    partition.check_index(i)
    return local_stencils(op, partition, [i], flavour, alpha).to_sparse(0)


def local_dtype(cfg: SolverConfig):
    """float32 for loose local tolerances, float64 otherwise."""
    if cfg.tolerance >= SINGLE_PRECISION_TOLERANCE:
        return np.float32
    return np.float64


def local_corrections(stencil: LocalStencil, r_blocks: np.ndarray,
                      cfg: SolverConfig
                      ) -> Tuple[np.ndarray, BatchSolveReport]:
    """
    Solves the local problems :math:`M_i v_i = R_i r` of a batch of blocks
    with zero initial guess.

    Known rows are identity rows, so :math:`v` equals :math:`r` there; the
    unknowns are found by CG on the reduced, symmetric positive definite
    part of each local operator. The reduced vectors keep the block layout
    with zeros at known pixels, so the stencil applies to them unchanged.
    CG runs in the precision :func:`local_dtype` picks for :code:`cfg`; the
    right-hand side and the result are float64.

    Parameters
    ----------
    stencil
        Local operators of the batch
    r_blocks
        Restricted residuals, shape (channels, k, bh, bw)
    cfg
        Local stopping criterion

    Returns
    -------
    (v, report)
        Local corrections, shaped like :code:`r_blocks`, and the outcome of
        every (channel, block) solve
    """
    known = stencil.known
    rhs = r_blocks - stencil.apply(np.where(known, r_blocks, 0.0))
    rhs[..., known] = 0.0
    shape = rhs.shape
    flat_shape = shape[:-2] + (shape[-2] * shape[-1],)

    dtype = local_dtype(cfg)
    reduced = stencil.astype(dtype)
    scratch = np.empty(shape, dtype=dtype)

    def matvec(x: np.ndarray) -> np.ndarray:
        return reduced.apply(x.reshape(shape), scratch).reshape(flat_shape)

    x, report = cg_solve_many(matvec, rhs.reshape(flat_shape), None, cfg,
                              dtype=dtype)
    return np.where(known, r_blocks, x.reshape(shape)), report


def chunk_size(n_blocks: int, threads: int, batch_blocks: int) -> int:
    """
    Blocks per batched solve: enough chunks to give every worker
    :data:`CHUNKS_PER_THREAD` of them, no fewer than :data:`MIN_CHUNK_BLOCKS`
    blocks each and never more than :code:`batch_blocks`.
    """
    share = math.ceil(n_blocks / (CHUNKS_PER_THREAD * max(threads, 1)))
    return max(1, min(batch_blocks, max(MIN_CHUNK_BLOCKS, share)))


class LocalProblems:
    """
    The local operators of a partition, prepared once per solve and split
    into chunks of blocks that are solved together (see :func:`chunk_size`).
    """

    def __init__(self, op: InpaintingOperator, partition: SubdomainPartition,
                 flavour: Flavour, alpha: float = DEFAULT_ALPHA,
                 batch_blocks: int = DEFAULT_BATCH_BLOCKS, threads: int = 1):
        if batch_blocks < 1:
            raise InvalidInput(f"batch_blocks must be at least 1, got "
                               f"{batch_blocks}")
        if partition.width != op.mask.width or \
                partition.height != op.mask.height:
            raise InvalidInput(f"Partition of {partition.width}x"
                               f"{partition.height} doesn't match mask of "
                               f"{op.mask.width}x{op.mask.height}")
        self.partition = partition
        self.flavour = flavour
        self.alpha = alpha
        size = chunk_size(len(partition), threads, batch_blocks)
        self.chunks = [np.arange(start, min(start + size, len(partition)))
                       for start in range(0, len(partition), size)]
        log.debug('%d blocks in %d chunk(s) of up to %d', len(partition),
                  len(self.chunks), size)
        self.stencils = [local_stencils(op, partition, chunk, flavour, alpha)
                         for chunk in self.chunks]
        self.owned = [partition.owned_mask(chunk) for chunk in self.chunks]
        self.targets = [partition.global_index(chunk)[owned]
                        for chunk, owned in zip(self.chunks, self.owned)]

    def corrections(self, residual: np.ndarray, cfg: SolverConfig,
                    pool=None) -> Tuple[np.ndarray, int]:
        """
        Computes :math:`\\sum_i R_i^T D_i v_i` for the residual (shape
        (channels, N)).

        Returns
        -------
        (delta, failures)
            The global update and the number of local solves that missed
            their tolerance
        """
        partition = self.partition
        grid = residual.reshape(residual.shape[:-1] +
                                (partition.height, partition.width))
        delta = np.empty_like(residual)

        def solve(j: int) -> int:
            r_blocks = partition.gather(grid, self.chunks[j])
            v, report = local_corrections(self.stencils[j], r_blocks, cfg)
            # owned pixels of different blocks are disjoint
            delta[..., self.targets[j]] = v[..., self.owned[j]]
            return report.failures

        failures = map_blocks(solve, range(len(self.chunks)), pool)
        return delta, int(sum(failures))


@dataclass
class SchwarzConfig:
    """
    Outer and local parameters of a Schwarz solve.

    Attributes
    ----------
    tolerance
        Outer relative residual target
    block_size, overlap
        Partition geometry
    flavour
        RAS or ORAS local problems
    alpha
        Robin parameter of ORAS
    local
        Stopping criterion of the local CG solves
    max_outer_iterations
        Outer iteration cap
    residual_norm
        Normaliser of the outer relative residual
    threads
        Worker count, resolved with :func:`parallel.resolve_threads`
    batch_blocks
        Upper bound on the blocks solved together in one batched CG
    """

    tolerance: float = 1e-3
    block_size: int = 32
    overlap: int = 6
    flavour: Flavour = Flavour.ORAS
    alpha: float = DEFAULT_ALPHA
    local: SolverConfig = field(
        default_factory=lambda: SolverConfig(tolerance=1e-2,
                                             max_iterations=30,
                                             residual_check_interval=30))
    max_outer_iterations: int = 500
    residual_norm: ResidualNorm = ResidualNorm.INITIAL
    threads: Optional[int] = None
    batch_blocks: int = DEFAULT_BATCH_BLOCKS

    def __post_init__(self):
        check_geometry(self.block_size, self.overlap)
        if not self.tolerance > 0:
            raise InvalidInput(f"Tolerance must be positive, got "
                               f"{self.tolerance}")
        if self.max_outer_iterations < 1:
            raise InvalidInput('max_outer_iterations must be at least 1, got '
                               f"{self.max_outer_iterations}")
        if self.alpha < 0:
            raise InvalidInput(f"The Robin parameter must be non-negative, "
                               f"got {self.alpha}")
        if self.batch_blocks < 1:
            raise InvalidInput(f"batch_blocks must be at least 1, got "
                               f"{self.batch_blocks}")


@dataclass
class SchwarzState:
    """
    Iterate of the outer Schwarz iteration.

    Attributes
    ----------
    u
        Current iterate, shape (channels, N)
    iteration
        Outer iterations done
    residual
        :math:`b - A u` recomputed from :code:`u`
    trace
        Convergence record
    r0_norm
        Normaliser of the relative residual
    clock_start
        :func:`time.perf_counter` value trace times are measured from
    width, height
        Image size
    reference
        Ground truth for PSNR rows, if any
    """

    u: np.ndarray
    iteration: int
    residual: np.ndarray
    trace: ConvergenceTrace
    r0_norm: float
    clock_start: float
    width: int
    height: int
    reference: Optional[ImageBuffer] = None

    @property
    def relative_residual(self) -> float:
        if self.r0_norm == 0:
            return 0.0
        return float(np.linalg.norm(self.residual) / self.r0_norm)

    def image(self) -> ImageBuffer:
        return ImageBuffer.from_vectors(self.u, self.width, self.height)

    def record(self, local_failures: int = 0):
        elapsed = 1000.0 * (time.perf_counter() - self.clock_start)
        measured = None
        if self.reference is not None:
            tic = time.perf_counter()
            measured = psnr(self.image(), self.reference)
            # PSNR rows stay off the clock
            self.clock_start += time.perf_counter() - tic
        self.trace.append(self.iteration, elapsed, self.relative_residual,
                          measured, local_failures)


def schwarz_iterate(state: SchwarzState, op: InpaintingOperator,
                    b: np.ndarray, partition: SubdomainPartition,
                    flavour: Flavour, local_cfg: SolverConfig,
                    alpha: float = DEFAULT_ALPHA,
                    problems: Optional[LocalProblems] = None,
                    pool=None) -> SchwarzState:
    """
    One outer iteration: solves the local problems for the current residual,
    applies :math:`u \\leftarrow u + \\sum_i R_i^T D_i v_i`, recomputes the
    true residual and appends a trace row. Local solves that miss their
    tolerance are counted in the trace; the iteration carries on regardless.

    Parameters
    ----------
    state
        Iterate, updated in place and returned
    op
        The inpainting operator
    b
        Right-hand side, shape (channels, N)
    partition
        Block layout
    flavour
        RAS or ORAS
    local_cfg
        Stopping criterion of the local solves
    alpha
        Robin parameter for ORAS
    problems
        Prepared local operators, built from the arguments above if
        :code:`None`
    pool
        Worker pool from :func:`parallel.worker_pool`
    """
    if problems is None:
        problems = LocalProblems(op, partition, flavour, alpha)
    delta, failures = problems.corrections(state.residual, local_cfg, pool)
    state.u = state.u + delta
    state.residual = b - op.apply(state.u)
    state.iteration += 1
    state.record(failures)
    log.debug('%s iteration %d: relative residual %.3e, %d local solve(s) '
              'unconverged', flavour.name, state.iteration,
              state.relative_residual, failures)
    return state


def solve_schwarz(f: ImageBuffer, mask: InpaintingMask,
                  partition: Optional[SubdomainPartition] = None,
                  config: Optional[SchwarzConfig] = None,
                  u0: Optional[np.ndarray] = None,
                  r0_norm: Optional[float] = None,
                  reference: Optional[ImageBuffer] = None,
                  clock_start: Optional[float] = None
                  ) -> Tuple[ImageBuffer, ConvergenceTrace]:
    """
    Runs Schwarz iterations until the relative residual drops to
    :code:`config.tolerance` or :code:`config.max_outer_iterations` is
    reached. Hitting the cap isn't an error: the trace then has
    :code:`converged` unset.

    Parameters
    ----------
    f
        Image carrying the known values
    mask
        Inpainting mask
    partition
        Block layout; built from :code:`config` if :code:`None`
    config
        Solver parameters
    u0
        Initial iterate, shape (channels, N); zero if :code:`None`
    r0_norm
        Normaliser of the relative residual; the residual norm of
        :code:`u0` (or :math:`\\|b\\|`, following
        :code:`config.residual_norm`) if :code:`None`
    reference
        Ground truth to measure PSNR against in the trace
    clock_start
        :func:`time.perf_counter` value trace times are measured from

    Returns
    -------
    (image, trace)
        The reconstruction and its convergence trace
    """
    start = time.perf_counter() if clock_start is None else clock_start
    config = SchwarzConfig() if config is None else config
    mask.check_matches(f)
    if partition is None:
        partition = partition_domain(f.width, f.height, config.block_size,
                                     config.overlap)

    op = InpaintingOperator(mask)
    b = build_rhs(f.vectors(), mask)
    if u0 is None:
        u = np.zeros_like(b)
    else:
        u = np.array(u0, dtype=np.float64)
        if u.shape != b.shape:
            raise InvalidInput(f"u0 has shape {u.shape}, expected {b.shape}")
    residual = b - op.apply(u)

    if r0_norm is None:
        if config.residual_norm is ResidualNorm.RHS:
            r0_norm = float(np.linalg.norm(b))
        else:
            r0_norm = float(np.linalg.norm(residual))

    state = SchwarzState(u, 0, residual, ConvergenceTrace(), r0_norm, start,
                         f.width, f.height, reference)
    state.record()
    if state.relative_residual <= config.tolerance:
        state.trace.converged = True
        return state.image(), state.trace

    threads = resolve_threads(config.threads)
    problems = LocalProblems(op, partition, config.flavour, config.alpha,
                             config.batch_blocks, threads)
    with worker_pool(threads) as pool:
        while state.iteration < config.max_outer_iterations:
            schwarz_iterate(state, op, b, partition, config.flavour,
                            config.local, config.alpha, problems, pool)
            rel = state.relative_residual
            if rel <= config.tolerance:
                state.trace.converged = True
                break
            if not math.isfinite(rel):
                log.warning('%s diverged at iteration %d',
                            config.flavour.name, state.iteration)
                break

    if not state.trace.converged:
        log.warning('%s stopped after %d iterations at relative residual '
                    '%.3e', config.flavour.name, state.iteration,
                    state.relative_residual)
    return state.image(), state.trace
