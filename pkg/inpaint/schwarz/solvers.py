"""
Conjugate gradients: the global baseline solver and the workhorse of the
local Schwarz problems, plus the stopping logic shared by every method.

CG needs a symmetric positive definite operator. The inpainting matrix
:math:`A` is not symmetric (known rows are identity rows while their columns
still couple to unknown neighbours), so CG always runs on the system reduced
to the unknown pixels: known values move to the right-hand side and what
remains is a Dirichlet Laplacian, which is SPD as soon as every connected
group of unknown pixels touches a known pixel.

:func:`cg_solve_many` runs any number of independent systems in lock step,
one per leading index of the right-hand side, which is how the thousands of
small Schwarz problems are solved with a handful of numpy calls.
"""

import enum
import logging
import time

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.ndimage as ndimage
import scipy.sparse as sp

from inpaint.schwarz.core import (ImageBuffer, InpaintingMask,
                                  InpaintingOperator, InvalidInput,
                                  SingularSystem, TChannelVector, build_rhs)
from inpaint.schwarz.metrics import ConvergenceTrace, psnr

log = logging.getLogger(__name__)

TMatVec = Callable[[np.ndarray], np.ndarray]
TCallback = Callable[[int, np.ndarray, np.ndarray], None]

# curvature p'Ap below this fraction of p'p counts as a breakdown
BREAKDOWN_THRESHOLD = 1e-14


class ResidualNorm(enum.Enum):
    """What a relative residual is measured against."""
    INITIAL = 'initial'
    RHS = 'rhs'


@dataclass
class SolverConfig:
    """
    Stopping criterion of an iterative solve.

    Attributes
    ----------
    tolerance
        Relative residual target
    max_iterations
        Iteration cap
    residual_check_interval
        The residual is recomputed from scratch every that many iterations
        instead of being updated by recurrence
    residual_norm
        Normaliser of the relative residual: the residual of the initial
        iterate, or the norm of the right-hand side
    """

    tolerance: float = 1e-6
    max_iterations: int = 1000
    residual_check_interval: int = 1
    residual_norm: ResidualNorm = ResidualNorm.INITIAL

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidInput(f"Tolerance must be positive, got "
                               f"{self.tolerance}")
        if self.max_iterations < 1:
            raise InvalidInput(f"max_iterations must be at least 1, got "
                               f"{self.max_iterations}")
        if self.residual_check_interval < 1:
            raise InvalidInput('residual_check_interval must be at least 1, '
                               f"got {self.residual_check_interval}")


@dataclass
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool
    breakdown: Optional[str] = None


@dataclass
class BatchSolveReport:
    """Per system outcome of :func:`cg_solve_many`, arrays over the batch."""

    iterations: np.ndarray
    final_relative_residual: np.ndarray
    converged: np.ndarray
    breakdown: np.ndarray

    def __getitem__(self, index) -> SolveReport:
        diagnostic = None
        if self.breakdown[index]:
            diagnostic = 'non-positive curvature (p\'Ap <= 0)'
        return SolveReport(int(self.iterations[index]),
                           float(self.final_relative_residual[index]),
                           bool(self.converged[index]),
                           diagnostic)

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(~self.converged))


def as_matvec(op) -> TMatVec:
    """
    Normalises a linear operator to a function acting on the last axis of
    its argument. Accepts callables, :class:`InpaintingOperator`, dense or
    sparse matrices and scipy :code:`LinearOperator` instances.
    """
    if isinstance(op, InpaintingOperator):
        return op.apply
    if hasattr(op, 'shape') and (hasattr(op, 'dot') or hasattr(op, 'matmat')):
        def matvec(v: np.ndarray) -> np.ndarray:
            if v.ndim == 1:
                return np.asarray(op @ v)
            flat = v.reshape(-1, v.shape[-1])
            return np.asarray(op @ flat.T).T.reshape(v.shape)
        return matvec
    if callable(op):
        return op
    raise InvalidInput(f"Not a linear operator: {type(op).__name__}")


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum('...i,...i->...', a, b)


def _relative(norm: np.ndarray, reference: np.ndarray) -> np.ndarray:
    safe = np.where(reference > 0, reference, 1.0)
    return np.where(reference > 0, norm / safe, 0.0)


def cg_solve_many(op, b: np.ndarray, x0: Optional[np.ndarray],
                  cfg: SolverConfig,
                  r0_norm: Union[None, float, np.ndarray] = None,
                  callback: Optional[TCallback] = None,
                  dtype=np.float64
                  ) -> Tuple[np.ndarray, BatchSolveReport]:
    """
    Conjugate gradients on a batch of independent SPD systems.

    Every leading index of :code:`b` (shape (..., n)) is a separate system
    with its own step sizes and its own stopping test; converged systems are
    frozen while the others continue. Summation order only depends on the
    vector length, so results are bitwise reproducible.

    Parameters
    ----------
    op
        The operator, acting on the last axis (see :func:`as_matvec`)
    b
        Right-hand sides
    x0
        Initial guesses, zero if :code:`None`
    cfg
        Stopping criterion
    r0_norm
        Overrides the normaliser of the relative residual
    callback
        Called as :code:`callback(k, x, rel)` after iteration :code:`k`
    dtype
        Floating point type of the iterates; the operator must preserve it

    Returns
    -------
    (x, report)
        The iterates and the per system report. A breakdown (curvature
        :math:`p^T A p \\le 0`) stops that system without raising.
    """
    matvec = as_matvec(op)
    b = np.asarray(b, dtype=dtype)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=dtype)
        if x.shape != b.shape:
            raise InvalidInput(f"x0 has shape {x.shape} but b has shape "
                               f"{b.shape}")
        r = b - matvec(x)

    rr = _dot(r, r)
    if r0_norm is not None:
        reference = np.broadcast_to(np.asarray(r0_norm, dtype=np.float64),
                                    rr.shape)
    elif cfg.residual_norm is ResidualNorm.RHS:
        reference = np.sqrt(_dot(b, b))
        reference = np.where(reference > 0, reference, np.sqrt(rr))
    else:
        reference = np.sqrt(rr)

    rel = _relative(np.sqrt(rr), reference)
    active = rel > cfg.tolerance
    iterations = np.zeros(rr.shape, dtype=np.int64)
    breakdown = np.zeros(rr.shape, dtype=bool)
    final = rel.copy()
    p = r.copy()
    step = np.empty_like(b)

    k = 0
    while active.any() and k < cfg.max_iterations:
        k += 1
        ap = matvec(p)
        pap = _dot(p, ap)
        broken = active & ~(pap > BREAKDOWN_THRESHOLD * _dot(p, p))
        if broken.any():
            breakdown |= broken
            active &= ~broken
            log.debug('CG breakdown in %d system(s) at iteration %d',
                      int(broken.sum()), k)

        alpha = np.where(active, rr / np.where(active, pap, 1.0), 0.0)
        x += np.multiply(alpha[..., np.newaxis], p, out=step)
        if k % cfg.residual_check_interval == 0:
            np.subtract(b, matvec(x), out=r)
        else:
            r -= np.multiply(alpha[..., np.newaxis], ap, out=step)

        rr_next = _dot(r, r)
        rel = _relative(np.sqrt(rr_next), reference)
        final = np.where(active, rel, final)
        iterations = np.where(active, k, iterations)

        beta = np.where(active, rr_next / np.where(rr > 0, rr, 1.0), 0.0)
        p *= beta[..., np.newaxis]
        p += r
        rr = rr_next
        active &= rel > cfg.tolerance

        if callback is not None:
            callback(k, x, rel)

    converged = (final <= cfg.tolerance) & ~breakdown
    return x, BatchSolveReport(iterations, final, converged, breakdown)


def cg_solve(op, b: TChannelVector, x0: Optional[TChannelVector],
             cfg: SolverConfig, r0_norm: Optional[float] = None,
             callback: Optional[Callable[[int, np.ndarray, float], None]] = None
             ) -> Tuple[TChannelVector, SolveReport]:
    """
    Conjugate gradients on one SPD system. Stops once
    :math:`\\|b - A x\\| / \\|b - A x_0\\|` drops to :code:`cfg.tolerance` or
    after :code:`cfg.max_iterations` iterations.

    See Also
    --------
    cg_solve_many : Which does the work
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise InvalidInput(f"cg_solve takes a single vector, got shape "
                           f"{b.shape}")
    x0_batch = None if x0 is None else np.asarray(x0)[np.newaxis]
    matvec = as_matvec(op)

    def batch_matvec(v: np.ndarray) -> np.ndarray:
        return matvec(v[0])[np.newaxis]

    batch_callback = None
    if callback is not None:
        def batch_callback(k, x, rel):
            callback(k, x[0], float(rel[0]))

    x, report = cg_solve_many(batch_matvec, b[np.newaxis], x0_batch, cfg,
                              r0_norm=r0_norm, callback=batch_callback)
    return x[0], report[0]


@dataclass
class ReducedSystem:
    """
    The inpainting system restricted to its unknown pixels.

    Attributes
    ----------
    matrix
        Dirichlet Laplacian on the unknown pixels, SPD
    rhs
        Right-hand side(s), shape (..., n_unknown)
    unknowns
        Flat pixel index of every reduced unknown
    known
        Boolean known-pixel indicator over all N pixels
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    unknowns: np.ndarray
    known: np.ndarray

    def embed(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Re-inserts the known values :math:`b_K = f_K` around :code:`x`."""
        u = np.array(b, dtype=np.float64)
        u[..., self.unknowns] = x
        return u


_FOUR_NEIGHBOURS = ndimage.generate_binary_structure(2, 1)


def check_dirichlet_contact(mask: InpaintingMask):
    """
    Raises
    ------
    SingularSystem
        If a connected group of unknown pixels has no known neighbour
    """
    unknown = ~mask.known
    labels, count = ndimage.label(unknown, structure=_FOUR_NEIGHBOURS)
    if count == 0:
        return
    touching = ndimage.binary_dilation(mask.known,
                                       structure=_FOUR_NEIGHBOURS) & unknown
    anchored = np.zeros(count + 1, dtype=bool)
    anchored[labels[touching]] = True
    if not anchored[1:].all():
        isolated = int(np.count_nonzero(~anchored[1:]))
        raise SingularSystem(f"{isolated} group(s) of unknown pixels have no "
                             'known neighbour; the inpainting problem has no '
                             'unique solution')


def reduce_to_unknowns(op: InpaintingOperator,
                       b: np.ndarray) -> ReducedSystem:
    """
    Eliminates the known pixels (:math:`u_i = f_i`) and moves their couplings
    to the right-hand side.

    Parameters
    ----------
    op
        The inpainting operator
    b
        The right-hand side :math:`C f`, shape (N,) or (channels, N)

    Returns
    -------
    reduced
        The reduced system; empty when every pixel is known

    Raises
    ------
    SingularSystem
        If some unknown pixels can't reach a known pixel
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape[-1] != op.size:
        raise InvalidInput(f"b has length {b.shape[-1]} but the mask has "
                           f"{op.size} pixels")
    check_dirichlet_contact(op.mask)

    known = op.mask.flat()
    unknowns = np.flatnonzero(~known)
    matrix = op.assemble()
    unknown_rows = matrix[unknowns]
    reduced = unknown_rows[:, unknowns].tocsr()
    coupling = unknown_rows[:, known]

    known_values = b[..., known]
    shifted = np.asarray(coupling @ known_values.reshape(-1, known.sum()).T).T
    rhs = b[..., unknowns] - shifted.reshape(b.shape[:-1] + (len(unknowns),))
    return ReducedSystem(reduced, rhs, unknowns, known)


def relative_residual(op: InpaintingOperator, u: np.ndarray, b: np.ndarray,
                      r0_norm: float) -> float:
    """
    :math:`\\|b - A u\\|_2` divided by :code:`r0_norm`, the residual norm of
    the initial iterate. Multi-channel inputs are measured over the
    concatenation of all channels. A zero :code:`r0_norm` means the problem
    was solved from the start and gives 0.
    """
    if r0_norm < 0:
        raise InvalidInput(f"r0_norm must be non-negative, got {r0_norm}")
    if r0_norm == 0:
        return 0.0
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(b - op.apply(u)) / r0_norm)


def solve_cg(f: ImageBuffer, mask: InpaintingMask, cfg: SolverConfig,
             u0: Optional[np.ndarray] = None,
             r0_norm: Optional[float] = None,
             reference: Optional[ImageBuffer] = None,
             clock_start: Optional[float] = None
             ) -> Tuple[ImageBuffer, ConvergenceTrace]:
    """
    The global CG baseline: solves all channels of the inpainting problem at
    once as one block diagonal reduced system, so step sizes and the
    stopping test use norms over the concatenation of the channels.

    Parameters
    ----------
    f
        Image carrying the known values
    mask
        Inpainting mask
    cfg
        Stopping criterion
    u0
        Initial guess, shape (channels, N); zero if :code:`None`. Known
        pixels are always set to their values.
    r0_norm
        Normaliser of the relative residual. Defaults to the residual of
        :code:`u0`, or :math:`\\|b\\|` (the residual of the zero iterate)
        when there is no :code:`u0` or :code:`cfg.residual_norm` asks for it.
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
    mask.check_matches(f)
    op = InpaintingOperator(mask)
    b = build_rhs(f.vectors(), mask)
    system = reduce_to_unknowns(op, b)
    channels, n_unknown = system.rhs.shape

    x0 = None
    if u0 is not None:
        x0 = np.asarray(u0, dtype=np.float64)[..., system.unknowns].ravel()

    if r0_norm is None:
        if u0 is None or cfg.residual_norm is ResidualNorm.RHS:
            # the zero iterate, before the known values are inserted
            r0_norm = float(np.linalg.norm(b))
        else:
            initial = system.embed(x0.reshape(channels, n_unknown), b)
            r0_norm = float(np.linalg.norm(b - op.apply(initial)))

    def image_of(x: np.ndarray) -> ImageBuffer:
        return ImageBuffer.from_vectors(
            system.embed(x.reshape(channels, n_unknown), b), f.width, f.height)

    def elapsed_ms() -> float:
        return 1000.0 * (time.perf_counter() - start)

    def measured_psnr(x: np.ndarray) -> Optional[float]:
        nonlocal start
        if reference is None:
            return None
        tic = time.perf_counter()
        value = psnr(image_of(x), reference)
        # PSNR rows stay off the clock
        start += time.perf_counter() - tic
        return value

    trace = ConvergenceTrace()
    initial_x = np.zeros(channels * n_unknown) if x0 is None else x0
    initial_rel = relative_residual(op, system.embed(
        initial_x.reshape(channels, n_unknown), b), b, r0_norm)
    elapsed = elapsed_ms()
    trace.append(0, elapsed, initial_rel, measured_psnr(initial_x))
    if n_unknown == 0 or initial_rel <= cfg.tolerance:
        trace.converged = True
        return image_of(initial_x), trace

    matrix = system.matrix

    def matvec(v: np.ndarray) -> np.ndarray:
        stacked = v.reshape(channels, n_unknown)
        return np.asarray(matrix @ stacked.T).T.reshape(v.shape)

    def record(k: int, x: np.ndarray, rel: float):
        elapsed = elapsed_ms()
        trace.append(k, elapsed, rel, measured_psnr(x))
        log.debug('CG iteration %d: relative residual %.3e', k, rel)

    x, report = cg_solve(matvec, system.rhs.ravel(), x0, cfg,
                         r0_norm=r0_norm, callback=record)
    trace.converged = report.converged
    if report.breakdown:
        log.warning('CG stopped after %d iterations: %s', report.iterations,
                    report.breakdown)
    elif not report.converged:
        log.warning('CG reached %d iterations at relative residual %.3e',
                    report.iterations, report.final_relative_residual)
    return image_of(x), trace
