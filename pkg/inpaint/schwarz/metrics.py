"""
Reconstruction quality and convergence bookkeeping.

PSNR is measured on the 0-255 scale with the MSE averaged over all channels,
on unquantised values, so it reflects solver accuracy rather than file
round-trips.
"""

import csv
import math

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from inpaint.schwarz.core import ImageBuffer, InpaintingError, InvalidInput

EXACT_PSNR = math.inf
EXACT_LABEL = 'exact'
TRACE_HEADER = ['iter', 'time_ms', 'rel_residual', 'psnr']


def _check_pair(u: ImageBuffer, f: ImageBuffer):
    if (u.channels, u.height, u.width) != (f.channels, f.height, f.width):
        raise InvalidInput(f"Can't compare a {u.channels}x{u.width}x"
                           f"{u.height} image with a {f.channels}x{f.width}x"
                           f"{f.height} image")


def mse_per_channel(u: ImageBuffer, f: ImageBuffer) -> List[float]:
    """
    The mean square error of every channel on the 0-255 scale.

    Raises
    ------
    InvalidInput
        If the images differ in size or channel count
    """
    _check_pair(u, f)
    difference = 255.0 * u.data - 255.0 * f.data
    return [float(x) for x in np.mean(difference ** 2, axis=(1, 2))]


def psnr_from_mse(mse: float) -> float:
    if mse == 0.0:
        return EXACT_PSNR
    return 10.0 * math.log10(255.0 ** 2 / mse)


def psnr(u: ImageBuffer, f: ImageBuffer) -> float:
    """
    Peak signal-to-noise ratio in dB. Identical images give
    :data:`EXACT_PSNR`.

    Raises
    ------
    InvalidInput
        If the images differ in size or channel count
    """
    return psnr_from_mse(float(np.mean(mse_per_channel(u, f))))


def format_psnr(value: Optional[float]) -> str:
    if value is None:
        return ''
    if math.isinf(value):
        return EXACT_LABEL
    return f"{value:.6f}"


def _parse_psnr(cell: str) -> Optional[float]:
    if cell == '':
        return None
    if cell == EXACT_LABEL:
        return EXACT_PSNR
    return float(cell)


@dataclass
class TraceRow:
    iteration: int
    time_ms: float
    rel_residual: float
    psnr: Optional[float] = None


@dataclass
class ConvergenceTrace:
    """
    Per outer iteration record of a solve. Row 0 is the initial iterate.

    Attributes
    ----------
    rows
        Trace rows; iterations strictly increase and times never decrease
    converged
        Whether the solver reached its tolerance
    local_failures
        Number of local solves that missed their tolerance, per row
    """

    rows: List[TraceRow] = field(default_factory=list)
    converged: bool = False
    local_failures: List[int] = field(default_factory=list)

    def append(self, iteration: int, time_ms: float, rel_residual: float,
               psnr_db: Optional[float] = None, local_failures: int = 0):
        """
        Raises
        ------
        InvalidInput
            If the row would break the ordering of the trace
        """
        if self.rows:
            last = self.rows[-1]
            if iteration <= last.iteration:
                raise InvalidInput(f"Trace iterations must increase, got "
                                   f"{iteration} after {last.iteration}")
            time_ms = max(time_ms, last.time_ms)
        self.rows.append(TraceRow(iteration, time_ms, rel_residual, psnr_db))
        self.local_failures.append(local_failures)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def iterations(self) -> int:
        return self.rows[-1].iteration if self.rows else 0

    @property
    def final_relative_residual(self) -> float:
        return self.rows[-1].rel_residual if self.rows else math.nan

    @property
    def final_psnr(self) -> Optional[float]:
        return self.rows[-1].psnr if self.rows else None

    @property
    def elapsed_ms(self) -> float:
        return self.rows[-1].time_ms if self.rows else 0.0

    def _first_below(self, tolerance: float) -> Optional[TraceRow]:
        for row in self.rows:
            if row.rel_residual <= tolerance:
                return row
        return None

    def iterations_to(self, tolerance: float) -> Optional[int]:
        row = self._first_below(tolerance)
        return None if row is None else row.iteration

    def time_to(self, tolerance: float) -> Optional[float]:
        row = self._first_below(tolerance)
        return None if row is None else row.time_ms

    def psnr_at(self, tolerance: float) -> Optional[float]:
        row = self._first_below(tolerance)
        return None if row is None else row.psnr

    def to_csv(self, path):
        """
        Writes the trace with the header :code:`iter,time_ms,rel_residual,psnr`.
        The PSNR cell is empty when it wasn't measured.
        """
        try:
            with open(path, 'w', encoding='utf8') as output_file:
                csv_writer = csv.writer(output_file, lineterminator='\n')
                csv_writer.writerow(TRACE_HEADER)
                for row in self.rows:
                    csv_writer.writerow([row.iteration,
                                         f"{row.time_ms:.3f}",
                                         repr(row.rel_residual),
                                         format_psnr(row.psnr)])
        except OSError as e:
            raise InpaintingError(f"Unable to write trace {path}: {e}") from e

    @classmethod
    def from_csv(cls, path) -> 'ConvergenceTrace':
        try:
            with open(path, 'r', encoding='utf8') as input_file:
                rows = list(csv.reader(input_file, lineterminator='\n'))
        except OSError as e:
            raise InpaintingError(f"Unable to read trace {path}: {e}") from e

        if not rows or rows[0] != TRACE_HEADER:
            raise InvalidInput(f"{path} is not a convergence trace")
        trace = cls()
        for line, row in enumerate(rows[1:], start=2):
            if len(row) != len(TRACE_HEADER):
                raise InvalidInput(f"{path}:{line}: expected "
                                   f"{len(TRACE_HEADER)} columns, got "
                                   f"{len(row)}")
            try:
                trace.append(int(row[0]), float(row[1]), float(row[2]),
                             _parse_psnr(row[3]))
            except ValueError as e:
                raise InvalidInput(f"{path}:{line}: {e}") from e
        return trace


def sufficient_residual(trace: ConvergenceTrace,
                        tolerance_db: float = 0.01) -> Optional[float]:
    """
    The largest relative residual from which on the PSNR of a trace stays
    within :code:`tolerance_db` of its final PSNR, i.e. how far the solve
    actually had to go to reach its best quality. :code:`None` if the trace
    carries no PSNR.
    """
    measured = [row for row in trace.rows if row.psnr is not None]
    if not measured:
        return None

    final = measured[-1].psnr
    sufficient = measured[-1].rel_residual
    for row in reversed(measured):
        if math.isinf(final):
            close = math.isinf(row.psnr)
        else:
            close = abs(row.psnr - final) <= tolerance_db
        if not close:
            break
        sufficient = row.rel_residual
    return sufficient
