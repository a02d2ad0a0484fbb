"""
The discrete homogeneous diffusion inpainting model.

An image :math:`f` is only known on a subset :math:`K` of its pixels, the
*inpainting mask*. The reconstruction :math:`u` keeps the known values and
satisfies the Laplace equation everywhere else, with reflecting (homogeneous
Neumann) boundary conditions at the image border. Replacing the confidence
function by the diagonal 0/1 matrix :math:`C` and the Laplacian by its 5-point
finite difference approximation :math:`L` gives the linear system

.. math::

    A u = b, \\quad A = C - (I - C) L, \\quad b = C f

Colour images give three systems of this type that share the mask. This
module holds the rasters (:class:`ImageBuffer`, :class:`InpaintingMask`) and
the matrix-free operator (:class:`InpaintingOperator`) everything else is
built on.
"""

from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np
import scipy.sparse as sp


class InpaintingError(Exception):
    """The base class of every error raised by this package.
    """


class InvalidInput(InpaintingError):
    """The exception raised when an input or a configuration is rejected.
    """


class SingularSystem(InpaintingError):
    """The exception raised when a linear system has no unique solution.
    """


class PnmFormatError(InpaintingError):
    """The exception raised when a PNM or PBM file can't be parsed.
    """


TChannelVector = np.ndarray
TImageArray = np.ndarray
TMaskArray = np.ndarray


@dataclass
class ImageBuffer:
    """
    A multi-channel raster of real intensities, stored channel-planar and
    row-major as an array of shape :code:`(channels, height, width)`.

    Attributes
    ----------
    width
        Width in pixels
    height
        Height in pixels
    channels
        Number of channels; 1 (greyscale) or 3 (colour)
    data
        Read-only intensities. Source images lie in [0, 1]; solver iterates
        may leave that range.
    """

    width: int
    height: int
    channels: int
    data: TImageArray

    def __init__(self, data: np.ndarray, source: bool = False):
        """
        Initializes the :class:`ImageBuffer` from a :code:`(height, width)`
        or :code:`(channels, height, width)` array. The array is copied.

        Parameters
        ----------
        data
            Pixel intensities
        source
            If set, the values must be finite and lie in [0, 1]

        Raises
        ------
        InvalidInput
            If the array has the wrong shape or, for source images, invalid
            values
        """
        array = np.array(data, dtype=np.float64)
        if array.ndim == 2:
            array = array[np.newaxis]
        if array.ndim != 3 or array.shape[0] not in (1, 3):
            raise InvalidInput('An image must have shape (height, width) or '
                               f"(channels, height, width) with 1 or 3 "
                               f"channels, got {np.shape(data)}")
        if array.shape[1] < 1 or array.shape[2] < 1:
            raise InvalidInput('An image must have at least one pixel')
        if source:
            if not np.all(np.isfinite(array)):
                raise InvalidInput('Source images must have finite values')
            if array.min() < 0.0 or array.max() > 1.0:
                raise InvalidInput('Source image values must lie in [0, 1]')

        array.flags.writeable = False
        self.channels, self.height, self.width = array.shape
        self.data = array

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, width: int,
                     height: int) -> 'ImageBuffer':
        """Builds an image from per-channel vectors of shape (channels, N).
        """
        vectors = np.asarray(vectors)
        return cls(vectors.reshape(vectors.shape[0], height, width))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def pixels(self) -> int:
        return self.width * self.height

    def vectors(self) -> np.ndarray:
        """The channels as row-major vectors, shape (channels, N)."""
        return self.data.reshape(self.channels, self.pixels)

    def channel(self, index: int) -> TChannelVector:
        return self.vectors()[index]

    def clipped(self) -> 'ImageBuffer':
        return ImageBuffer(np.clip(self.data, 0.0, 1.0))


@dataclass
class InpaintingMask:
    """
    The set of known pixels, i.e. the diagonal of the confidence matrix
    :math:`C`.

    Attributes
    ----------
    width
        Width in pixels
    height
        Height in pixels
    known
        Read-only boolean raster of shape :code:`(height, width)`
    """

    width: int
    height: int
    known: TMaskArray

    def __init__(self, known: np.ndarray):
        """
        Initializes the :class:`InpaintingMask`. The array is copied.

        Raises
        ------
        InvalidInput
            If the raster isn't two dimensional or has no known pixel
        """
        array = np.array(known, dtype=bool)
        if array.ndim != 2 or array.size == 0:
            raise InvalidInput('A mask must be a non-empty (height, width) '
                               f"raster, got shape {np.shape(known)}")
        if not array.any():
            raise InvalidInput('An inpainting mask needs at least one known '
                               'pixel')

        array.flags.writeable = False
        self.height, self.width = array.shape
        self.known = array

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.known))

    @property
    def density(self) -> float:
        return self.count / self.pixels

    def flat(self) -> np.ndarray:
        return self.known.reshape(-1)

    def check_matches(self, image: ImageBuffer):
        """
        Raises
        ------
        InvalidInput
            If the mask and the image differ in size
        """
        if self.shape != image.shape:
            raise InvalidInput(f"Mask of size {self.width}x{self.height} "
                               f"doesn't match image of size "
                               f"{image.width}x{image.height}")


def neighbour_count(height: int, width: int) -> np.ndarray:
    """
    The number of in-image 4-neighbours of every pixel. With reflecting
    boundaries this is the centre weight of the 5-point stencil.
    """
    degree = np.full((height, width), 4, dtype=np.int64)
    degree[0, :] -= 1
    degree[-1, :] -= 1
    degree[:, 0] -= 1
    degree[:, -1] -= 1
    return degree


def neighbour_pairs(height: int,
                    width: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Yields :code:`(pixel, neighbour)` flat index arrays for the four stencil
    directions, covering every ordered pair of in-image 4-neighbours once.
    """
    index = np.arange(height * width).reshape(height, width)
    yield index[:, 1:].ravel(), index[:, :-1].ravel()
    yield index[:, :-1].ravel(), index[:, 1:].ravel()
    yield index[1:, :].ravel(), index[:-1, :].ravel()
    yield index[:-1, :].ravel(), index[1:, :].ravel()


class InpaintingOperator:
    """
    Matrix-free application of :math:`A = C - (I - C) L` for one mask.

    Rows at known pixels are identity rows. Rows at unknown pixels equal
    :math:`-(L u)_i`, where out-of-image neighbours take the value of the
    centre pixel. The operator holds no mutable state, so any number of
    workers may apply it concurrently.
    """

    def __init__(self, mask: InpaintingMask):
        self.mask = mask
        self.degree = neighbour_count(mask.height, mask.width)

    @property
    def size(self) -> int:
        return self.mask.pixels

    def _check(self, vector: np.ndarray, name: str):
        if vector.ndim < 1 or vector.shape[-1] != self.size:
            raise InvalidInput(f"{name} has length {vector.shape[-1:]} but the "
                               f"mask has {self.size} pixels")

    def apply(self, u: np.ndarray) -> np.ndarray:
        """
        Computes :math:`A u` for a vector of length N, or for a stack of
        vectors of shape (..., N).

        Raises
        ------
        InvalidInput
            On a dimension mismatch
        """
        u = np.asarray(u, dtype=np.float64)
        self._check(u, 'u')
        grid = u.reshape(u.shape[:-1] + self.mask.shape)
        pad = [(0, 0)] * (grid.ndim - 2) + [(1, 1), (1, 1)]
        padded = np.pad(grid, pad, mode='edge')
        laplacian = (padded[..., :-2, 1:-1] + padded[..., 2:, 1:-1] +
                     padded[..., 1:-1, :-2] + padded[..., 1:-1, 2:] -
                     4.0 * grid)
        return np.where(self.mask.known, grid, -laplacian).reshape(u.shape)

    def assemble(self) -> sp.csr_matrix:
        """The operator as an explicit sparse matrix."""
        return assemble_operator(self.mask)


def assemble_operator(mask: InpaintingMask) -> sp.csr_matrix:
    """
    Assembles :math:`A` explicitly. Used for reduced global systems and as a
    dense oracle on small images.
    """
    n = mask.pixels
    known = mask.flat()
    rows, cols = [], []
    for pixel, neighbour in neighbour_pairs(mask.height, mask.width):
        unknown_rows = ~known[pixel]
        rows.append(pixel[unknown_rows])
        cols.append(neighbour[unknown_rows])

    row = np.concatenate(rows)
    col = np.concatenate(cols)
    coupling = sp.coo_matrix((-np.ones(len(row)), (row, col)), shape=(n, n))
    centre = np.where(known, 1.0,
                      neighbour_count(mask.height, mask.width).reshape(-1))
    return (sp.diags(centre) + coupling).tocsr()


def apply_operator(op: InpaintingOperator, u: TChannelVector) -> TChannelVector:
    """
    Computes :math:`A u`.

    Raises
    ------
    InvalidInput
        On a dimension mismatch
    """
    return op.apply(u)


def build_rhs(f: TChannelVector, mask: InpaintingMask) -> TChannelVector:
    """
    Computes :math:`b = C f`: the known values, zero elsewhere. Accepts a
    single channel vector or a stack of shape (..., N).

    Raises
    ------
    InvalidInput
        On a dimension mismatch
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim < 1 or f.shape[-1] != mask.pixels:
        raise InvalidInput(f"f has length {f.shape[-1:]} but the mask has "
                           f"{mask.pixels} pixels")
    return np.where(mask.flat(), f, 0.0)


def residual(op: InpaintingOperator, u: TChannelVector,
             b: TChannelVector) -> TChannelVector:
    """
    Computes :math:`r = b - A u`.

    Raises
    ------
    InvalidInput
        On a dimension mismatch
    """
    b = np.asarray(b, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if b.shape != u.shape:
        raise InvalidInput(f"u has shape {u.shape} but b has shape {b.shape}")
    return b - op.apply(u)
